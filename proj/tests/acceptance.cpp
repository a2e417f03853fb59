// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "fgvc/error.hpp"
#include "fgvc/eval.hpp"
#include "fgvc/fusion.hpp"
#include "fgvc/knn.hpp"
#include "fgvc/metrics.hpp"
#include "fgvc/projection.hpp"
#include "fgvc/random.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace fgvc;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

struct Criterion {
  const char* name;
  double budget_seconds;  ///< 0 = no runtime bound
  std::function<Outcome()> check;
};

// ---------------------------------------------------------------------------

Outcome metric_invariants() {
  Outcome out;
  Rng rng(2024);
  const std::size_t dims[] = {2, 64, 768, 1920};
  std::size_t pairs = 0;
  for (std::size_t dim : dims) {
    for (int trial = 0; trial < 2500 && out.pass; ++trial, ++pairs) {
      // Mix scales so that the simplex mapping sees both tiny and large spreads.
      const double scale = std::pow(10.0, rng.uniform(-3, 3));
      const auto p = oracle::random_vector(rng, dim, -scale, scale);
      const auto q = oracle::random_vector(rng, dim, -scale, scale);
      const Eigen::VectorXd ep = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(dim));
      const Eigen::VectorXd eq = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(dim));
      for (auto kind : kAllMetrics) {
        const Metric m{kind};
        const double pq = distance(m, ep, eq);
        const double qp = distance(m, eq, ep);
        const double pp = distance(m, ep, ep);
        const std::string where = to_string(kind) + " dim " + std::to_string(dim) + " pair " + std::to_string(trial);
        if (!std::isfinite(pq) || pq < 0.0) out.fail("non-negativity: " + where);
        if (is_symmetric(kind) && pq != qp) out.fail("symmetry: " + where);
        if (std::abs(pp - self_distance(kind)) > 1e-6) out.fail("identity: " + where);
        if (pq != oracle::distance(kind, p, q)) out.fail("scalar oracle: " + where);
      }
    }
  }
  out.detail = out.pass ? std::to_string(pairs) + " pairs x 9 metrics" : out.detail;
  return out;
}

// ---------------------------------------------------------------------------

Outcome knn_oracle() {
  Outcome out;
  Rng rng(77);
  std::size_t queries_checked = 0, distance_ties = 0, vote_ties = 0;
  for (int inst = 0; inst < 200 && out.pass; ++inst) {
    const MetricKind kind = kAllMetrics[static_cast<std::size_t>(inst) % kAllMetrics.size()];
    const int k = std::array{1, 3, 5}[rng.below(3)];
    const int n_train = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(101 - k)));
    const int n_query = 1 + static_cast<int>(rng.below(50));
    // Every other instance lives on a coarse integer grid with repeated rows,
    // which forces equal distances and split votes.
    const bool tied = inst % 2 == 1;
    const int dim = tied ? 2 + static_cast<int>(rng.below(3)) : 2 + static_cast<int>(rng.below(40));
    const int classes = tied ? 2 + static_cast<int>(rng.below(2)) : 2 + static_cast<int>(rng.below(6));

    auto draw = [&]() {
      std::vector<float> v(static_cast<std::size_t>(dim));
      do {
        for (auto& x : v) x = tied ? static_cast<float>(rng.below(3)) : static_cast<float>(rng.uniform(-1, 1));
      } while (kind == MetricKind::Pearson && std::all_of(v.begin(), v.end(), [&](float x) { return x == v[0]; }));
      return v;
    };

    EmbeddingMatrix train;
    train.rows.resize(n_train, dim);
    std::vector<std::string> labels;
    std::vector<std::vector<double>> oracle_rows;
    for (int r = 0; r < n_train; ++r) {
      std::vector<float> v;
      if (tied && r > 0 && rng.below(3) == 0) {
        const auto& copy = oracle_rows[rng.below(static_cast<std::uint64_t>(r))];
        v.assign(copy.begin(), copy.end());
      } else {
        v = draw();
      }
      for (int c = 0; c < dim; ++c) train.rows(r, c) = v[static_cast<std::size_t>(c)];
      train.row_ids.push_back({"train" + std::to_string(r), 0});
      labels.push_back("class" + std::to_string(rng.below(static_cast<std::uint64_t>(classes))));
      oracle_rows.emplace_back(v.begin(), v.end());
    }
    RowMatrix<float> queries(n_query, dim);
    for (int q = 0; q < n_query; ++q) {
      const auto v = draw();
      for (int c = 0; c < dim; ++c) queries(q, c) = v[static_cast<std::size_t>(c)];
    }

    const auto index = KnnIndex::build(train, labels, Metric{kind}, k);
    const auto got = index.classify_batch(queries, 1 + static_cast<int>(rng.below(4)));
    for (int q = 0; q < n_query && out.pass; ++q, ++queries_checked) {
      const std::vector<double> query(queries.row(q).data(), queries.row(q).data() + dim);
      const auto want = oracle::brute_force_knn(oracle_rows, labels, query, kind, k);
      const std::string where = "instance " + std::to_string(inst) + " (" + to_string(kind) + ", k=" +
                                std::to_string(k) + ") query " + std::to_string(q);
      if (got[q].label != want.label) out.fail("label differs at " + where);
      if (got[q].neighbors.size() != want.neighbors.size()) out.fail("neighbour count differs at " + where);
      for (std::size_t n = 0; n < want.neighbors.size() && out.pass; ++n) {
        if (got[q].neighbors[n].row != static_cast<Eigen::Index>(want.neighbors[n].row) ||
            got[q].neighbors[n].distance != want.neighbors[n].distance)
          out.fail("neighbour " + std::to_string(n) + " differs at " + where);
      }
      for (std::size_t n = 1; n < want.neighbors.size(); ++n)
        distance_ties += want.neighbors[n].distance == want.neighbors[n - 1].distance;
      std::map<std::string, int> votes;
      for (const auto& nb : want.neighbors) ++votes[labels[nb.row]];
      int best = 0, at_best = 0;
      for (const auto& [l, v] : votes) best = std::max(best, v);
      for (const auto& [l, v] : votes) at_best += v == best;
      vote_ties += at_best > 1;
    }
  }
  if (out.pass && (distance_ties == 0 || vote_ties == 0)) out.fail("the generated instances contained no ties");
  if (out.pass)
    out.detail = std::to_string(queries_checked) + " queries, " + std::to_string(distance_ties) + " distance ties, " +
                 std::to_string(vote_ties) + " vote ties";
  return out;
}

// ---------------------------------------------------------------------------

std::size_t foreground(const Image& depth) {
  return static_cast<std::size_t>(std::count_if(depth.pixels.begin(), depth.pixels.end(), [](auto p) { return p; }));
}

Outcome projection_invariants() {
  Outcome out;
  std::ostringstream detail;

  // Translation: grid-aligned coordinates and offsets keep float addition exact.
  for (auto shape : {FixtureShape::Box, FixtureShape::Cylinder, FixtureShape::Sphere}) {
    auto base = generate_fixture(shape, 3000, {40, 80, 120}, 11, Eigen::Vector3d(0.3, 0.2, 0.1));
    base.points = (base.points.array() * 4096.0f).round() / 4096.0f;
    for (const Eigen::Vector3f& offset : {Eigen::Vector3f(3.5f, -7.25f, 12.0f), Eigen::Vector3f(-100.0f, 0.125f, 2.0f)}) {
      auto moved = base;
      moved.points.colwise() += offset;
      for (auto policy : {AxisPolicy::PcaLargestFace, AxisPolicy::FixedZ}) {
        ProjectionConfig config;
        config.axis_policy = policy;
        const auto a = project_all(base, config);
        const auto b = project_all(moved, config);
        for (int axis = 0; axis < 3; ++axis)
          if (!(a[axis].rgb == b[axis].rgb) || !(a[axis].depth == b[axis].depth))
            out.fail("translation changed the images (axis " + std::to_string(axis) + ")");
      }
    }
  }

  // Scale: foreground pixels may differ only at pixel boundaries.
  double worst_scale = 0.0;
  for (auto shape : {FixtureShape::Box, FixtureShape::Cylinder, FixtureShape::Sphere}) {
    const auto base = generate_fixture(shape, 5000, {}, 4, Eigen::Vector3d(0.3, 0.2, 0.5));
    for (float s : {2.0f, 3.7f, 0.013f, 250.0f}) {
      auto scaled = base;
      scaled.points *= s;
      const auto a = project_all(base, ProjectionConfig{});
      const auto b = project_all(scaled, ProjectionConfig{});
      for (int axis = 0; axis < 3; ++axis) {
        std::size_t differ = 0;
        for (std::size_t i = 0; i < a[axis].depth.pixels.size(); ++i)
          differ += (a[axis].depth.pixels[i] != 0) != (b[axis].depth.pixels[i] != 0);
        const double frac = static_cast<double>(differ) / static_cast<double>(foreground(a[axis].depth));
        worst_scale = std::max(worst_scale, frac);
      }
    }
  }
  if (worst_scale > 0.01) out.fail("scaling changed " + std::to_string(100 * worst_scale) + "% of foreground");
  detail << "scale diff <= " << 100 * worst_scale << "%";

  // Single point.
  {
    PointCloudView one;
    one.points = Points3(3, 1);
    one.points << 1.5f, -2.0f, 0.25f;
    one.colors = Colors3::Constant(3, 1, 9);
    const auto p = project(one, kLargestFaceAxis, ProjectionConfig{});
    if (foreground(p.depth) != 1 || p.depth.at(112, 112) != 255) out.fail("single point not a centred 255 pixel");
  }

  // Sphere symmetry.
  {
    const auto sphere = generate_fixture(FixtureShape::Sphere, 200000, {}, 5);
    ProjectionConfig config;
    config.image_size = 64;
    const auto pairs = project_all(sphere, config);
    // Near the rim one pixel spans many depth levels; compare the inner 90%.
    const double radius = config.image_size / (2.0 * (1.0 + 2.0 * config.margin));
    const double centre = config.image_size / 2.0;
    int worst = 0;
    for (int axis = 1; axis < 3; ++axis) {
      const double f0 = static_cast<double>(foreground(pairs[0].depth));
      const double fa = static_cast<double>(foreground(pairs[axis].depth));
      if (std::abs(f0 - fa) > 0.02 * f0) out.fail("sphere foreground differs between axes 0 and " + std::to_string(axis));
      for (int r = 0; r < config.image_size; ++r)
        for (int c = 0; c < config.image_size; ++c) {
          if (std::hypot(r + 0.5 - centre, c + 0.5 - centre) > 0.9 * radius) continue;
          const int d0 = pairs[0].depth.at(r, c), da = pairs[axis].depth.at(r, c);
          if (d0 && da) worst = std::max(worst, std::abs(d0 - da));
        }
    }
    if (worst > 12) out.fail("sphere depth differs by " + std::to_string(worst) + " levels between axes");
    detail << ", sphere max level diff " << worst;
  }

  // Reference rasterizer on the unit box, seed 7.
  {
    const auto box = generate_fixture(FixtureShape::Box, 2000, {90, 90, 90}, 7);
    ProjectionConfig config;
    config.axis_policy = AxisPolicy::FixedZ;
    const auto p = project(box, 2, config);
    const auto want = oracle::rasterize_fixed_z(box, config.image_size, config.margin);
    std::array<std::size_t, 256> hist{};
    for (auto px : p.depth.pixels)
      if (px) ++hist[px];
    if (foreground(p.depth) != want.foreground || hist != want.depth_histogram)
      out.fail("box rasterization differs from the reference rasterizer");
    detail << ", box foreground " << want.foreground;
  }
  if (out.pass) out.detail = detail.str();
  return out;
}

// ---------------------------------------------------------------------------

Outcome fusion_laws() {
  Outcome out;
  Rng rng(31);
  std::size_t fallbacks = 0;
  for (int trial = 0; trial < 2000 && out.pass; ++trial) {
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(2048));
    const std::size_t count = 2 + rng.below(4);
    std::vector<Eigen::VectorXf> vs;
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::VectorXf v(dim);
      for (Eigen::Index d = 0; d < dim; ++d) v[d] = static_cast<float>(rng.uniform(-1e3, 1e3));
      vs.push_back(v);
    }
    const std::vector<Eigen::VectorXf> same(count, vs[0]);
    if (fuse<float>(same, FusionOp::Average) != vs[0] || fuse<float>(same, FusionOp::Max) != vs[0])
      out.fail("idempotence fails at dim " + std::to_string(dim));

    if (fuse<float>(vs, FusionOp::Average).size() != dim || fuse<float>(vs, FusionOp::Max).size() != dim ||
        fuse<float>(vs, FusionOp::Append).size() != dim * static_cast<Eigen::Index>(count))
      out.fail("dimension law fails at dim " + std::to_string(dim));

    auto shuffled = vs;
    rng.shuffle(shuffled.begin(), shuffled.end());
    if (fuse<float>(vs, FusionOp::Average) != fuse<float>(shuffled, FusionOp::Average) ||
        fuse<float>(vs, FusionOp::Max) != fuse<float>(shuffled, FusionOp::Max))
      out.fail("reordering changed avg/max at dim " + std::to_string(dim));

    // Unequal branch dims: avg/max must fall back to append and log it.
    if (trial % 10 == 0) {
      const auto d1 = static_cast<int>(1 + rng.below(64)), d2 = d1 + static_cast<int>(1 + rng.below(64));
      const std::vector<RowId> ids{{"a", 0}, {"b", 1}, {"c", 2}};
      std::map<Branch, EmbeddingMatrix> in;
      const auto spec = approach_one("vit", "cnn", trial % 20 ? FusionOp::Average : FusionOp::Max);
      for (std::size_t b = 0; b < 2; ++b) {
        EmbeddingMatrix m;
        m.encoder_id = spec.branches[b].encoder_id;
        m.modality = spec.branches[b].modality;
        m.row_ids = ids;
        m.rows = RowMatrix<float>::Constant(3, b ? d2 : d1, static_cast<float>(b));
        in[spec.branches[b]] = m;
      }
      const auto r = fuse_dataset(spec, in);
      if (r.applied != FusionOp::Append || r.events.size() != 1 || r.fused.dim() != d1 + d2 ||
          r.fused.provenance.at("fusion") != "append")
        out.fail("unequal dims did not fall back to a logged append");
      ++fallbacks;
    }
  }
  if (out.pass) out.detail = "2000 random cases, " + std::to_string(fallbacks) + " logged fallbacks";
  return out;
}

// ---------------------------------------------------------------------------

Outcome end_to_end_determinism() {
  Outcome out;
  testing::ScratchDir scratch("fgvc-accept");
  const auto one = testing::run_pipeline(scratch / "jobs1", 1);
  const auto eight = testing::run_pipeline(scratch / "jobs8", 8);
  for (const auto* r : {&one, &eight})
    if (r->status != 0) {
      out.fail(r->dir.filename().string() + ": step '" + r->failed_step + "' exited " + std::to_string(r->status));
      return out;
    }
  std::size_t compared = 0;
  for (const char* f : {"manifest.json", "proj/projections.json", "rgb.femb", "depth.femb", "fused.femb"}) {
    ++compared;
    if (testing::read_bytes(one.dir / f) != testing::read_bytes(eight.dir / f))
      out.fail(std::string(f) + " differs between --jobs 1 and --jobs 8");
  }
  for (const auto& entry : std::filesystem::directory_iterator(one.dir / "proj")) {
    if (entry.path().extension() != ".png") continue;
    ++compared;
    if (testing::read_bytes(entry.path()) != testing::read_bytes(eight.dir / "proj" / entry.path().filename()))
      out.fail(entry.path().filename().string() + " differs between --jobs 1 and --jobs 8");
  }
  ++compared;
  if (testing::report_without_timings(one.dir / "report.json") !=
      testing::report_without_timings(eight.dir / "report.json"))
    out.fail("report JSON differs between --jobs 1 and --jobs 8");
  if (out.pass) out.detail = std::to_string(compared) + " artifacts byte-identical";
  return out;
}

// ---------------------------------------------------------------------------

DatasetManifest balanced(int categories, int per_category) {
  DatasetManifest m;
  for (int c = 0; c < categories; ++c) {
    char name[16];
    std::snprintf(name, sizeof name, "cat%02d", c);
    m.categories.push_back(name);
    for (int v = 0; v < per_category; ++v)
      m.entries.push_back({std::string(name) + "/" + std::to_string(v), name, std::string(name) + "_" + std::to_string(v / 10), v});
  }
  return m;
}

Outcome cv_sanity() {
  Outcome out;
  std::ostringstream detail;

  {
    const auto m = balanced(12, 30);
    const auto plan = make_folds(m, 42);
    Rng rng(6);
    EmbeddingMatrix emb;
    emb.encoder_id = "orthants";
    emb.row_ids = plan.row_ids;
    emb.rows.resize(static_cast<Eigen::Index>(plan.row_ids.size()), 12);
    for (Eigen::Index r = 0; r < emb.rows.rows(); ++r) {
      const auto c = std::find(m.categories.begin(), m.categories.end(), plan.labels[r]) - m.categories.begin();
      for (Eigen::Index d = 0; d < 12; ++d)
        emb.rows(r, d) = d == c ? static_cast<float>(1.0 + rng.uniform(0, 0.5)) : -1.0f;
    }
    for (auto kind : kAllMetrics) {
      const auto report = cross_validate(emb, plan, Metric{kind}, 1);
      if (report.mean_accuracy != 1.0)
        out.fail("separable data scored " + std::to_string(report.mean_accuracy) + " with " + to_string(kind));
    }
  }

  const auto m = balanced(20, 60);
  detail << "shuffled:";
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto plan = make_folds(m, seed);
    Rng rng(1000 + seed);
    EmbeddingMatrix emb;
    emb.encoder_id = "noise";
    emb.row_ids = plan.row_ids;
    emb.rows.resize(static_cast<Eigen::Index>(plan.row_ids.size()), 32);
    for (Eigen::Index i = 0; i < emb.rows.size(); ++i) emb.rows.data()[i] = static_cast<float>(rng.uniform());
    auto labels = plan.labels;
    rng.shuffle(labels.begin(), labels.end());
    const double acc = cross_validate(emb, labels, plan, Metric{MetricKind::Motyka}, 1).mean_accuracy;
    char buf[16];
    std::snprintf(buf, sizeof buf, " %.4f", acc);
    detail << buf;
    if (acc < 0.03 || acc > 0.08) out.fail("shuffled labels scored " + std::to_string(acc) + " for seed " + std::to_string(seed));
  }
  if (out.pass) out.detail = "separable 1.0 on 9 metrics; " + detail.str();
  return out;
}

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"metric-invariants", 60, metric_invariants},
      {"knn-oracle-equivalence", 120, knn_oracle},
      {"projection-invariants", 60, projection_invariants},
      {"fusion-laws", 30, fusion_laws},
      {"end-to-end-determinism", 0, end_to_end_determinism},
      {"cross-validation-sanity", 0, cv_sanity},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && c.budget_seconds > 0 && seconds > c.budget_seconds)
      o.fail("took " + std::to_string(seconds) + " s, budget " + std::to_string(c.budget_seconds) + " s");
    std::printf("%s %-26s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name, seconds, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
