// fgvc: ingest -> project -> embed -> fuse -> eval / classify.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgvc/embedding.hpp"
#include "fgvc/error.hpp"
#include "fgvc/eval.hpp"
#include "fgvc/fusion.hpp"
#include "fgvc/knn.hpp"
#include "fgvc/metrics.hpp"
#include "fgvc/pointcloud.hpp"
#include "fgvc/projection.hpp"
#include "fgvc/provenance.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw fgvc::IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const std::string& p) { return p.empty() ? fs::path() : fs::absolute(p).lexically_normal(); }

std::vector<std::string> split_list(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string root;
  std::string out;
  std::string name;
  std::string extension = ".ply";
};

int cmd_ingest(const IngestArgs& a) {
  const fs::path out = resolve(a.out);
  auto manifest = fgvc::build_manifest(resolve(a.root), {a.extension}, a.name);
  manifest = fgvc::rebase_manifest(std::move(manifest), resolve(a.root), out.parent_path());
  fgvc::write_file_atomic(out, fgvc::manifest_to_json(manifest));
  std::cout << "manifest '" << manifest.name << "': " << manifest.view_count() << " views, "
            << manifest.category_count() << " categories -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ProjectArgs {
  std::string manifest;
  std::string out;
  int image_size = 224;
  double margin = 0.05;
  std::string axis_policy = "pca_largest_face";
  std::string fill = "none";
  bool all_axes = false;
  int jobs = 1;
};

fgvc::ProjectionConfig projection_config(const ProjectArgs& a) {
  fgvc::ProjectionConfig c;
  c.image_size = a.image_size;
  c.margin = a.margin;
  c.axis_policy = fgvc::parse_axis_policy(a.axis_policy);
  c.fill_policy = fgvc::parse_fill_policy(a.fill);
  c.validate();
  return c;
}

json projection_config_json(const fgvc::ProjectionConfig& c, bool all_axes) {
  return {{"image_size", c.image_size},
          {"margin", c.margin},
          {"axis_policy", fgvc::to_string(c.axis_policy)},
          {"fill", fgvc::to_string(c.fill_policy)},
          {"axes", all_axes ? json::array({0, 1, 2}) : json::array({fgvc::kLargestFaceAxis})}};
}

int cmd_project(const ProjectArgs& a) {
  const fs::path manifest_path = resolve(a.manifest);
  const fs::path out_dir = resolve(a.out);
  const auto config = projection_config(a);
  const auto manifest = fgvc::read_manifest(manifest_path);
  fs::create_directories(out_dir);

  json cfg = projection_config_json(config, a.all_axes);
  const std::string hash = fgvc::config_hash(
      {{"stage", "project"}, {"config", cfg}, {"manifest", fgvc::sha256_hex(fgvc::manifest_to_json(manifest))}});

  const std::size_t n = manifest.entries.size();
  std::vector<std::vector<fgvc::ProjectionMeta>> metas(n);
  parallel_for(n, a.jobs, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    auto view = fgvc::load_entry(e, manifest_path.parent_path());
    fgvc::admit_view(view);
    std::vector<fgvc::ProjectedPair> pairs;
    if (a.all_axes)
      pairs = fgvc::project_all(view, config);
    else
      pairs.push_back(fgvc::project(view, fgvc::kLargestFaceAxis, config));
    for (const auto& p : pairs) {
      fgvc::write_png(p.rgb, out_dir / fgvc::projection_filename(e.instance, e.view, p.meta.axis, false));
      fgvc::write_png(p.depth, out_dir / fgvc::projection_filename(e.instance, e.view, p.meta.axis, true));
      metas[i].push_back(p.meta);
    }
  });

  json index;
  index["config_hash"] = hash;
  index["config"] = cfg;
  index["manifest"] = manifest_path.lexically_relative(out_dir).generic_string();
  index["entries"] = json::array();
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = manifest.entries[i];
    for (const auto& m : metas[i]) {
      if (m.frame_fell_back) {
        ++fallbacks;
        std::cerr << "warning: " << e.instance << "#" << e.view << ": degenerate geometry, projected with fixed_z\n";
      }
      index["entries"].push_back({{"category", e.category},
                                  {"instance", e.instance},
                                  {"view", e.view},
                                  {"axis", m.axis},
                                  {"rgb", fgvc::projection_filename(e.instance, e.view, m.axis, false)},
                                  {"depth", fgvc::projection_filename(e.instance, e.view, m.axis, true)},
                                  {"frame", fgvc::to_string(m.frame_policy)},
                                  {"fell_back", m.frame_fell_back},
                                  {"extents", {m.extents.x(), m.extents.y(), m.extents.z()}}});
    }
  }
  fgvc::write_file_atomic(out_dir / "projections.json", index.dump(2) + "\n");
  std::cout << "projected " << n << " views (" << fallbacks << " fixed_z fallbacks) -> " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EmbedArgs {
  std::string index;
  std::string images;
  std::string modality = "rgb";
  int axis = fgvc::kLargestFaceAxis;
  std::string backend_cmd;
  std::string encoder_id;
  std::int64_t expected_dim = 0;
  std::string out;
  bool no_cache = false;
  int jobs = 1;
};

int cmd_embed(const EmbedArgs& a) {
  if (a.index.empty() == a.images.empty()) throw fgvc::InvalidArgument("pass exactly one of --index or --images");
  const auto modality = fgvc::parse_modality(a.modality);
  if (modality == fgvc::Modality::Rgbd) throw fgvc::InvalidArgument("embed takes --modality rgb or depth");

  std::vector<fgvc::ImageInput> inputs;
  std::string upstream;
  if (!a.index.empty()) {
    const fs::path index_path = resolve(a.index);
    json index;
    try {
      index = json::parse(read_text(index_path));
    } catch (const json::exception& e) {
      throw fgvc::FormatError(index_path.string() + ": " + e.what());
    }
    upstream = index.value("config_hash", "");
    for (const auto& e : index.at("entries")) {
      if (e.at("axis").get<int>() != a.axis) continue;
      const std::string file = e.at(modality == fgvc::Modality::Rgb ? "rgb" : "depth").get<std::string>();
      inputs.push_back({index_path.parent_path() / file, {e.at("instance").get<std::string>(), e.at("view").get<std::int64_t>()}});
    }
    if (inputs.empty()) throw fgvc::InvalidArgument("projection index has no images for axis " + std::to_string(a.axis));
  } else {
    const fs::path list = resolve(a.images);
    std::istringstream lines(read_text(list));
    std::string line;
    std::int64_t i = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      fs::path p = line;
      if (p.is_relative()) p = list.parent_path() / p;
      inputs.push_back({p, {fs::path(line).stem().string(), i++}});
    }
  }

  auto backend = fgvc::BackendDescriptor::from_command(
      a.backend_cmd, a.encoder_id, a.expected_dim > 0 ? std::optional<std::int64_t>(a.expected_dim) : std::nullopt);
  std::optional<fgvc::EmbeddingCache> cache;
  if (!a.no_cache) cache.emplace(fgvc::EmbeddingCache::default_dir());

  fgvc::BackendOptions opts;
  opts.modality = modality;
  opts.cache = cache ? &*cache : nullptr;
  opts.jobs = a.jobs;
  opts.config_hash = fgvc::config_hash({{"stage", "embed"},
                                        {"encoder_id", a.encoder_id},
                                        {"command", a.backend_cmd},
                                        {"modality", a.modality},
                                        {"axis", a.axis},
                                        {"upstream", upstream}});
  fgvc::BackendStats stats;
  auto m = fgvc::run_backend(backend, inputs, opts, &stats);
  m.provenance["axis"] = std::to_string(a.axis);
  const fs::path out = resolve(a.out);
  fgvc::write_embeddings(m, out);
  std::cout << "embedded " << m.size() << " images (" << stats.cache_hits << " cached, " << stats.invocations
            << " backend runs), dim " << m.dim() << " -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct FuseArgs {
  std::string spec;
  std::string op;
  std::string name = "fused";
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_fuse(const FuseArgs& a) {
  std::map<fgvc::Branch, fgvc::EmbeddingMatrix> matrices;
  std::vector<fgvc::Branch> order;
  json input_hashes = json::array();
  for (const auto& in : a.inputs) {
    auto m = fgvc::read_embeddings(resolve(in));
    fgvc::Branch b{m.encoder_id, m.modality};
    if (matrices.count(b)) throw fgvc::InvalidArgument("two inputs provide branch " + fgvc::to_string(b));
    order.push_back(b);
    input_hashes.push_back(m.config_hash);
    matrices.emplace(b, std::move(m));
  }

  fgvc::PipelineSpec spec;
  if (!a.spec.empty()) {
    spec = fgvc::spec_from_json(read_text(resolve(a.spec)));
  } else {
    spec.name = a.name;
    spec.branches = order;
  }
  if (!a.op.empty()) spec.fusion = fgvc::parse_fusion_op(a.op);
  spec.validate();

  auto result = fgvc::fuse_dataset(spec, matrices);
  for (std::size_t i = 0; i < result.events.size(); ++i) {
    std::cerr << "warning: " << result.events[i].message << "\n";
    result.fused.provenance["fallback" + (i ? std::to_string(i) : std::string())] = result.events[i].message;
  }
  result.fused.config_hash = fgvc::config_hash(
      {{"stage", "fuse"}, {"spec", json::parse(fgvc::spec_to_json(spec))}, {"inputs", input_hashes}});
  const fs::path out = resolve(a.out);
  fgvc::write_embeddings(result.fused, out);
  std::cout << "fused " << spec.branches.size() << " branches with " << fgvc::to_string(result.applied) << ": "
            << result.fused.size() << " x " << result.fused.dim() << " -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string femb;
  std::string manifest;
  std::vector<std::string> metrics{"motyka"};
  std::vector<int> ks{1};
  int folds = 10;
  std::uint64_t seed = 42;
  bool no_stratify = false;
  bool instance_folds = false;
  std::string out;
  std::string table;
  int jobs = 1;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<fgvc::MetricKind> metrics;
  for (const auto& name : split_list(a.metrics)) metrics.push_back(fgvc::parse_metric(name));
  if (metrics.empty()) throw fgvc::InvalidArgument("--metric is empty");
  for (int k : a.ks)
    if (k < 1) throw fgvc::InvalidArgument("--k must be positive");

  const auto embeddings = fgvc::read_embeddings(resolve(a.femb));
  const auto manifest = fgvc::read_manifest(resolve(a.manifest));
  const auto plan = fgvc::make_folds(manifest, a.seed, a.folds, !a.no_stratify,
                                     a.instance_folds ? fgvc::FoldLevel::Instance : fgvc::FoldLevel::View);

  fgvc::CrossValidationOptions opts;
  opts.jobs = a.jobs;
  for (const auto& [key, value] : embeddings.provenance)
    if (key.starts_with("fallback")) opts.fallback_events.push_back(value);

  std::vector<fgvc::EvalReport> reports;
  for (auto kind : metrics) {
    for (int k : a.ks) {
      fgvc::Metric metric{kind};
      auto report = fgvc::cross_validate(embeddings, plan, metric, k, opts);
      report.config.config_hash = fgvc::config_hash({{"stage", "eval"},
                                                     {"embeddings", embeddings.config_hash},
                                                     {"metric", fgvc::to_string(kind)},
                                                     {"k", k},
                                                     {"folds", a.folds},
                                                     {"seed", a.seed},
                                                     {"stratified", !a.no_stratify},
                                                     {"fold_level", a.instance_folds ? "instance" : "view"}});
      reports.push_back(std::move(report));
    }
  }

  const std::string table = fgvc::reports_table(reports);
  std::cout << table;
  if (!a.out.empty()) {
    std::string text;
    if (reports.size() == 1) {
      text = reports.front().to_json();
    } else {
      json arr = json::array();
      for (const auto& r : reports) arr.push_back(json::parse(r.to_json()));
      text = arr.dump(2) + "\n";
    }
    fgvc::write_file_atomic(resolve(a.out), text);
  }
  if (!a.table.empty()) fgvc::write_file_atomic(resolve(a.table), table);
  return 0;
}

// ---------------------------------------------------------------------------

struct ClassifyArgs {
  std::string index;
  std::string train;
  std::string manifest;
  std::string metric = "motyka";
  int k = 1;
  std::string save_index;
  std::string query;
  std::string spec;
  std::vector<std::string> backend_cmds;
  std::string encoder_id;
  std::string modality = "rgb";
  ProjectArgs projection;
  std::string out;
};

// "encoder=command" entries, or one bare command for --encoder-id.
std::map<std::string, std::string> backend_table(const ClassifyArgs& a) {
  std::map<std::string, std::string> out;
  for (const auto& entry : a.backend_cmds) {
    auto eq = entry.find('=');
    auto space = entry.find(' ');
    if (eq != std::string::npos && (space == std::string::npos || eq < space))
      out[entry.substr(0, eq)] = entry.substr(eq + 1);
    else if (!a.encoder_id.empty())
      out[a.encoder_id] = entry;
    else
      throw fgvc::InvalidArgument("--backend-cmd '" + entry + "' needs an 'encoder=' prefix or --encoder-id");
  }
  return out;
}

fgvc::EmbeddingMatrix embed_one(const std::string& encoder, const std::map<std::string, std::string>& backends,
                                const fs::path& image, fgvc::Modality modality) {
  auto it = backends.find(encoder);
  if (it == backends.end()) throw fgvc::InvalidArgument("no --backend-cmd for encoder '" + encoder + "'");
  auto backend = fgvc::BackendDescriptor::from_command(it->second, encoder);
  fgvc::EmbeddingCache cache(fgvc::EmbeddingCache::default_dir());
  fgvc::BackendOptions opts;
  opts.modality = modality;
  opts.cache = &cache;
  std::vector<fgvc::ImageInput> in{{image, {"query", 0}}};
  return fgvc::run_backend(backend, in, opts);
}

int cmd_classify(const ClassifyArgs& a) {
  std::optional<fgvc::KnnIndex> index;
  if (!a.index.empty()) {
    index.emplace(fgvc::KnnIndex::load(resolve(a.index)));
  } else {
    if (a.train.empty() || a.manifest.empty())
      throw fgvc::InvalidArgument("pass --index, or --train together with --manifest");
    auto train = fgvc::read_embeddings(resolve(a.train));
    const auto manifest = fgvc::read_manifest(resolve(a.manifest));
    std::map<fgvc::RowId, std::string> category;
    for (const auto& e : manifest.entries) category[{e.instance, e.view}] = e.category;
    std::vector<std::string> labels;
    for (const auto& id : train.row_ids) {
      auto it = category.find(id);
      if (it == category.end()) throw fgvc::AlignmentError("row " + fgvc::to_string(id) + " is not in the manifest", {fgvc::to_string(id)});
      labels.push_back(it->second);
    }
    index.emplace(fgvc::KnnIndex::build(std::move(train), std::move(labels), {fgvc::parse_metric(a.metric)}, a.k));
    if (!a.save_index.empty()) index->save(resolve(a.save_index));
  }
  if (a.query.empty()) {
    std::cout << "index: " << index->train().size() << " rows, metric " << fgvc::to_string(index->metric().kind)
              << ", k=" << index->k() << "\n";
    return 0;
  }

  const fs::path query = resolve(a.query);
  const std::string ext = query.extension().string();
  fgvc::EmbeddingMatrix queries;
  if (ext == ".femb") {
    queries = fgvc::read_embeddings(query);
  } else if (ext == ".png") {
    const auto backends = backend_table(a);
    if (backends.size() != 1) throw fgvc::InvalidArgument("an image query needs exactly one --backend-cmd");
    queries = embed_one(backends.begin()->first, backends, query, fgvc::parse_modality(a.modality));
  } else if (ext == ".ply") {
    const auto backends = backend_table(a);
    auto view = fgvc::load_view(query);
    view.instance_id = "query";
    fgvc::admit_view(view);
    const auto pair = fgvc::project(view, fgvc::kLargestFaceAxis, projection_config(a.projection));
    const fs::path tmp = fs::temp_directory_path() / ("fgvc-query-" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    const fs::path rgb = tmp / "query_rgb.png", depth = tmp / "query_depth.png";
    fgvc::write_png(pair.rgb, rgb);
    fgvc::write_png(pair.depth, depth);
    try {
      if (!a.spec.empty()) {
        const auto spec = fgvc::spec_from_json(read_text(resolve(a.spec)));
        std::map<fgvc::Branch, fgvc::EmbeddingMatrix> parts;
        for (const auto& b : spec.branches)
          parts.emplace(b, embed_one(b.encoder_id, backends, b.modality == fgvc::Modality::Depth ? depth : rgb, b.modality));
        auto fused = fgvc::fuse_dataset(spec, parts);
        for (const auto& ev : fused.events) std::cerr << "warning: " << ev.message << "\n";
        queries = std::move(fused.fused);
      } else {
        if (backends.size() != 1) throw fgvc::InvalidArgument("a cloud query without --spec needs one --backend-cmd");
        const auto modality = fgvc::parse_modality(a.modality);
        queries = embed_one(backends.begin()->first, backends, modality == fgvc::Modality::Depth ? depth : rgb, modality);
      }
    } catch (...) {
      fs::remove_all(tmp);
      throw;
    }
    fs::remove_all(tmp);
  } else {
    throw fgvc::InvalidArgument("query must be a .femb, .png or .ply file");
  }

  const auto predictions = index->classify_batch(queries);
  json out = json::array();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    std::cout << fgvc::to_string(queries.row_ids[i]) << " -> " << p.label << "\n";
    json neighbors = json::array();
    for (const auto& nb : p.neighbors) {
      std::cout << "    " << fgvc::to_string(nb.row_id) << "  " << index->labels()[static_cast<std::size_t>(nb.row)]
                << "  " << nb.distance << "\n";
      neighbors.push_back({{"instance", nb.row_id.instance},
                           {"view", nb.row_id.view},
                           {"label", index->labels()[static_cast<std::size_t>(nb.row)]},
                           {"distance", nb.distance}});
    }
    out.push_back({{"query", fgvc::to_string(queries.row_ids[i])}, {"label", p.label}, {"neighbors", neighbors}});
  }
  if (!a.out.empty()) fgvc::write_file_atomic(resolve(a.out), out.dump(2) + "\n");
  return 0;
}

// Fills options of `sub` that were not given on the command line from the
// JSON object in `path`. Keys are long option names without dashes.
void merge_config(CLI::App* sub, const std::string& path) {
  json cfg;
  try {
    cfg = json::parse(read_text(resolve(path)));
  } catch (const json::exception& e) {
    throw fgvc::InvalidArgument("--config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw fgvc::InvalidArgument("--config must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw fgvc::InvalidArgument("--config key '" + key + "' is not an option of '" + sub->get_name() + "'");
    if (opt->count() > 0) continue;
    std::vector<std::string> values;
    if (value.is_array()) {
      for (const auto& v : value) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      values.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
    for (const auto& v : values) opt->add_result(v);
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal fine-grained 3D object recognition pipeline"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config_path;
  int jobs = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with option defaults; explicit flags win");
    sub->add_option("--jobs", jobs, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  };

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "build a dataset manifest from <category>/<instance>/<view>.ply");
  s_ingest->add_option("root", ingest.root, "dataset root directory")->required();
  s_ingest->add_option("--out", ingest.out, "manifest JSON to write")->required();
  s_ingest->add_option("--name", ingest.name, "dataset name (default: root directory name)");
  s_ingest->add_option("--ext", ingest.extension, "view file extension");
  add_common(s_ingest);

  ProjectArgs project;
  auto add_projection_flags = [](CLI::App* sub, ProjectArgs& p) {
    sub->add_option("--image-size", p.image_size, "square image size in pixels");
    sub->add_option("--margin", p.margin, "margin as a fraction of the largest planar extent");
    sub->add_option("--axis-policy", p.axis_policy, "pca_largest_face | fixed_z");
    sub->add_option("--fill", p.fill, "hole filling: none | nearest_neighbor");
  };
  auto* s_project = app.add_subcommand("project", "render orthographic RGB and depth images for every view");
  s_project->add_option("--manifest", project.manifest, "dataset manifest")->required();
  s_project->add_option("--out", project.out, "output directory for images and projections.json")->required();
  add_projection_flags(s_project, project);
  s_project->add_flag("--all-axes", project.all_axes, "render all three object-frame axes");
  add_common(s_project);

  EmbedArgs embed;
  auto* s_embed = app.add_subcommand("embed", "run an encoder backend over projected images");
  s_embed->add_option("--index", embed.index, "projections.json written by 'project'");
  s_embed->add_option("--images", embed.images, "text file with one image path per line");
  s_embed->add_option("--modality", embed.modality, "rgb | depth");
  s_embed->add_option("--axis", embed.axis, "projection axis to embed")->check(CLI::Range(0, 2));
  s_embed->add_option("--backend-cmd", embed.backend_cmd, "backend command; '{input} {output}' appended if absent")->required();
  s_embed->add_option("--encoder-id", embed.encoder_id, "encoder identifier, e.g. mae or densenet")->required();
  s_embed->add_option("--expected-dim", embed.expected_dim, "expected embedding dimension (0 = any)");
  s_embed->add_option("--out", embed.out, "FGEMB file to write")->required();
  s_embed->add_flag("--no-cache", embed.no_cache, "bypass the embedding cache ($FGVC_CACHE_DIR)");
  add_common(s_embed);

  FuseArgs fuse;
  auto* s_fuse = app.add_subcommand("fuse", "fuse per-branch embeddings into one matrix");
  s_fuse->add_option("inputs", fuse.inputs, "FGEMB files, one per branch")->required()->expected(2, -1);
  s_fuse->add_option("--spec", fuse.spec, "pipeline spec JSON (default: inputs in order)");
  s_fuse->add_option("--op", fuse.op, "average | max | append (overrides the spec)");
  s_fuse->add_option("--name", fuse.name, "pipeline name when no spec is given");
  s_fuse->add_option("--out", fuse.out, "FGEMB file to write")->required();
  add_common(s_fuse);

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "k-fold cross-validation of a kNN classifier");
  s_eval->add_option("femb", eval.femb, "embeddings to evaluate")->required();
  s_eval->add_option("--manifest", eval.manifest, "dataset manifest with the labels")->required();
  s_eval->add_option("--metric", eval.metrics, "distance function(s); several give a grid");
  s_eval->add_option("--k", eval.ks, "neighbour count(s); several give a grid");
  s_eval->add_option("--folds", eval.folds, "fold count")->check(CLI::Range(2, 1000000));
  s_eval->add_option("--seed", eval.seed, "fold assignment seed");
  s_eval->add_flag("--no-stratify", eval.no_stratify, "do not balance categories across folds");
  s_eval->add_flag("--instance-folds", eval.instance_folds, "keep all views of an instance in one fold");
  s_eval->add_option("--out", eval.out, "report JSON to write");
  s_eval->add_option("--table", eval.table, "plain-text table to write");
  add_common(s_eval);

  ClassifyArgs classify;
  auto* s_classify = app.add_subcommand("classify", "classify query embeddings, images or clouds");
  s_classify->add_option("--index", classify.index, "saved index (FGEMB with .labels.json sidecar)");
  s_classify->add_option("--train", classify.train, "training embeddings (with --manifest)");
  s_classify->add_option("--manifest", classify.manifest, "manifest with training labels");
  s_classify->add_option("--metric", classify.metric, "distance function when building from --train");
  s_classify->add_option("--k", classify.k, "neighbour count when building from --train");
  s_classify->add_option("--save-index", classify.save_index, "write the built index here");
  s_classify->add_option("--query", classify.query, ".femb rows, a .png image or a .ply cloud");
  s_classify->add_option("--spec", classify.spec, "pipeline spec for cloud queries");
  s_classify->add_option("--backend-cmd", classify.backend_cmds, "encoder=command, repeatable");
  s_classify->add_option("--encoder-id", classify.encoder_id, "encoder for a bare --backend-cmd");
  s_classify->add_option("--modality", classify.modality, "modality of an image query");
  add_projection_flags(s_classify, classify.projection);
  s_classify->add_option("--out", classify.out, "predictions JSON to write");
  add_common(s_classify);

  try {
    app.parse(argc, argv);
    CLI::App* active = app.get_subcommands().front();
    if (!config_path.empty()) merge_config(active, config_path);

    if (active == s_ingest) return cmd_ingest(ingest);
    if (active == s_project) {
      project.jobs = jobs;
      return cmd_project(project);
    }
    if (active == s_embed) {
      embed.jobs = jobs;
      return cmd_embed(embed);
    }
    if (active == s_fuse) return cmd_fuse(fuse);
    if (active == s_eval) {
      eval.jobs = jobs;
      return cmd_eval(eval);
    }
    if (active == s_classify) return cmd_classify(classify);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(fgvc::ErrorClass::Usage);
  } catch (const fgvc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
