#include "fgvc/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "fgvc/error.hpp"

namespace fgvc {

namespace {

// Relative eigenvalue floor below which the covariance counts as rank deficient.
constexpr double kRankTolerance = 1e-10;

// Coordinates relative to the first point. Differences of floats are exact in
// double, so everything downstream is unchanged by translating the cloud.
Eigen::Vector3d anchor_of(const Points3& pts) { return pts.col(0).cast<double>(); }

Eigen::Matrix3Xd anchored(const Points3& pts) { return pts.cast<double>().colwise() - anchor_of(pts); }

Eigen::Isometry3d pca_local(const Eigen::Matrix3Xd& local) {
  const Eigen::Vector3d c = local.rowwise().mean();
  const Eigen::Matrix3Xd centered = local.colwise() - c;
  const Eigen::Matrix3d cov = centered * centered.transpose() / static_cast<double>(centered.cols());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  if (solver.info() != Eigen::Success) throw DegenerateGeometry("covariance eigendecomposition failed");
  const Eigen::Vector3d lambda = solver.eigenvalues();  // ascending
  if (!(lambda(2) > 0.0) || lambda(0) <= kRankTolerance * lambda(2))
    throw DegenerateGeometry("point cloud is collinear or coplanar");

  Eigen::Matrix3d axes;
  axes.col(0) = solver.eigenvectors().col(2);
  axes.col(1) = solver.eigenvectors().col(1);
  for (int a = 0; a < 2; ++a) {
    const Eigen::VectorXd proj = centered.transpose() * axes.col(a);
    if (proj.array().cube().sum() < 0.0) axes.col(a) = -axes.col(a);
  }
  axes.col(2) = axes.col(0).cross(axes.col(1));

  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = axes.transpose();
  t.translation() = -(axes.transpose() * c);
  return t;
}

Eigen::Isometry3d centroid_local(const Eigen::Matrix3Xd& local) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = -local.rowwise().mean();
  return t;
}

Eigen::Isometry3d with_anchor(const Eigen::Isometry3d& local, const Eigen::Vector3d& anchor) {
  return local * Eigen::Translation3d(-anchor);
}

struct PlaneAxes {
  int u;
  int v;
};

constexpr PlaneAxes plane_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

struct Pixel {
  int row;
  int col;
};

std::int64_t cross(const Pixel& o, const Pixel& a, const Pixel& b) {
  return static_cast<std::int64_t>(a.col - o.col) * (b.row - o.row) -
         static_cast<std::int64_t>(a.row - o.row) * (b.col - o.col);
}

// Andrew's monotone chain, counter-clockwise in (col, row), collinear points dropped.
std::vector<Pixel> convex_hull(std::vector<Pixel> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pixel& a, const Pixel& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  if (pts.size() < 3) return pts;
  std::vector<Pixel> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_hull(const std::vector<Pixel>& hull, const Pixel& p) {
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < 0) return false;
  return true;
}

// Fills background pixels inside the foreground hull from the nearest original
// foreground pixel (squared Euclidean distance, ties to the smaller (row, col)).
void fill_holes(ProjectedPair& pair) {
  const int n = pair.depth.rows;
  std::vector<Pixel> fg;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (pair.depth.at(r, c) != 0) fg.push_back({r, c});
  const auto hull = convex_hull(fg);
  if (hull.size() < 3) return;

  int rmin = n, rmax = -1, cmin = n, cmax = -1;
  for (const auto& p : hull) {
    rmin = std::min(rmin, p.row);
    rmax = std::max(rmax, p.row);
    cmin = std::min(cmin, p.col);
    cmax = std::max(cmax, p.col);
  }

  const Image depth_src = pair.depth;
  const Image rgb_src = pair.rgb;
  for (int r = rmin; r <= rmax; ++r) {
    for (int c = cmin; c <= cmax; ++c) {
      if (depth_src.at(r, c) != 0 || !inside_hull(hull, {r, c})) continue;
      std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
      Pixel best{-1, -1};
      for (int ring = 1; ring < n; ++ring) {
        for (int dr = -ring; dr <= ring; ++dr) {
          const int step = (dr == -ring || dr == ring) ? 1 : 2 * ring;
          for (int dc = -ring; dc <= ring; dc += step) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= n || cc < 0 || cc >= n || depth_src.at(rr, cc) == 0) continue;
            const std::int64_t d2 = static_cast<std::int64_t>(dr) * dr + static_cast<std::int64_t>(dc) * dc;
            if (d2 < best_d2 || (d2 == best_d2 && (rr < best.row || (rr == best.row && cc < best.col)))) {
              best_d2 = d2;
              best = {rr, cc};
            }
          }
        }
        const std::int64_t next = static_cast<std::int64_t>(ring + 1) * (ring + 1);
        if (best_d2 < next) break;
      }
      if (best.row < 0) continue;
      pair.depth.at(r, c) = depth_src.at(best.row, best.col);
      for (int ch = 0; ch < 3; ++ch) pair.rgb.at(r, c, ch) = rgb_src.at(best.row, best.col, ch);
    }
  }
}

}  // namespace

void ProjectionConfig::validate() const {
  if (image_size < 16) throw InvalidArgument("image_size must be at least 16");
  if (!(margin >= 0.0 && margin <= 0.5)) throw InvalidArgument("margin must lie in [0, 0.5]");
}

Eigen::Isometry3d canonical_frame(const PointCloudView& view) {
  if (view.size() < kMinPipelinePoints)
    throw DegenerateGeometry("canonical frame needs at least " + std::to_string(kMinPipelinePoints) + " points");
  return with_anchor(pca_local(anchored(view.points)), anchor_of(view.points));
}

Eigen::Isometry3d fixed_z_frame(const PointCloudView& view) {
  if (view.size() == 0) return Eigen::Isometry3d::Identity();
  return with_anchor(centroid_local(anchored(view.points)), anchor_of(view.points));
}

ObjectFrame object_frame(const PointCloudView& view, AxisPolicy policy) {
  ObjectFrame f;
  if (view.size() == 0) return f;
  f.anchor = anchor_of(view.points);
  const Eigen::Matrix3Xd local = anchored(view.points);
  if (policy == AxisPolicy::PcaLargestFace) {
    try {
      if (view.size() < kMinPipelinePoints)
        throw DegenerateGeometry("canonical frame needs at least " + std::to_string(kMinPipelinePoints) + " points");
      f.transform = pca_local(local);
      f.policy = AxisPolicy::PcaLargestFace;
      return f;
    } catch (const DegenerateGeometry&) {
      f.fell_back = true;
    }
  }
  f.transform = centroid_local(local);
  f.policy = AxisPolicy::FixedZ;
  return f;
}

ProjectedPair project(const PointCloudView& view, const ObjectFrame& frame, int axis, const ProjectionConfig& config) {
  config.validate();
  if (axis < 0 || axis > 2) throw InvalidArgument("projection axis must be 0, 1 or 2");
  if (view.size() == 0) throw ParseError(ParseError::Kind::EmptyCloud, 0, "cannot project an empty view");

  const int n = config.image_size;
  const auto [ua, va] = plane_axes(axis);
  const Eigen::Matrix3Xd q = frame.transform * (view.points.cast<double>().colwise() - frame.anchor);

  const Eigen::Vector3d lo = q.rowwise().minCoeff();
  const Eigen::Vector3d hi = q.rowwise().maxCoeff();
  const double side = std::max(hi(ua) - lo(ua), hi(va) - lo(va)) * (1.0 + 2.0 * config.margin);
  const double u0 = 0.5 * (lo(ua) + hi(ua)) - 0.5 * side;
  const double v1 = 0.5 * (lo(va) + hi(va)) + 0.5 * side;
  const double w_max = hi(axis);
  const double w_range = hi(axis) - lo(axis);

  auto to_cell = [n](double t) {
    const double x = std::floor(t * n);
    return static_cast<int>(std::clamp(x, 0.0, static_cast<double>(n - 1)));
  };

  std::vector<Eigen::Index> winner(static_cast<std::size_t>(n) * n, -1);
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    int row = n / 2, col = n / 2;
    if (side > 0.0) {
      col = to_cell((q(ua, i) - u0) / side);
      row = to_cell((v1 - q(va, i)) / side);
    }
    auto& w = winner[static_cast<std::size_t>(row) * n + col];
    if (w < 0 || q(axis, i) > q(axis, w)) w = i;
  }

  ProjectedPair out;
  out.rgb = Image(n, n, 3);
  out.depth = Image(n, n, 1, 0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const auto w = winner[static_cast<std::size_t>(r) * n + c];
      if (w < 0) {
        out.rgb.at(r, c, 0) = config.background.r;
        out.rgb.at(r, c, 1) = config.background.g;
        out.rgb.at(r, c, 2) = config.background.b;
        continue;
      }
      const double dist = w_max - q(axis, w);
      const double level = 255.0 * (1.0 - dist / (w_range + kDepthEpsilon));
      out.depth.at(r, c) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(level), 1, 255));
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(r, c, ch) = view.colors(ch, w);
    }
  }
  if (config.fill_policy == FillPolicy::NearestNeighbor) fill_holes(out);

  out.meta.instance_id = view.instance_id;
  out.meta.view_index = view.view_index;
  out.meta.axis = axis;
  out.meta.extents = hi - lo;
  out.meta.frame_policy = frame.policy;
  out.meta.frame_fell_back = frame.fell_back;
  return out;
}

ProjectedPair project(const PointCloudView& view, int axis, const ProjectionConfig& config) {
  return project(view, object_frame(view, config.axis_policy), axis, config);
}

std::vector<ProjectedPair> project_all(const PointCloudView& view, const ProjectionConfig& config) {
  const auto frame = object_frame(view, config.axis_policy);
  std::vector<ProjectedPair> out;
  out.reserve(3);
  for (int axis = 0; axis < 3; ++axis) out.push_back(project(view, frame, axis, config));
  return out;
}

std::string projection_filename(const std::string& instance_id, std::int64_t view_index, int axis, bool depth) {
  return instance_id + "_" + std::to_string(view_index) + "_" + std::to_string(axis) + (depth ? "_depth" : "_rgb") +
         ".png";
}

std::string to_string(AxisPolicy policy) {
  return policy == AxisPolicy::PcaLargestFace ? "pca_largest_face" : "fixed_z";
}

std::string to_string(FillPolicy policy) { return policy == FillPolicy::None ? "none" : "nearest_neighbor"; }

AxisPolicy parse_axis_policy(const std::string& name) {
  if (name == "pca_largest_face") return AxisPolicy::PcaLargestFace;
  if (name == "fixed_z") return AxisPolicy::FixedZ;
  throw InvalidArgument("unknown axis policy '" + name + "' (pca_largest_face|fixed_z)");
}

FillPolicy parse_fill_policy(const std::string& name) {
  if (name == "none") return FillPolicy::None;
  if (name == "nearest_neighbor") return FillPolicy::NearestNeighbor;
  throw InvalidArgument("unknown fill policy '" + name + "' (none|nearest_neighbor)");
}

}  // namespace fgvc
