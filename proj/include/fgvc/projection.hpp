#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "fgvc/image.hpp"
#include "fgvc/pointcloud.hpp"

namespace fgvc {

enum class AxisPolicy { PcaLargestFace, FixedZ };
enum class FillPolicy { None, NearestNeighbor };

struct ProjectionConfig {
  int image_size = 224;
  double margin = 0.05;  ///< fraction of the largest planar extent, added on each side
  AxisPolicy axis_policy = AxisPolicy::PcaLargestFace;
  FillPolicy fill_policy = FillPolicy::None;
  Rgb background{0, 0, 0};

  /// image_size >= 16, margin in [0, 0.5].
  void validate() const;
};

/// Depth normalisation guard for flat clouds.
inline constexpr double kDepthEpsilon = 1e-9;

/// In the object frame axes are ordered by descending variance, so the last
/// axis looks at the largest face.
inline constexpr int kLargestFaceAxis = 2;

/// World-to-object mapping and the policy that produced it. Object
/// coordinates are `transform * (world - anchor)`; the anchor is the view's
/// first point, which keeps the mapping exact under translation.
struct ObjectFrame {
  Eigen::Isometry3d transform = Eigen::Isometry3d::Identity();
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
  AxisPolicy policy = AxisPolicy::FixedZ;
  bool fell_back = false;  ///< PCA was requested but the geometry was degenerate
};

/// PCA reference frame: origin at the centroid, axes along the principal
/// components by descending variance. The first two axes are flipped to have
/// non-negative third moment; the third is their cross product, so the
/// transform is a proper rotation. Throws DegenerateGeometry for fewer than
/// kMinPipelinePoints points or a rank-deficient covariance.
Eigen::Isometry3d canonical_frame(const PointCloudView& view);

/// Centroid translation only.
Eigen::Isometry3d fixed_z_frame(const PointCloudView& view);

/// Frame for `policy`; PcaLargestFace falls back to FixedZ on degenerate
/// geometry and reports it through `fell_back`.
ObjectFrame object_frame(const PointCloudView& view, AxisPolicy policy);

struct ProjectionMeta {
  std::string instance_id;
  std::int64_t view_index = 0;
  int axis = kLargestFaceAxis;
  Eigen::Vector3d extents = Eigen::Vector3d::Zero();  ///< bounding box in the object frame, meters
  AxisPolicy frame_policy = AxisPolicy::FixedZ;
  bool frame_fell_back = false;
};

struct ProjectedPair {
  Image rgb;    ///< 3 channels
  Image depth;  ///< 1 channel, 0 = background, foreground in [1, 255]
  ProjectionMeta meta;
};

/// Orthographic RGB + depth rendering along object-frame `axis` (0, 1 or 2).
/// The camera sits on the positive side of the axis; in each pixel the
/// nearest point wins, ties go to the lower point index.
ProjectedPair project(const PointCloudView& view, const ObjectFrame& frame, int axis, const ProjectionConfig& config);
ProjectedPair project(const PointCloudView& view, int axis, const ProjectionConfig& config);

/// One pair per object-frame axis, in axis order.
std::vector<ProjectedPair> project_all(const PointCloudView& view, const ProjectionConfig& config);

/// `<instance>_<view>_<axis>_<rgb|depth>.png`
std::string projection_filename(const std::string& instance_id, std::int64_t view_index, int axis, bool depth);

std::string to_string(AxisPolicy policy);
std::string to_string(FillPolicy policy);
AxisPolicy parse_axis_policy(const std::string& name);
FillPolicy parse_fill_policy(const std::string& name);

}  // namespace fgvc
