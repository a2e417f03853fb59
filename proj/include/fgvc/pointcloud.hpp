#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fgvc {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using Points3 = Eigen::Matrix3Xf;
using Colors3 = Eigen::Matrix<std::uint8_t, 3, Eigen::Dynamic>;

/// Views with fewer points than this are refused by the pipeline.
inline constexpr std::size_t kMinPipelinePoints = 10;

/// One segmented partial view of an object. Column i of `points` and `colors`
/// describes point i. Coordinates are in meters.
struct PointCloudView {
  Points3 points;
  Colors3 colors;
  std::string category_label;
  std::string instance_id;
  std::int64_t view_index = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
};

/// Reads the ASCII PLY subset (x, y, z float; red, green, blue uchar).
/// Labels are left empty; they come from the manifest.
PointCloudView load_view(const std::filesystem::path& path);
PointCloudView parse_view(const std::string& text);

/// Writes the ASCII PLY subset. Coordinates are printed with enough digits
/// to re-read the identical float.
void write_view(const PointCloudView& view, const std::filesystem::path& path);
std::string format_view(const PointCloudView& view);

/// Throws ParseError(TooFewPoints) when the view is too small to project.
void admit_view(const PointCloudView& view, std::size_t min_points = kMinPipelinePoints);

struct ManifestEntry {
  std::string path;  ///< relative to the manifest's directory, '/'-separated
  std::string category;
  std::string instance;
  std::int64_t view = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> categories;  ///< sorted, distinct
  std::vector<ManifestEntry> entries;   ///< sorted by (category, instance, view)

  std::size_t category_count() const { return categories.size(); }
  std::size_t view_count() const { return entries.size(); }

  /// Checks the manifest invariants, throws DatasetError.
  void validate() const;
};

/// Directory convention `<category>/<instance>/<view>.<ext>`. The view index
/// is the trailing run of digits in the file stem ("0007.ply", "view_7.ply").
struct ManifestLayout {
  std::string extension = ".ply";
};

DatasetManifest build_manifest(const std::filesystem::path& root_dir, const ManifestLayout& layout = {},
                               const std::string& name = {});

/// Entry paths are rebased so that they are relative to `manifest_dir`.
DatasetManifest rebase_manifest(DatasetManifest manifest, const std::filesystem::path& from_dir,
                                const std::filesystem::path& manifest_dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads the view of `entry`, resolving its path against `manifest_dir`,
/// and attaches the manifest labels.
PointCloudView load_entry(const ManifestEntry& entry, const std::filesystem::path& manifest_dir);

enum class FixtureShape { Box, Cylinder, Sphere };

/// Surface-sampled synthetic view. `dims` are box edge lengths; for a cylinder
/// (dims.x = diameter, dims.z = height, axis along z); for a sphere dims.x is
/// the diameter. The cloud is centered on the origin.
PointCloudView generate_fixture(FixtureShape shape, std::size_t point_count, Rgb color, std::uint64_t seed,
                                const Eigen::Vector3d& dims = Eigen::Vector3d::Ones());

}  // namespace fgvc
