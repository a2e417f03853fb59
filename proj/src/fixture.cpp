#include <cmath>
#include <numbers>

#include "fgvc/error.hpp"
#include "fgvc/pointcloud.hpp"
#include "fgvc/random.hpp"

namespace fgvc {

namespace {

Eigen::Vector3d sample_box(Rng& rng, const Eigen::Vector3d& dims) {
  // Faces are picked proportionally to their area.
  const double ayz = dims.y() * dims.z();
  const double axz = dims.x() * dims.z();
  const double axy = dims.x() * dims.y();
  const double pick = rng.uniform() * (ayz + axz + axy);
  const int normal_axis = pick < ayz ? 0 : (pick < ayz + axz ? 1 : 2);
  Eigen::Vector3d p;
  for (int a = 0; a < 3; ++a) p[a] = rng.uniform(-0.5, 0.5) * dims[a];
  p[normal_axis] = (rng.uniform() < 0.5 ? -0.5 : 0.5) * dims[normal_axis];
  return p;
}

Eigen::Vector3d sample_cylinder(Rng& rng, const Eigen::Vector3d& dims) {
  const double radius = 0.5 * dims.x();
  const double height = dims.z();
  const double side = 2.0 * std::numbers::pi * radius * height;
  const double caps = 2.0 * std::numbers::pi * radius * radius;
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (rng.uniform() * (side + caps) < side) {
    return {radius * std::cos(phi), radius * std::sin(phi), rng.uniform(-0.5, 0.5) * height};
  }
  const double r = radius * std::sqrt(rng.uniform());
  const double z = (rng.uniform() < 0.5 ? -0.5 : 0.5) * height;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Eigen::Vector3d sample_sphere(Rng& rng, const Eigen::Vector3d& dims) {
  const double radius = 0.5 * dims.x();
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return radius * Eigen::Vector3d(s * std::cos(phi), s * std::sin(phi), z);
}

}  // namespace

PointCloudView generate_fixture(FixtureShape shape, std::size_t point_count, Rgb color, std::uint64_t seed,
                                const Eigen::Vector3d& dims) {
  if (point_count == 0) throw InvalidArgument("fixture point_count must be at least 1");
  if (!(dims.array() > 0.0).all() || !dims.allFinite()) throw InvalidArgument("fixture dimensions must be positive");

  Rng rng(seed);
  PointCloudView view;
  const auto n = static_cast<Eigen::Index>(point_count);
  view.points.resize(3, n);
  view.colors.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    switch (shape) {
      case FixtureShape::Box: p = sample_box(rng, dims); break;
      case FixtureShape::Cylinder: p = sample_cylinder(rng, dims); break;
      case FixtureShape::Sphere: p = sample_sphere(rng, dims); break;
    }
    view.points.col(i) = p.cast<float>();
    view.colors.col(i) << color.r, color.g, color.b;
  }
  return view;
}

}  // namespace fgvc
