// Writes a synthetic dataset tree <root>/<category>/<instance>/<view>.ply.
// Categories cycle through box, cylinder and sphere with their own colour and
// proportions; instances and views jitter size, colour and pose.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Geometry>

#include "fgvc/pointcloud.hpp"
#include "fgvc/random.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"synthetic point-cloud dataset generator"};
  std::string root;
  int categories = 3, instances = 2, views = 4, points = 600;
  std::uint64_t seed = 1;
  app.add_option("root", root)->required();
  app.add_option("--categories", categories)->check(CLI::PositiveNumber);
  app.add_option("--instances", instances)->check(CLI::PositiveNumber);
  app.add_option("--views", views)->check(CLI::PositiveNumber);
  app.add_option("--points", points)->check(CLI::Range(10, 10000000));
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  constexpr fgvc::FixtureShape shapes[] = {fgvc::FixtureShape::Box, fgvc::FixtureShape::Cylinder,
                                           fgvc::FixtureShape::Sphere};
  fgvc::Rng rng(seed);
  for (int c = 0; c < categories; ++c) {
    const auto shape = shapes[c % 3];
    const Eigen::Vector3d base(0.10 + 0.03 * (c / 3), 0.06 + 0.02 * (c % 4), 0.04 + 0.05 * ((c / 2) % 3));
    const fgvc::Rgb color{static_cast<std::uint8_t>(40 + (c * 73) % 200), static_cast<std::uint8_t>(40 + (c * 151) % 200),
                          static_cast<std::uint8_t>(40 + (c * 29) % 200)};
    const std::string cat = "category_" + std::to_string(c);
    for (int i = 0; i < instances; ++i) {
      const std::string inst = cat + "_obj" + std::to_string(i);
      const fs::path dir = fs::path(root) / cat / inst;
      fs::create_directories(dir);
      const Eigen::Vector3d dims = base * rng.uniform(0.9, 1.1);
      for (int v = 0; v < views; ++v) {
        auto view = fgvc::generate_fixture(shape, static_cast<std::size_t>(points), color, rng.next(), dims);
        const Eigen::Matrix3f rot =
            Eigen::AngleAxisf(static_cast<float>(rng.uniform(0.0, 6.283185307179586)), Eigen::Vector3f::UnitZ())
                .toRotationMatrix();
        view.points = rot * view.points;
        view.points.colwise() += Eigen::Vector3f(static_cast<float>(rng.uniform(-1.0, 1.0)),
                                                 static_cast<float>(rng.uniform(-1.0, 1.0)), 0.7f);
        char name[32];
        std::snprintf(name, sizeof name, "%04d.ply", v);
        fgvc::write_view(view, dir / name);
      }
    }
  }
  std::cout << "wrote " << categories * instances * views << " views under " << root << "\n";
  return 0;
}
