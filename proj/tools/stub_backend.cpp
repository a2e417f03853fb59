// Deterministic stand-in for an encoder backend. Speaks the backend protocol:
//   fgvc-stub-backend [options] <input_list.txt> <output.femb>
//
// --mode features   4x4 cell means per channel plus an 8-bin histogram per channel
// --mode index      row i = [i, i, ..., i] with --dim columns
// --mode short      like features but drops the last row
// --mode nonfinite  like features with a NaN in row 0
// --exit N          exit with status N after writing nothing

#include <cmath>
#include <cstring>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fgvc/embedding.hpp"
#include "fgvc/image.hpp"

namespace {

Eigen::VectorXf image_features(const fgvc::Image& img) {
  constexpr int kGrid = 4;
  constexpr int kBins = 8;
  const int ch = img.channels;
  Eigen::VectorXf f = Eigen::VectorXf::Zero(kGrid * kGrid * ch + kBins * ch);
  Eigen::VectorXf cell_count = Eigen::VectorXf::Zero(kGrid * kGrid);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const int cell = (r * kGrid / img.rows) * kGrid + (c * kGrid / img.cols);
      cell_count[cell] += 1.0f;
      for (int k = 0; k < ch; ++k) {
        const float v = img.at(r, c, k);
        f[cell * ch + k] += v / 255.0f;
        f[kGrid * kGrid * ch + k * kBins + static_cast<int>(v) * kBins / 256] += 1.0f;
      }
    }
  }
  for (int cell = 0; cell < kGrid * kGrid; ++cell)
    for (int k = 0; k < ch; ++k) f[cell * ch + k] /= std::max(cell_count[cell], 1.0f);
  f.tail(kBins * ch) /= static_cast<float>(img.rows * img.cols);
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stub encoder backend"};
  std::string mode = "features";
  int dim = 3;
  int exit_code = 0;
  std::string input, output;
  app.add_option("--mode", mode)->check(CLI::IsMember({"features", "index", "short", "nonfinite"}));
  app.add_option("--dim", dim)->check(CLI::PositiveNumber);
  app.add_option("--exit", exit_code);
  app.add_option("input", input)->required();
  app.add_option("output", output)->required();
  CLI11_PARSE(app, argc, argv);

  if (const char* log = std::getenv("FGVC_STUB_LOG"); log && *log) {
    std::ofstream(log, std::ios::app) << "invoked " << input << "\n";
  }
  if (exit_code != 0) {
    std::cerr << "stub backend: failing on request\n";
    return exit_code;
  }

  std::vector<std::string> paths;
  {
    std::ifstream in(input);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) paths.push_back(line);
  }

  try {
    fgvc::EmbeddingMatrix m;
    m.encoder_id = "stub";
    std::vector<Eigen::VectorXf> rows;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (mode == "index") {
        rows.push_back(Eigen::VectorXf::Constant(dim, static_cast<float>(i)));
      } else {
        rows.push_back(image_features(fgvc::read_png(paths[i])));
      }
    }
    if (mode == "short" && !rows.empty()) rows.pop_back();
    const Eigen::Index d = rows.empty() ? dim : rows.front().size();
    m.rows.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      m.rows.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
      m.row_ids.push_back({paths[i], static_cast<std::int64_t>(i)});
    }
    if (mode == "nonfinite" && m.size() > 0) {
      // encode_fgemb refuses non-finite rows, so patch the bytes directly.
      m.rows(0, 0) = 0.0f;
      std::string bytes = fgvc::encode_fgemb(m);
      const float nan = std::nanf("");
      std::memcpy(bytes.data() + 16, &nan, sizeof nan);
      std::ofstream(output, std::ios::binary) << bytes;
      return 0;
    }
    fgvc::write_embeddings(m, output);
  } catch (const std::exception& e) {
    std::cerr << "stub backend: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
