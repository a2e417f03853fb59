#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fgvc/embedding.hpp"
#include "fgvc/error.hpp"

namespace fgvc {

enum class FusionOp { Average, Max, Append };

std::string to_string(FusionOp op);
FusionOp parse_fusion_op(const std::string& name);

namespace detail {

template <typename Scalar>
struct WideAccumulator {
  using type = long double;
};
template <>
struct WideAccumulator<float> {
  using type = double;
};

}  // namespace detail

/// Element-wise average or maximum, or concatenation in the given order.
///
/// The average adds each component's values in sorted order in a wider type
/// before dividing, which makes it exactly invariant to input order and
/// exact for repeated inputs.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fuse(std::span<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> vectors,
                                              FusionOp op) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Acc = typename detail::WideAccumulator<Scalar>::type;
  if (vectors.size() < 2) throw InvalidArgument("fusion needs at least two vectors");

  if (op == FusionOp::Append) {
    Eigen::Index total = 0;
    for (const auto& v : vectors) total += v.size();
    Vec out(total);
    Eigen::Index at = 0;
    for (const auto& v : vectors) {
      out.segment(at, v.size()) = v;
      at += v.size();
    }
    return out;
  }

  const Eigen::Index dim = vectors[0].size();
  for (const auto& v : vectors)
    if (v.size() != dim)
      throw DimensionMismatch(to_string(op) + " fusion needs equal dimensions (" + std::to_string(dim) + " vs " +
                              std::to_string(v.size()) + ")");

  Vec out(dim);
  if (op == FusionOp::Max) {
    out = vectors[0];
    for (std::size_t k = 1; k < vectors.size(); ++k) out = out.cwiseMax(vectors[k]);
    return out;
  }

  std::vector<Scalar> column(vectors.size());
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (std::size_t k = 0; k < vectors.size(); ++k) column[k] = vectors[k][i];
    std::sort(column.begin(), column.end());
    Acc sum = 0;
    for (Scalar x : column) sum += static_cast<Acc>(x);
    out[i] = static_cast<Scalar>(sum / static_cast<Acc>(vectors.size()));
  }
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fuse(std::initializer_list<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> vectors,
                                              FusionOp op) {
  return fuse<Scalar>(std::span<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(vectors.begin(), vectors.size()),
                      op);
}

struct Branch {
  std::string encoder_id;
  Modality modality = Modality::Rgb;

  friend auto operator<=>(const Branch&, const Branch&) = default;
  friend bool operator==(const Branch&, const Branch&) = default;
};

std::string to_string(const Branch& b);

/// Declarative wiring of encoder branches and the fusion operator.
struct PipelineSpec {
  std::string name;
  std::vector<Branch> branches;
  FusionOp fusion = FusionOp::Append;

  /// At least two branches, all distinct.
  void validate() const;
};

/// ViT on RGB plus CNN on depth.
PipelineSpec approach_one(const std::string& vit = "mae", const std::string& cnn = "densenet",
                          FusionOp op = FusionOp::Append);

/// ViT on RGB plus one CNN on RGB and on depth, as separate branches.
PipelineSpec approach_two(const std::string& vit = "mae", const std::string& cnn = "densenet",
                          FusionOp op = FusionOp::Append);

std::string spec_to_json(const PipelineSpec& spec);
PipelineSpec spec_from_json(const std::string& text);

struct FusionEvent {
  std::string message;
};

struct FusionResult {
  EmbeddingMatrix fused;
  FusionOp applied = FusionOp::Append;
  std::vector<FusionEvent> events;  ///< e.g. the append fallback on unequal dimensions
};

/// Row-aligned fusion by row id. Output rows follow the first branch's order,
/// `encoder_id` is the spec name and the modality is rgbd. Average and max
/// fall back to append when branch dimensions differ; the fallback is
/// reported in `events`.
FusionResult fuse_dataset(const PipelineSpec& spec, const std::map<Branch, EmbeddingMatrix>& matrices);

}  // namespace fgvc
