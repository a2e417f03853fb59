#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fgvc/embedding.hpp"
#include "fgvc/metrics.hpp"
#include "fgvc/pointcloud.hpp"

namespace fgvc {

/// Unit that folds are drawn over: single views, or all views of an instance.
enum class FoldLevel { View, Instance };

std::string to_string(FoldLevel level);

struct FoldPlan {
  std::uint64_t seed = 0;
  int fold_count = 10;
  bool stratified = true;
  FoldLevel level = FoldLevel::View;
  std::vector<RowId> row_ids;       ///< manifest order
  std::vector<std::string> labels;  ///< category per row
  std::vector<int> assignment;      ///< fold per row

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Seeded k-fold split. Units are shuffled per stratum (category when
/// stratified, else the whole set) and dealt round-robin, continuing the
/// deal across strata so that fold sizes differ by at most one both overall
/// and inside each stratum.
FoldPlan make_folds(const DatasetManifest& manifest, std::uint64_t seed, int fold_count = 10, bool stratified = true,
                    FoldLevel level = FoldLevel::View);

/// Fraction of positions where prediction equals truth.
double accuracy(std::span<const std::string> predictions, std::span<const std::string> truth);

struct EvalConfig {
  std::string pipeline;  ///< encoder id of the evaluated embeddings
  std::string modality;
  std::string fusion;  ///< "-" when the embeddings are not fused
  Metric metric;
  int k = 1;
  std::uint64_t seed = 0;
  int folds = 10;
  bool stratified = true;
  FoldLevel level = FoldLevel::View;
  std::string config_hash;
};

struct EvalReport {
  EvalConfig config;
  std::vector<double> per_fold_accuracy;
  std::vector<std::size_t> fold_sizes;
  double mean_accuracy = 0.0;
  std::vector<std::string> fallback_events;
  std::vector<std::pair<std::string, double>> timings;  ///< stage -> wall-clock seconds

  /// Deterministic JSON; the "timings" block is the only run-dependent part.
  std::string to_json(bool include_timings = true) const;
  /// Plain-text table: one row per configuration.
  std::string to_table() const;
};

struct CrossValidationOptions {
  int jobs = 1;
  std::vector<std::string> fallback_events;
};

/// For every fold, builds a kNN index on the other folds and classifies the
/// fold's rows. `labels` is aligned with `plan.row_ids`.
EvalReport cross_validate(const EmbeddingMatrix& embeddings, std::span<const std::string> labels, const FoldPlan& plan,
                          const Metric& metric, int k, const CrossValidationOptions& options = {});

inline EvalReport cross_validate(const EmbeddingMatrix& embeddings, const FoldPlan& plan, const Metric& metric, int k,
                                 const CrossValidationOptions& options = {}) {
  return cross_validate(embeddings, plan.labels, plan, metric, k, options);
}

/// Table over several reports, header printed once.
std::string reports_table(std::span<const EvalReport> reports);

}  // namespace fgvc
