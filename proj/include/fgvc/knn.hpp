#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fgvc/embedding.hpp"
#include "fgvc/metrics.hpp"

namespace fgvc {

struct Neighbor {
  Eigen::Index row = 0;  ///< row in the training matrix
  RowId row_id;
  double distance = 0.0;
};

struct Prediction {
  std::string label;
  std::vector<Neighbor> neighbors;  ///< ascending by (distance, row)
};

/// Exact k-nearest-neighbour classifier. Immutable after build(); safe to
/// query from several threads.
///
/// Rows are ranked by distance(metric, query, row); the query is the first
/// argument of the asymmetric metrics (neyman, kl_divergence).
///
/// Among the k nearest rows (ties in distance go to the lower row index) the
/// majority label wins. A tie in votes goes to the tied label that appears
/// first in the neighbour list, which is the nearest neighbour's label
/// whenever that label is among the tied ones.
class KnnIndex {
 public:
  static KnnIndex build(EmbeddingMatrix train, std::vector<std::string> labels, Metric metric, int k = 1);

  template <typename Derived>
  Prediction classify(const Eigen::MatrixBase<Derived>& query) const {
    check_dim(query.size());
    const Eigen::VectorXd q = prepare(metric_, query);
    return classify_prepared(q);
  }

  /// Same as classify() on every row; rows are spread over `jobs` threads.
  std::vector<Prediction> classify_batch(const RowMatrix<float>& queries, int jobs = 1) const;
  std::vector<Prediction> classify_batch(const EmbeddingMatrix& queries, int jobs = 1) const {
    return classify_batch(queries.rows, jobs);
  }

  const EmbeddingMatrix& train() const { return train_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const Metric& metric() const { return metric_; }
  int k() const { return k_; }

  /// `<path>` holds the FGEMB training matrix, `<path>.labels.json` the
  /// labels, metric and k.
  void save(const std::filesystem::path& path) const;
  static KnnIndex load(const std::filesystem::path& path);

 private:
  KnnIndex() = default;
  void check_dim(Eigen::Index dim) const;
  Prediction classify_prepared(const Eigen::VectorXd& query) const;

  EmbeddingMatrix train_;
  RowMatrix<double> prepared_;
  std::vector<std::string> labels_;
  Metric metric_;
  int k_ = 1;
};

/// Majority vote with the tie rule above, over neighbour labels in rank order.
std::string vote(const std::vector<std::string>& ranked_labels);

std::filesystem::path labels_sidecar(const std::filesystem::path& index_path);

}  // namespace fgvc
