#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "fgvc/embedding.hpp"
#include "fgvc/error.hpp"

namespace fgvc {

enum class MetricKind { Euclidean, Motyka, Gower, Dice, Sorensen, Pearson, Neyman, Bhattacharyya, KlDivergence };

inline constexpr std::array<MetricKind, 9> kAllMetrics = {
    MetricKind::Euclidean, MetricKind::Motyka,  MetricKind::Gower,
    MetricKind::Dice,      MetricKind::Sorensen, MetricKind::Pearson,
    MetricKind::Neyman,    MetricKind::Bhattacharyya, MetricKind::KlDivergence};

struct Metric {
  MetricKind kind = MetricKind::Motyka;
  double epsilon = 1e-10;  ///< smoothing in denominators and logs, > 0

  void validate() const;
};

std::string to_string(MetricKind kind);

/// Case-insensitive; accepts the aliases "bahatta" and "kl".
MetricKind parse_metric(const std::string& name);

/// Motyka, Sorensen, Neyman, Bhattacharyya and KL work on probability-like
/// vectors: each input is shifted by -min + epsilon and divided by its sum.
constexpr bool uses_simplex(MetricKind k) {
  return k == MetricKind::Motyka || k == MetricKind::Sorensen || k == MetricKind::Neyman ||
         k == MetricKind::Bhattacharyya || k == MetricKind::KlDivergence;
}

constexpr bool is_symmetric(MetricKind k) { return k != MetricKind::Neyman && k != MetricKind::KlDivergence; }

/// d(p, p) for this metric: 0.5 for Motyka, 0 otherwise.
constexpr double self_distance(MetricKind k) { return k == MetricKind::Motyka ? 0.5 : 0.0; }

/// Per-vector preprocessing. Widens to double and applies the simplex
/// mapping for the probabilistic family.
template <typename Derived>
Eigen::VectorXd prepare(const Metric& metric, const Eigen::MatrixBase<Derived>& v) {
  Eigen::VectorXd out = v.template cast<double>().reshaped();
  if (!uses_simplex(metric.kind) || out.size() == 0) return out;
  double lo = out[0];
  for (Eigen::Index i = 1; i < out.size(); ++i) lo = out[i] < lo ? out[i] : lo;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = out[i] - lo + metric.epsilon;
    sum += out[i];
  }
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] /= sum;
  return out;
}

/// Distance between already-prepared vectors. Sequential loops, so the
/// result depends only on the two inputs and never on how they were batched.
double prepared_distance(const Metric& metric, const double* p, const double* q, Eigen::Index dim);

inline double prepared_distance(const Metric& metric, const Eigen::Ref<const Eigen::VectorXd>& p,
                                const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (p.size() != q.size() || p.size() < 1)
    throw DimensionMismatch("distance needs two vectors of equal, non-zero length (" + std::to_string(p.size()) +
                            " vs " + std::to_string(q.size()) + ")");
  return prepared_distance(metric, p.data(), q.data(), p.size());
}

template <typename A, typename B>
double distance(const Metric& metric, const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  if (p.size() != q.size() || p.size() < 1)
    throw DimensionMismatch("distance needs two vectors of equal, non-zero length (" + std::to_string(p.size()) +
                            " vs " + std::to_string(q.size()) + ")");
  const Eigen::VectorXd pp = prepare(metric, p);
  const Eigen::VectorXd qq = prepare(metric, q);
  return prepared_distance(metric, pp.data(), qq.data(), pp.size());
}

/// Row-wise prepare(); row i of the result is prepare(rows.row(i)).
RowMatrix<double> prepare_rows(const Metric& metric, const RowMatrix<float>& rows);

/// |A| x |B| table with entry (i, j) = distance(metric, A_i, B_j), bit for
/// bit. Rows of A are spread over `jobs` threads.
Eigen::MatrixXd pairwise(const Metric& metric, const RowMatrix<float>& a, const RowMatrix<float>& b, int jobs = 1);

}  // namespace fgvc
