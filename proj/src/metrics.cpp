#include "fgvc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>
#include <vector>

namespace fgvc {

namespace {

double euclidean(const double* p, const double* q, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = p[i] - q[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double gower(const double* p, const double* q, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::abs(p[i] - q[i]);
  return s / static_cast<double>(n);
}

double sorensen(const double* p, const double* q, Eigen::Index n) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    num += std::abs(p[i] - q[i]);
    den += p[i] + q[i];
  }
  return num / den;
}

double motyka(const double* p, const double* q, Eigen::Index n) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    num += std::max(p[i], q[i]);
    den += p[i] + q[i];
  }
  return num / den;
}

double dice(const double* p, const double* q, Eigen::Index n) {
  double pq = 0.0, pp = 0.0, qq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    pq += p[i] * q[i];
    pp += p[i] * p[i];
    qq += q[i] * q[i];
  }
  const double den = pp + qq;
  if (den == 0.0) return 0.0;
  return std::max(0.0, 1.0 - 2.0 * pq / den);
}

double pearson(const double* p, const double* q, Eigen::Index n) {
  double mp = 0.0, mq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    mp += p[i];
    mq += q[i];
  }
  mp /= static_cast<double>(n);
  mq /= static_cast<double>(n);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = p[i] - mp;
    const double b = q[i] - mq;
    ab += a * b;
    aa += a * a;
    bb += b * b;
  }
  if (aa == 0.0 || bb == 0.0) throw ZeroVariance("pearson distance is undefined for a constant vector");
  return std::max(0.0, 1.0 - ab / std::sqrt(aa * bb));
}

double neyman(const double* p, const double* q, Eigen::Index n, double eps) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = p[i] - q[i];
    s += d * d / (p[i] + eps);
  }
  return s;
}

double bhattacharyya(const double* p, const double* q, Eigen::Index n, double eps) {
  double bc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) bc += std::sqrt(p[i] * q[i]);
  return std::max(0.0, -std::log(bc + eps));
}

double kl_divergence(const double* p, const double* q, Eigen::Index n, double eps) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += p[i] * std::log((p[i] + eps) / (q[i] + eps));
  return std::max(0.0, s);
}

}  // namespace

void Metric::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("metric epsilon must be positive");
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::Euclidean: return "euclidean";
    case MetricKind::Motyka: return "motyka";
    case MetricKind::Gower: return "gower";
    case MetricKind::Dice: return "dice";
    case MetricKind::Sorensen: return "sorensen";
    case MetricKind::Pearson: return "pearson";
    case MetricKind::Neyman: return "neyman";
    case MetricKind::Bhattacharyya: return "bhattacharyya";
    case MetricKind::KlDivergence: return "kl_divergence";
  }
  return "?";
}

MetricKind parse_metric(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto k : kAllMetrics)
    if (to_string(k) == lower) return k;
  if (lower == "bahatta") return MetricKind::Bhattacharyya;
  if (lower == "kl") return MetricKind::KlDivergence;
  throw InvalidArgument("unknown metric '" + name +
                        "' (euclidean|motyka|gower|dice|sorensen|pearson|neyman|bhattacharyya|kl_divergence)");
}

double prepared_distance(const Metric& metric, const double* p, const double* q, Eigen::Index n) {
  switch (metric.kind) {
    case MetricKind::Euclidean: return euclidean(p, q, n);
    case MetricKind::Motyka: return motyka(p, q, n);
    case MetricKind::Gower: return gower(p, q, n);
    case MetricKind::Dice: return dice(p, q, n);
    case MetricKind::Sorensen: return sorensen(p, q, n);
    case MetricKind::Pearson: return pearson(p, q, n);
    case MetricKind::Neyman: return neyman(p, q, n, metric.epsilon);
    case MetricKind::Bhattacharyya: return bhattacharyya(p, q, n, metric.epsilon);
    case MetricKind::KlDivergence: return kl_divergence(p, q, n, metric.epsilon);
  }
  return 0.0;
}

RowMatrix<double> prepare_rows(const Metric& metric, const RowMatrix<float>& rows) {
  RowMatrix<double> out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.row(i) = prepare(metric, rows.row(i)).transpose();
  return out;
}

Eigen::MatrixXd pairwise(const Metric& metric, const RowMatrix<float>& a, const RowMatrix<float>& b, int jobs) {
  metric.validate();
  if (a.cols() != b.cols() || a.cols() < 1)
    throw DimensionMismatch("pairwise distances need equal, non-zero dimensions (" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.cols()) + ")");
  const RowMatrix<double> pa = prepare_rows(metric, a);
  const RowMatrix<double> pb = prepare_rows(metric, b);
  Eigen::MatrixXd out(a.rows(), b.rows());
  const Eigen::Index dim = a.cols();

  auto fill = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i)
      for (Eigen::Index j = 0; j < pb.rows(); ++j) out(i, j) = prepared_distance(metric, &pa(i, 0), &pb(j, 0), dim);
  };
  const Eigen::Index workers = std::clamp<Eigen::Index>(jobs, 1, std::max<Eigen::Index>(a.rows(), 1));
  if (workers == 1) {
    fill(0, a.rows());
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (Eigen::Index w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        fill(w * a.rows() / workers, (w + 1) * a.rows() / workers);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace fgvc
