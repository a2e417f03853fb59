#include <gtest/gtest.h>

#include <cmath>

#include "fgvc/error.hpp"
#include "fgvc/metrics.hpp"
#include "fgvc/random.hpp"
#include "oracles.hpp"

using namespace fgvc;

namespace {

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double d(MetricKind kind, const std::vector<double>& p, const std::vector<double>& q) {
  return distance(Metric{kind}, as_eigen(p), as_eigen(q));
}

}  // namespace

TEST(Metrics, NamesRoundTrip) {
  for (auto kind : kAllMetrics) EXPECT_EQ(parse_metric(to_string(kind)), kind);
  EXPECT_EQ(parse_metric("Bahatta"), MetricKind::Bhattacharyya);
  EXPECT_EQ(parse_metric("KL"), MetricKind::KlDivergence);
  EXPECT_THROW(parse_metric("cosine"), InvalidArgument);
  EXPECT_THROW((Metric{MetricKind::Motyka, 0.0}).validate(), InvalidArgument);
}

TEST(Metrics, WorkedExamples) {
  EXPECT_EQ(d(MetricKind::Euclidean, {0, 0}, {3, 4}), 5.0);
  EXPECT_EQ(d(MetricKind::Gower, {0, 0}, {3, 4}), 3.5);
  const std::vector<double> v{0.3, -2, 7, 1e-3};
  EXPECT_DOUBLE_EQ(d(MetricKind::Motyka, v, v), 0.5);
}

TEST(Metrics, SorensenMatchesDirectFormula) {
  // [1,2] -> [e, 1+e]/(1+2e); [3,0] -> [3+e, e]/(3+2e).
  const double e = 1e-10;
  const double p0 = e / (1 + 2 * e), p1 = (1 + e) / (1 + 2 * e);
  const double q0 = (3 + e) / (3 + 2 * e), q1 = e / (3 + 2 * e);
  const double direct = (std::abs(p0 - q0) + std::abs(p1 - q1)) / (p0 + q0 + p1 + q1);
  EXPECT_NEAR(d(MetricKind::Sorensen, {1, 2}, {3, 0}), direct, 1e-15);
  EXPECT_NEAR(direct, 1.0, 1e-9);
}

TEST(Metrics, ErrorsAndGuards) {
  EXPECT_THROW(d(MetricKind::Euclidean, {1, 2}, {1, 2, 3}), DimensionMismatch);
  EXPECT_THROW(d(MetricKind::Pearson, {1, 1, 1}, {1, 2, 3}), ZeroVariance);
  EXPECT_EQ(d(MetricKind::Dice, {0, 0}, {0, 0}), 0.0);
}

TEST(Metrics, AgreeWithTheScalarOracleBitForBit) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 1 + rng.below(300);
    const auto p = oracle::random_vector(rng, dim, -3, 3);
    const auto q = oracle::random_vector(rng, dim, -3, 3);
    for (auto kind : kAllMetrics) {
      if (dim == 1 && kind == MetricKind::Pearson) continue;
      EXPECT_EQ(d(kind, p, q), oracle::distance(kind, p, q)) << to_string(kind) << " dim " << dim;
    }
  }
}

TEST(Metrics, PropertiesOnRandomPairs) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t dim = 2 + rng.below(100);
    const auto p = oracle::random_vector(rng, dim);
    const auto q = oracle::random_vector(rng, dim);
    for (auto kind : kAllMetrics) {
      const double pq = d(kind, p, q);
      EXPECT_TRUE(std::isfinite(pq));
      EXPECT_GE(pq, 0.0);
      if (is_symmetric(kind)) {
        EXPECT_EQ(pq, d(kind, q, p)) << to_string(kind);
      }
      EXPECT_NEAR(d(kind, p, p), self_distance(kind), 1e-6) << to_string(kind);
    }
  }
}

TEST(Pairwise, SymmetricTableWithZeroDiagonal) {
  const RowMatrix<float> a = RowMatrix<float>::Random(4, 16);
  const auto t = pairwise(Metric{MetricKind::Euclidean}, a, a);
  EXPECT_EQ(t.diagonal(), Eigen::VectorXd::Zero(4));
  EXPECT_EQ(t, t.transpose());
}

TEST(Pairwise, MatchesTheScalarLoop) {
  Rng rng(23);
  RowMatrix<float> a(100, 48), b(100, 48);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    b.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  }
  for (auto kind : {MetricKind::Motyka, MetricKind::Pearson, MetricKind::KlDivergence}) {
    const Metric m{kind};
    const auto serial = pairwise(m, a, b, 1);
    const auto threaded = pairwise(m, a, b, 4);
    EXPECT_EQ(serial, threaded);
    for (Eigen::Index i = 0; i < 100; ++i)
      for (Eigen::Index j = 0; j < 100; ++j) {
        const Eigen::VectorXf ai = a.row(i).transpose(), bj = b.row(j).transpose();
        ASSERT_EQ(serial(i, j), distance(m, ai, bj));
        const std::vector<double> p(ai.data(), ai.data() + 48), q(bj.data(), bj.data() + 48);
        ASSERT_EQ(serial(i, j), oracle::distance(kind, p, q));
      }
  }
  const auto single = pairwise(Metric{MetricKind::Gower}, a.topRows(1), b.topRows(1));
  ASSERT_EQ(single.rows(), 1);
  EXPECT_EQ(single(0, 0), distance(Metric{MetricKind::Gower}, a.row(0).transpose(), b.row(0).transpose()));
}
