#include <gtest/gtest.h>

#include "fgvc/error.hpp"
#include "fgvc/knn.hpp"
#include "fgvc/random.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

using namespace fgvc;

namespace {

EmbeddingMatrix random_train(Rng& rng, int rows, int dim) {
  EmbeddingMatrix m;
  m.encoder_id = "test";
  m.rows.resize(rows, dim);
  for (Eigen::Index i = 0; i < m.rows.size(); ++i) m.rows.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  for (int i = 0; i < rows; ++i) m.row_ids.push_back({"obj" + std::to_string(i), 0});
  return m;
}

std::vector<std::vector<double>> as_rows(const RowMatrix<float>& m) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
  return out;
}

}  // namespace

TEST(Vote, TieRules) {
  EXPECT_EQ(vote({"a"}), "a");
  EXPECT_EQ(vote({"a", "b", "b"}), "b");
  EXPECT_EQ(vote({"a", "b"}), "a");
  EXPECT_EQ(vote({"b", "a", "a", "b", "c"}), "b");
  EXPECT_EQ(vote({"c", "a", "b", "b", "a"}), "a");
}

TEST(KnnIndex, BuildErrors) {
  Rng rng(1);
  auto train = random_train(rng, 4, 3);
  EXPECT_THROW(KnnIndex::build(train, {"a", "b"}, Metric{}), InvalidArgument);
  EXPECT_THROW(KnnIndex::build(train, {"a", "b", "c", "d"}, Metric{}, 0), InvalidArgument);
  EXPECT_THROW(KnnIndex::build(train, {"a", "b", "c", "d"}, Metric{}, 5), InvalidArgument);
  EXPECT_THROW(KnnIndex::build(EmbeddingMatrix{}, {}, Metric{}), InvalidArgument);
  const auto index = KnnIndex::build(train, {"a", "b", "c", "d"}, Metric{}, 4);
  EXPECT_THROW(index.classify(Eigen::VectorXf::Zero(2)), DimensionMismatch);
}

TEST(KnnIndex, EquidistantNeighboursGoToTheLowerRow) {
  EmbeddingMatrix train;
  train.rows.resize(3, 2);
  train.rows << 5, 5, 1, 0, -1, 0;
  train.row_ids = {{"far", 0}, {"right", 0}, {"left", 0}};
  const auto index = KnnIndex::build(train, {"x", "right", "left"}, Metric{MetricKind::Euclidean}, 1);
  const auto p = index.classify(Eigen::Vector2f(0, 0));
  EXPECT_EQ(p.label, "right");
  ASSERT_EQ(p.neighbors.size(), 1u);
  EXPECT_EQ(p.neighbors[0].row, 1);
  EXPECT_EQ(p.neighbors[0].row_id, (RowId{"right", 0}));
}

TEST(KnnIndex, MatchesTheFullSortOracle) {
  Rng rng(99);
  auto train = random_train(rng, 30, 12);
  std::vector<std::string> labels;
  for (int i = 0; i < 30; ++i) labels.push_back("c" + std::to_string(rng.below(4)));
  const auto index = KnnIndex::build(train, labels, Metric{MetricKind::Motyka}, 3);
  const auto rows = as_rows(train.rows);
  const auto queries = random_train(rng, 10, 12);
  const auto batch = index.classify_batch(queries);
  for (Eigen::Index q = 0; q < 10; ++q) {
    const std::vector<double> query(queries.rows.row(q).data(), queries.rows.row(q).data() + 12);
    const auto expected = oracle::brute_force_knn(rows, labels, query, MetricKind::Motyka, 3);
    EXPECT_EQ(batch[q].label, expected.label);
    for (int n = 0; n < 3; ++n) {
      EXPECT_EQ(batch[q].neighbors[n].row, static_cast<Eigen::Index>(expected.neighbors[n].row));
      EXPECT_EQ(batch[q].neighbors[n].distance, expected.neighbors[n].distance);
    }
  }
}

TEST(KnnIndex, BatchEqualsOneAtATime) {
  Rng rng(7);
  auto train = random_train(rng, 50, 8);
  std::vector<std::string> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i % 2 ? "odd" : "even");
  const auto index = KnnIndex::build(train, labels, Metric{MetricKind::Gower}, 5);
  const auto queries = random_train(rng, 100, 8);
  const auto threaded = index.classify_batch(queries, 4);
  for (Eigen::Index q = 0; q < 100; ++q) {
    const auto one = index.classify(queries.rows.row(q).transpose());
    EXPECT_EQ(one.label, threaded[q].label);
    for (std::size_t n = 0; n < one.neighbors.size(); ++n) {
      EXPECT_EQ(one.neighbors[n].row, threaded[q].neighbors[n].row);
      EXPECT_EQ(one.neighbors[n].distance, threaded[q].neighbors[n].distance);
    }
  }
}

TEST(KnnIndex, EuclideanNeighbourOfACubeCorner) {
  EmbeddingMatrix train;
  train.rows.resize(8, 3);
  std::vector<std::string> labels;
  for (int c = 0; c < 8; ++c) {
    train.rows.row(c) << float(c & 1), float((c >> 1) & 1), float((c >> 2) & 1);
    train.row_ids.push_back({"corner", c});
    labels.push_back("c" + std::to_string(c));
  }
  const auto index = KnnIndex::build(train, labels, Metric{MetricKind::Euclidean});
  EXPECT_EQ(index.classify(Eigen::Vector3f(0.9f, 0.1f, 0.8f)).label, "c5");
  EXPECT_EQ(index.classify(Eigen::Vector3f(0.1f, 0.95f, 0.2f)).label, "c2");
}

TEST(KnnIndex, AnExactDuplicateAlwaysWinsItsLabel) {
  Rng rng(3);
  auto train = random_train(rng, 20, 6);
  std::vector<std::string> labels;
  for (int i = 0; i < 20; ++i) labels.push_back("l" + std::to_string(i));
  for (auto kind : kAllMetrics) {
    const auto index = KnnIndex::build(train, labels, Metric{kind}, 1);
    for (int i = 0; i < 20; ++i)
      EXPECT_EQ(index.classify(train.rows.row(i).transpose()).label, labels[i]) << to_string(kind);
  }
}

TEST(KnnIndex, SaveAndLoad) {
  fgvc::testing::ScratchDir dir;
  Rng rng(4);
  auto train = random_train(rng, 10, 4);
  std::vector<std::string> labels(10, "a");
  labels[3] = "b";
  const auto index = KnnIndex::build(train, labels, Metric{MetricKind::Dice, 1e-8}, 3);
  index.save(dir / "index.femb");
  EXPECT_TRUE(std::filesystem::exists(labels_sidecar(dir / "index.femb")));
  const auto back = KnnIndex::load(dir / "index.femb");
  EXPECT_EQ(back.k(), 3);
  EXPECT_EQ(back.labels(), labels);
  EXPECT_EQ(back.metric().kind, MetricKind::Dice);
  EXPECT_EQ(back.metric().epsilon, 1e-8);
  EXPECT_TRUE(back.train() == index.train());
}
