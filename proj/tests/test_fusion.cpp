#include <gtest/gtest.h>

#include "fgvc/error.hpp"
#include "fgvc/fusion.hpp"

using namespace fgvc;
using Vec = Eigen::VectorXf;

namespace {

Vec vec(std::initializer_list<float> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (float x : xs) v[i++] = x;
  return v;
}

EmbeddingMatrix matrix(const std::string& encoder, Modality modality, std::vector<RowId> ids, int dim, float base) {
  EmbeddingMatrix m;
  m.encoder_id = encoder;
  m.modality = modality;
  m.row_ids = std::move(ids);
  m.rows.resize(static_cast<Eigen::Index>(m.row_ids.size()), dim);
  for (Eigen::Index r = 0; r < m.rows.rows(); ++r)
    for (Eigen::Index c = 0; c < dim; ++c) m.rows(r, c) = base + static_cast<float>(10 * r + c);
  return m;
}

}  // namespace

TEST(Fuse, WorkedExamples) {
  EXPECT_EQ(fuse<float>({vec({1, 2}), vec({3, 4})}, FusionOp::Average), vec({2, 3}));
  EXPECT_EQ(fuse<float>({vec({1, 5}), vec({3, 4})}, FusionOp::Max), vec({3, 5}));
  EXPECT_EQ(fuse<float>({vec({1, 2}), vec({3, 4, 5})}, FusionOp::Append), vec({1, 2, 3, 4, 5}));
}

TEST(Fuse, AverageAndMaxNeedEqualDims) {
  EXPECT_THROW(fuse<float>({vec({1, 2}), vec({3, 4, 5})}, FusionOp::Average), DimensionMismatch);
  EXPECT_THROW(fuse<float>({vec({1, 2}), vec({3})}, FusionOp::Max), DimensionMismatch);
  EXPECT_THROW(fuse<float>({vec({1, 2})}, FusionOp::Append), InvalidArgument);
}

TEST(Fuse, AverageIgnoresInputOrder) {
  const Vec a = vec({0.1f, 1e8f, -3.3f}), b = vec({0.7f, -1e8f, 2.2f}), c = vec({1e-7f, 3.0f, 0.3f});
  const Vec abc = fuse<float>({a, b, c}, FusionOp::Average);
  EXPECT_EQ(abc, fuse<float>({c, a, b}, FusionOp::Average));
  EXPECT_EQ(abc, fuse<float>({b, c, a}, FusionOp::Average));
  EXPECT_EQ(fuse<float>({a, a, a}, FusionOp::Average), a);
}

TEST(Fuse, WorksForDoubles) {
  const Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(4, 0, 1), b = Eigen::VectorXd::Constant(4, 0.5);
  EXPECT_EQ(fuse<double>({a, b}, FusionOp::Max), a.cwiseMax(b));
  EXPECT_EQ(fuse<double>({a, b}, FusionOp::Append).size(), 8);
}

TEST(Pipeline, ApproachSpecs) {
  const auto one = approach_one();
  ASSERT_EQ(one.branches.size(), 2u);
  EXPECT_EQ(one.branches[0], (Branch{"mae", Modality::Rgb}));
  EXPECT_EQ(one.branches[1], (Branch{"densenet", Modality::Depth}));
  const auto two = approach_two("vit", "cnn", FusionOp::Max);
  ASSERT_EQ(two.branches.size(), 3u);
  EXPECT_EQ(two.branches[1], (Branch{"cnn", Modality::Rgb}));
  EXPECT_EQ(two.branches[2], (Branch{"cnn", Modality::Depth}));

  const auto back = spec_from_json(spec_to_json(two));
  EXPECT_EQ(back.name, two.name);
  EXPECT_EQ(back.branches, two.branches);
  EXPECT_EQ(back.fusion, FusionOp::Max);

  PipelineSpec bad{"bad", {{"mae", Modality::Rgb}, {"mae", Modality::Rgb}}, FusionOp::Append};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_THROW(spec_from_json("{\"name\": 1}"), InvalidArgument);
}

TEST(FuseDataset, AlignsRowsById) {
  const auto spec = approach_one();
  const std::vector<RowId> ids{{"a", 0}, {"a", 1}, {"b", 0}};
  const std::vector<RowId> permuted{{"b", 0}, {"a", 0}, {"a", 1}};
  std::map<Branch, EmbeddingMatrix> in;
  in[spec.branches[0]] = matrix("mae", Modality::Rgb, ids, 2, 0);
  in[spec.branches[1]] = matrix("densenet", Modality::Depth, permuted, 3, 100);

  const auto r = fuse_dataset(spec, in);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.fused.row_ids, ids);
  EXPECT_EQ(r.fused.dim(), 5);
  EXPECT_EQ(r.fused.encoder_id, "approach-1");
  EXPECT_EQ(r.fused.modality, Modality::Rgbd);
  // Row ("a", 0) is the depth matrix's row 1.
  EXPECT_EQ(r.fused.rows(0, 2), 110.0f);
  EXPECT_EQ(r.fused.rows(2, 2), 100.0f);
}

TEST(FuseDataset, UnequalDimsFallBackToAppend) {
  const auto spec = approach_one("mae", "densenet", FusionOp::Average);
  const std::vector<RowId> ids{{"a", 0}, {"b", 0}};
  std::map<Branch, EmbeddingMatrix> in;
  in[spec.branches[0]] = matrix("mae", Modality::Rgb, ids, 4, 0);
  in[spec.branches[1]] = matrix("densenet", Modality::Depth, ids, 2, 0);
  const auto r = fuse_dataset(spec, in);
  EXPECT_EQ(r.applied, FusionOp::Append);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_NE(r.events[0].message.find("appended"), std::string::npos);
  EXPECT_EQ(r.fused.dim(), 6);
  EXPECT_EQ(r.fused.provenance.at("fusion"), "append");
}

TEST(FuseDataset, MissingRowsAreAlignmentErrors) {
  const auto spec = approach_one();
  std::map<Branch, EmbeddingMatrix> in;
  in[spec.branches[0]] = matrix("mae", Modality::Rgb, {{"a", 0}, {"a", 1}}, 2, 0);
  in[spec.branches[1]] = matrix("densenet", Modality::Depth, {{"a", 0}}, 2, 0);
  try {
    fuse_dataset(spec, in);
    FAIL();
  } catch (const AlignmentError& e) {
    ASSERT_EQ(e.missing().size(), 1u);
    EXPECT_NE(e.missing()[0].find("a#1"), std::string::npos);
  }
  in[spec.branches[1]] = matrix("densenet", Modality::Depth, {{"a", 0}, {"z", 9}}, 2, 0);
  EXPECT_THROW(fuse_dataset(spec, in), AlignmentError);
  in.erase(spec.branches[1]);
  EXPECT_THROW(fuse_dataset(spec, in), InvalidArgument);
}
