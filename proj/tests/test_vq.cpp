#include <cmath>

#include <gtest/gtest.h>

#include "dualvq/vq/vq.hpp"

using namespace dualvq;

namespace {

const Tensor kTwoCodes(2, 2, std::vector<double>{0, 0, 1, 1});

}  // namespace

TEST(Quantize, NearestCodeword) {
  const QuantizationResult r = quantize(Tensor::row({0.2, 0.2}), kTwoCodes);
  EXPECT_EQ(r.indices, std::vector<std::size_t>{0});
  EXPECT_EQ(r.z_q, Tensor::row({0.0, 0.0}));
}

TEST(Quantize, ExactCodewordHasZeroLoss) {
  Tensor book(5, 3);
  for (std::size_t i = 0; i < book.size(); ++i) book[i] = static_cast<double>(i) * 0.37;
  const QuantizationResult r = quantize(Tensor::row({book(3, 0), book(3, 1), book(3, 2)}), book);
  EXPECT_EQ(r.indices[0], 3u);
  EXPECT_EQ(r.vq_loss, 0.0);
}

TEST(Quantize, TieGoesToLowestIndex) {
  EXPECT_EQ(quantize(Tensor::row({0.5, 0.5}), kTwoCodes).indices[0], 0u);
  const Tensor dup(3, 1, std::vector<double>{2.0, 1.0, 1.0});
  EXPECT_EQ(nearest_codes(Tensor::row({1.0}), dup)[0], 1u);
}

TEST(Quantize, DimensionMismatchRejected) {
  EXPECT_THROW(quantize(Tensor::row({1.0, 2.0, 3.0}), kTwoCodes), ShapeError);
}

TEST(Quantize, EmptyCodebookRejected) { EXPECT_ANY_THROW(quantize(Tensor::row({1.0, 2.0}), Tensor(0, 2))); }

TEST(VqLoss, HandComputedValue) {
  Graph g;
  const Var ze = g.variable(Tensor::row({1.0, 0.0}));
  const Var book = g.variable(Tensor(1, 2));
  const QuantizedVars q = quantize(ze, book);
  EXPECT_DOUBLE_EQ(g.value(q.vq_loss).item(), 1.0);
  g.backward(q.vq_loss);
  EXPECT_EQ(g.grad(ze), Tensor(1, 2));
  EXPECT_EQ(g.grad(book), Tensor::row({-2.0, 0.0}));
}

TEST(VqLoss, ZeroWhenEncoderOutputsAreCodewords) {
  Graph g;
  const Var ze = g.variable(kTwoCodes);
  const QuantizedVars q = quantize(ze, g.variable(kTwoCodes));
  EXPECT_EQ(g.value(q.vq_loss).item(), 0.0);
  EXPECT_EQ(g.value(q.commit_loss).item(), 0.0);
}

TEST(CommitLoss, EqualsVqLossForwardAndOnlyTrainsEncoder) {
  Graph g;
  const Var ze = g.variable(Tensor(2, 2, std::vector<double>{1, 0, 0.9, 1.3}));
  const Var book = g.variable(Tensor(2, 2, std::vector<double>{0, 0, 1, 1}));
  const QuantizedVars q = quantize(ze, book);
  EXPECT_EQ(g.value(q.vq_loss).item(), g.value(q.commit_loss).item());
  g.backward(q.commit_loss);
  EXPECT_EQ(g.grad(book), Tensor(2, 2));
  // Row 0 [1,0] vs codeword [0,0] over N = 2 rows: 2 [1,0] / 2.
  EXPECT_DOUBLE_EQ(g.grad(ze)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.grad(ze)(0, 1), 0.0);
}

TEST(StraightThrough, ForwardIsQuantizedAndGradientPassesUnchanged) {
  Graph g;
  const Var ze = g.variable(Tensor(2, 2, std::vector<double>{0.2, 0.1, 0.8, 1.4}));
  const Var book = g.variable(kTwoCodes);
  const QuantizedVars q = quantize(ze, book);
  EXPECT_EQ(g.value(q.st), g.value(q.z_q));
  const Var w = g.constant(Tensor(2, 2, std::vector<double>{1, -2, 3, 0.5}));
  g.backward(ops::sum(ops::mul(ops::mul(q.st, q.st), w)));
  // d/d(st) of sum(w st^2) is 2 w st, delivered to z_e unchanged.
  const Tensor& zq = g.value(q.z_q);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.grad(ze)[i], 2.0 * g.value(w)[i] * zq[i]);
}

TEST(CodebookStats, CollapseToOneCode) {
  const CodebookStats s = codebook_stats(std::vector<std::size_t>(50, 7), 16);
  EXPECT_EQ(s.used, 1u);
  EXPECT_DOUBLE_EQ(s.perplexity, 1.0);
  EXPECT_TRUE(s.collapsed);
}

TEST(CodebookStats, UniformUseGivesPerplexityK) {
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < 8; ++k) idx.push_back(k);
  }
  EXPECT_NEAR(codebook_stats(idx, 8).perplexity, 8.0, 1e-12);
}

TEST(CodebookStats, HalfUsed) {
  const CodebookStats s = codebook_stats({0, 0, 1, 1}, 4);
  EXPECT_EQ(s.histogram, (std::vector<std::size_t>{2, 2, 0, 0}));
  EXPECT_EQ(s.used, 2u);
  EXPECT_NEAR(s.perplexity, 2.0, 1e-12);
  EXPECT_FALSE(s.collapsed);
}

TEST(CodebookStats, IndexOutsideCodebookRejected) { EXPECT_THROW(codebook_stats({4}, 4), std::out_of_range); }
