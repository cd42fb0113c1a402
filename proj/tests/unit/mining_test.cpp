#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccrk/error.hpp"
#include "ccrk/mining.hpp"
#include "support.hpp"

using namespace ccrk;

namespace {

double total(const MiningDistribution& d) { return std::accumulate(d.weights.begin(), d.weights.end(), 0.0); }

void expect_valid(const MiningDistribution& d) {
  ASSERT_EQ(d.weights.size(), d.support.size());
  EXPECT_NEAR(total(d), 1.0, 1e-12);
  for (double w : d.weights) EXPECT_GE(w, 0.0);
}

}  // namespace

TEST(HardPositive, Examples) {
  const std::vector<double> two{0.8, 0.2};
  const auto d2 = hard_positive_dist(two);
  EXPECT_NEAR(d2.weights[0], 0.2, 1e-5);
  EXPECT_NEAR(d2.weights[1], 0.8, 1e-5);

  const std::vector<double> three{0.5, 0.3, 0.2};
  const auto d3 = hard_positive_dist(three);
  EXPECT_NEAR(d3.weights[0], 0.25, 1e-5);
  EXPECT_NEAR(d3.weights[1], 0.35, 1e-5);
  EXPECT_NEAR(d3.weights[2], 0.40, 1e-5);
  EXPECT_EQ(d3.support, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(d3.kind, MiningKind::HardPositiveText);

  const std::vector<double> equal{0.3, 0.3, 0.3, 0.3};
  for (double w : hard_positive_dist(equal).weights) EXPECT_NEAR(w, 0.25, 1e-12);

  const std::vector<double> single{-0.4};
  EXPECT_EQ(hard_positive_dist(single).weights, std::vector<double>{1.0});
}

TEST(HardPositive, ShiftedFormulaExactly) {
  const std::vector<double> sims{0.4, -0.3, 0.1};
  std::vector<double> shifted = sims;
  for (double& s : shifted) s = s + 0.3 + kMiningEpsilon;
  const double sum = std::accumulate(shifted.begin(), shifted.end(), 0.0);
  const auto d = hard_positive_dist(sims);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(d.weights[k], (1.0 - shifted[k] / sum) / 2.0, 1e-15);
}

TEST(HardPositive, ValidAndMonotoneOnRandomInputs) {
  Rng rng(5);
  for (auto w : {MiningWeighting::LinearShift, MiningWeighting::Softmax}) {
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> sims(2 + rng.uniform_index(6));
      for (double& s : sims) s = 2.0 * rng.uniform() - 1.0;
      const auto d = hard_positive_dist(sims, w);
      expect_valid(d);
      for (std::size_t a = 0; a < sims.size(); ++a) {
        for (std::size_t b = 0; b < sims.size(); ++b) {
          if (sims[a] < sims[b]) EXPECT_GT(d.weights[a], d.weights[b]);
        }
      }
    }
  }
}

TEST(HardPositive, SoftmaxWeighting) {
  const std::vector<double> sims{0.5, 0.1};
  const auto d = hard_positive_dist(sims, MiningWeighting::Softmax);
  EXPECT_NEAR(d.weights[1] / d.weights[0], std::exp(0.4), 1e-12);
}

TEST(HardNegativeImage, Example) {
  // Anchor 0 with one language; candidate images score 0.6 and 0.2 against its text.
  DenseMatrix images(3, 3, 0.0);
  images(0, 0) = 1.0;
  images(1, 0) = 0.6; images(1, 1) = 0.8;
  images(2, 0) = 0.2; images(2, 1) = std::sqrt(0.96);
  DenseMatrix texts(3, 3, 0.0);
  texts(0, 0) = 1.0;
  texts(1, 1) = 1.0;
  texts(2, 2) = 1.0;
  const auto c = fixtures::make_corpus(images, texts, 1);
  const auto d = hard_negative_image_dist(c, 0);
  expect_valid(d);
  EXPECT_EQ(d.support, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(d.weights[0], 0.75, 1e-5);
  EXPECT_NEAR(d.weights[1], 0.25, 1e-5);
  EXPECT_EQ(d.kind, MiningKind::HardNegativeImage);
}

TEST(HardNegativeImage, UniformWhenCandidatesEqual) {
  const auto c = fixtures::identical_corpus(5, 2, 3);
  const auto d = hard_negative_image_dist(c, 2);
  ASSERT_EQ(d.weights.size(), 4u);
  for (double w : d.weights) EXPECT_NEAR(w, 0.25, 1e-12);
  const auto t = hard_negative_text_dist(c, 2);
  ASSERT_EQ(t.weights.size(), 8u);
  for (double w : t.weights) EXPECT_NEAR(w, 0.125, 1e-12);
}

TEST(HardNegative, AnchorNeverInSupportAndSumsToOne) {
  Rng rng(19);
  for (auto w : {MiningWeighting::LinearShift, MiningWeighting::Softmax}) {
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 2 + rng.uniform_index(8), k = 1 + rng.uniform_index(4);
      const auto c = fixtures::random_corpus(n, k, 4, rng);
      for (std::size_t anchor = 0; anchor < n; ++anchor) {
        const auto di = hard_negative_image_dist(c, anchor, w);
        expect_valid(di);
        EXPECT_EQ(di.support.size(), n - 1);
        for (std::size_t s : di.support) EXPECT_NE(s, anchor);
        const auto dt = hard_negative_text_dist(c, anchor, w);
        expect_valid(dt);
        EXPECT_EQ(dt.support.size(), (n - 1) * k);
        for (std::size_t s : dt.support) EXPECT_NE(s / k, anchor);
      }
    }
  }
}

TEST(HardNegativeText, ProportionalToShiftedSimilarity) {
  Rng rng(2);
  const auto c = fixtures::random_corpus(4, 2, 3, rng);
  const auto d = hard_negative_text_dist(c, 1);
  std::vector<double> sims;
  for (std::size_t row : d.support) sims.push_back(dot(c.image(1), c.texts.row(row)));
  const double lo = std::min(0.0, *std::min_element(sims.begin(), sims.end()));
  double sum = 0.0;
  for (double& s : sims) sum += (s = s - lo + kMiningEpsilon);
  for (std::size_t i = 0; i < sims.size(); ++i) EXPECT_NEAR(d.weights[i], sims[i] / sum, 1e-15);
}

TEST(HardNegative, DegenerateBatch) {
  const auto c = fixtures::identical_corpus(1, 3, 2);
  try {
    hard_negative_image_dist(c, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBatch);
  }
  EXPECT_THROW(hard_negative_text_dist(c, 0), Error);
}

TEST(Sample, FrequenciesMatchWeights) {
  MiningDistribution d;
  d.weights = {0.25, 0.35, 0.40};
  d.support = {7, 8, 9};
  Rng rng(2024);
  std::vector<int> counts(3, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[sample(d, rng) - 7];
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(static_cast<double>(counts[i]) / draws, d.weights[i], 0.01);
}

TEST(Sample, PointMassAndDeterminism) {
  MiningDistribution point;
  point.weights = {0.0, 1.0, 0.0};
  point.support = {4, 5, 6};
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(point, rng), 5u);

  MiningDistribution d;
  d.weights = {0.1, 0.2, 0.3, 0.4};
  d.support = {0, 1, 2, 3};
  Rng a(77), b(77);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample(d, a), sample(d, b));
}

TEST(MineHardSamples, ShapesAndExclusions) {
  Rng data(3);
  const auto c = fixtures::random_corpus(6, 3, 4, data);
  Rng rng(1);
  const MinedSamples m = mine_hard_samples(c, MiningWeighting::LinearShift, rng);
  ASSERT_EQ(m.positive_language.size(), 6u);
  ASSERT_EQ(m.negative_text.size(), 6u);
  ASSERT_EQ(m.negative_image.size(), 6u);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_LT(m.positive_language[j], 3u);
    EXPECT_NE(m.negative_text[j].first, j);
    EXPECT_LT(m.negative_text[j].second, 3u);
    EXPECT_NE(m.negative_image[j], j);
  }
  Rng again(1);
  const MinedSamples m2 = mine_hard_samples(c, MiningWeighting::LinearShift, again);
  EXPECT_EQ(m.positive_language, m2.positive_language);
  EXPECT_EQ(m.negative_image, m2.negative_image);
}

TEST(MiningWeighting, Parse) {
  EXPECT_EQ(parse_mining_weighting("linear_shift"), MiningWeighting::LinearShift);
  EXPECT_EQ(parse_mining_weighting("softmax"), MiningWeighting::Softmax);
  EXPECT_STREQ(to_string(MiningWeighting::Softmax), "softmax");
  EXPECT_THROW(parse_mining_weighting("cubic"), Error);
}
