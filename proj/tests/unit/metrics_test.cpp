#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "ccrk/error.hpp"
#include "ccrk/metrics.hpp"
#include "support.hpp"

using namespace ccrk;

namespace {

RankTable table_from(std::size_t n, std::size_t k, std::vector<std::size_t> ranks) {
  RankTable t;
  t.n_instances = n;
  t.n_languages = k;
  t.ranks = std::move(ranks);
  t.pool_sizes.assign(k, std::max<std::size_t>(n, *std::max_element(t.ranks.begin(), t.ranks.end())));
  return t;
}

double brute_mrv(const RankTable& t) {
  double acc = 0.0;
  for (std::size_t j = 0; j < t.n_instances; ++j) {
    double mean = 0.0;
    for (std::size_t k = 0; k < t.n_languages; ++k) mean += static_cast<double>(t.rank(j, k));
    mean /= static_cast<double>(t.n_languages);
    for (std::size_t k = 0; k < t.n_languages; ++k) {
      const double dev = static_cast<double>(t.rank(j, k)) - mean;
      acc += dev * dev;
    }
  }
  return acc / static_cast<double>(t.n_instances * t.n_languages);
}

// Brute-force rank: 1 + number of candidates strictly better, plus ties at lower index.
std::size_t brute_rank(const std::vector<double>& scores, std::size_t truth) {
  std::size_t r = 1;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > scores[truth] || (scores[c] == scores[truth] && c < truth)) ++r;
  }
  return r;
}

}  // namespace

TEST(Ranks, HandSetColumn) {
  // Image 0 scores candidates 0, 1, 2 at 0.5, 0.9, 0.1: its true text sits at rank 2.
  DenseMatrix images(3, 3, 0.0);
  images(0, 0) = 1.0;
  images(1, 1) = 1.0;
  images(2, 2) = 1.0;
  DenseMatrix texts(3, 3, 0.0);
  auto set = [&](std::size_t r, double x) {
    texts(r, 0) = x;
    texts(r, 1) = std::sqrt(1 - x * x);
  };
  set(0, 0.5);
  set(1, 0.9);
  set(2, 0.1);
  const auto c = fixtures::make_corpus(images, texts, 1);
  EXPECT_EQ(compute_ranks(c, Direction::TR).rank(0, 0), 2u);
}

TEST(Ranks, TieGoesToLowerIndex) {
  const auto c = fixtures::identical_corpus(3, 2, 2);
  const RankTable tr = compute_ranks(c, Direction::TR);
  const RankTable ir = compute_ranks(c, Direction::IR);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(tr.rank(j, k), j + 1);
      EXPECT_EQ(ir.rank(j, k), j + 1);
    }
  }
  const auto order = ranked_candidates(c, Direction::TR, 2, 0);
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Ranks, MatchBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(12), k = 1 + rng.uniform_index(4);
    const auto c = fixtures::random_corpus(n, k, 5, rng);
    const RankTable tr = compute_ranks(c, Direction::TR);
    const RankTable ir = compute_ranks(c, Direction::IR);
    EXPECT_NO_THROW(tr.validate());
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t q = 0; q < k; ++q) {
        std::vector<double> s_tr(n), s_ir(n);
        for (std::size_t m = 0; m < n; ++m) {
          s_tr[m] = dot(c.image(j), c.text(m, q));
          s_ir[m] = dot(c.text(j, q), c.image(m));
        }
        EXPECT_EQ(tr.rank(j, q), brute_rank(s_tr, j));
        EXPECT_EQ(ir.rank(j, q), brute_rank(s_ir, j));
      }
    }
  }
}

TEST(Ranks, NeedNormalizedCorpus) {
  Rng rng(1);
  auto c = fixtures::random_corpus(3, 2, 3, rng);
  c.normalized = false;
  try {
    compute_ranks(c, Direction::TR);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotNormalized);
  }
}

TEST(Recall, Examples) {
  const RankTable ones = table_from(4, 2, std::vector<std::size_t>(8, 1));
  for (double r : recall_at_k(ones, 1)) EXPECT_EQ(r, 1.0);
  const RankTable mixed = table_from(4, 1, {1, 2, 3, 4});
  EXPECT_EQ(recall_at_k(mixed, 2)[0], 0.5);
}

TEST(Recall, NonDecreasingInK) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(20), k = 1 + rng.uniform_index(5);
    std::vector<std::size_t> ranks(n * k);
    for (auto& r : ranks) r = 1 + rng.uniform_index(n);
    const RankTable t = table_from(n, k, ranks);
    for (std::size_t cut = 1; cut < n + 2; ++cut) {
      const auto lo = recall_at_k(t, cut), hi = recall_at_k(t, cut + 1);
      for (std::size_t q = 0; q < k; ++q) EXPECT_LE(lo[q], hi[q]);
    }
  }
}

TEST(Recall, RandomCorpusBaseline) {
  double acc = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    const auto c = fixtures::random_corpus(100, 1, 16, rng);
    acc += evaluate(c, Direction::TR).mean_recall.r1;
  }
  EXPECT_NEAR(acc / seeds, 0.01, 0.02);
}

TEST(Mrv, Examples) {
  EXPECT_EQ(mrv(table_from(2, 3, {2, 2, 2, 5, 5, 5})), 0.0);
  EXPECT_EQ(mrv(table_from(1, 2, {1, 3})), 1.0);
  EXPECT_NEAR(mrv(table_from(2, 3, {1, 2, 3, 4, 4, 4})), 2.0 / 6.0, 1e-15);
}

TEST(Mrv, MatchesBruteForceOnRandomTables) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(8), k = 2 + rng.uniform_index(4);
    std::vector<std::size_t> ranks(n * k);
    for (auto& r : ranks) r = 1 + rng.uniform_index(n);
    const RankTable t = table_from(n, k, ranks);
    EXPECT_NEAR(mrv(t), brute_mrv(t), 1e-12);
  }
}

TEST(Mrv, InvariantUnderLanguagePermutation) {
  Rng rng(10);
  const std::size_t n = 6, k = 4;
  std::vector<std::size_t> ranks(n * k);
  for (auto& r : ranks) r = 1 + rng.uniform_index(n);
  std::vector<std::size_t> swapped(ranks.size());
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t q = 0; q < k; ++q) swapped[j * k + q] = ranks[j * k + perm[q]];
  }
  EXPECT_NEAR(mrv(table_from(n, k, ranks)), mrv(table_from(n, k, swapped)), 1e-12);
}

TEST(Mrv, PerfectRecallImpliesZero) {
  const RankTable t = table_from(5, 3, std::vector<std::size_t>(15, 1));
  for (double r : recall_at_k(t, 1)) ASSERT_EQ(r, 1.0);
  EXPECT_EQ(mrv(t), 0.0);
}

TEST(Mrv, SingleLanguageThrows) {
  try {
    mrv(table_from(3, 1, {1, 2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleLanguage);
  }
}

TEST(Summary, ReportFields) {
  const RankTable t = table_from(4, 2, {1, 1, 2, 7, 1, 1, 6, 1});
  const MetricsReport r = summarize(t, {"en", "de"});
  EXPECT_EQ(r.per_language[0].r1, 0.5);
  EXPECT_EQ(r.per_language[1].r1, 0.75);
  EXPECT_EQ(r.per_language[0].r5, 0.75);
  EXPECT_EQ(r.per_language[1].r10, 1.0);
  EXPECT_NEAR(r.mean_recall.r1, 0.625, 1e-15);
  EXPECT_NEAR(r.recall_gap, 0.25, 1e-15);
  EXPECT_NEAR(r.mrv, brute_mrv(t), 1e-15);
  const auto j = r.to_json();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"direction", "per_language", "mean_recall", "mrv", "recall_gap"}));
  EXPECT_EQ(j["per_language"]["de"]["r1"], 0.75);
  EXPECT_EQ(j["direction"], "TR");
}

TEST(Summary, SingleLanguageReportsZeroMrv) {
  const MetricsReport r = summarize(table_from(3, 1, {1, 2, 3}), {"en"});
  EXPECT_EQ(r.mrv, 0.0);
}

TEST(Rerank, OracleLiftsTruthInShortlist) {
  Rng rng(4);
  const auto c = fixtures::random_corpus(40, 3, 6, rng);
  for (Direction dir : {Direction::TR, Direction::IR}) {
    const RankTable before = compute_ranks(c, dir);
    const RankTable after = rerank_top_n(c, dir, RerankConfig{10, oracle_scorer()});
    for (std::size_t j = 0; j < 40; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (before.rank(j, k) <= 10) {
          EXPECT_EQ(after.rank(j, k), 1u);
        } else {
          EXPECT_EQ(after.rank(j, k), before.rank(j, k));
        }
      }
    }
    const auto r_before = recall_at_k(before, 1), r_after = recall_at_k(after, 1);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_GE(r_after[k], r_before[k]);
  }
}

TEST(Rerank, ConstantScorerKeepsOrder) {
  Rng rng(6);
  const auto c = fixtures::random_corpus(25, 2, 4, rng);
  const RerankConfig constant{8, [](const CandidatePair&) { return 0.5; }};
  for (Direction dir : {Direction::TR, Direction::IR}) {
    EXPECT_EQ(rerank_top_n(c, dir, constant).ranks, compute_ranks(c, dir).ranks);
    for (std::size_t j = 0; j < 25; j += 6) {
      EXPECT_EQ(ranked_candidates(c, dir, j, 1, &constant), ranked_candidates(c, dir, j, 1));
    }
  }
}

TEST(Rerank, TailKeepsCosineOrder) {
  Rng rng(8);
  const auto c = fixtures::random_corpus(30, 2, 4, rng);
  const RerankConfig reverse{5, [](const CandidatePair& p) { return -static_cast<double>(p.image_instance + p.text_instance); }};
  const auto plain = ranked_candidates(c, Direction::IR, 3, 1);
  const auto rr = ranked_candidates(c, Direction::IR, 3, 1, &reverse);
  EXPECT_TRUE(std::equal(plain.begin() + 5, plain.end(), rr.begin() + 5));
  EXPECT_TRUE(std::is_permutation(plain.begin(), plain.begin() + 5, rr.begin()));
}

TEST(Rerank, DefaultTopN) {
  EXPECT_EQ(RerankConfig{}.top_n, 128u);
  EXPECT_EQ(RerankConfig::default_top_n(1000), 128u);
  EXPECT_EQ(RerankConfig::default_top_n(10000), 128u);
  EXPECT_EQ(RerankConfig::default_top_n(10001), 256u);
}

TEST(Evaluate, PerfectCorpus) {
  SyntheticConfig cfg;
  cfg.n_instances = 30;
  cfg.noise_sigma = 0.0;
  cfg.lift_correlation = 1.0;
  const auto [c, t] = generate_synthetic(cfg);
  for (Direction d : {Direction::TR, Direction::IR}) {
    const MetricsReport r = evaluate(c, d);
    EXPECT_EQ(r.mean_recall.r1, 1.0);
    EXPECT_EQ(r.mrv, 0.0);
    EXPECT_EQ(r.recall_gap, 0.0);
  }
}

TEST(Direction, Parse) {
  EXPECT_EQ(parse_direction("tr"), Direction::TR);
  EXPECT_EQ(parse_direction("IR"), Direction::IR);
  EXPECT_THROW(parse_direction("xy"), Error);
}
