#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccrk/corpus.hpp"

namespace ccrk {

struct MitmHead;

// TR: image query, texts of one language as candidates.
// IR: text query, all images as candidates.
enum class Direction { TR, IR };

const char* to_string(Direction d);
Direction parse_direction(const std::string& name);

// Rank 1 is the most similar candidate; ties go to the lower candidate index.
struct RankTable {
  Direction direction = Direction::TR;
  std::size_t n_instances = 0;
  std::size_t n_languages = 0;
  std::vector<std::size_t> ranks;       // index j * K + k, each >= 1
  std::vector<std::size_t> pool_sizes;  // per language

  std::size_t rank(std::size_t j, std::size_t k) const { return ranks[j * n_languages + k]; }
  void validate() const;
};

RankTable compute_ranks(const MultilingualCorpus& corpus, Direction direction);

// Fraction of instances with rank <= k, per language.
std::vector<double> recall_at_k(const RankTable& table, std::size_t k);

// Mean over instances and languages of the squared deviation of each rank from
// the instance's mean rank. Needs K >= 2.
double mrv(const RankTable& table);

// Per-instance mean rank over languages.
std::vector<double> mean_ranks(const RankTable& table);

struct RecallTriple {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
};

struct MetricsReport {
  Direction direction = Direction::TR;
  std::vector<std::string> languages;
  std::vector<RecallTriple> per_language;
  RecallTriple mean_recall;
  double mrv = 0.0;  // 0 when K == 1
  std::vector<double> mean_rank;
  double recall_gap = 0.0;  // max - min per-language Recall@1

  // {direction, per_language: {lang: {r1, r5, r10}}, mean_recall, mrv, recall_gap}
  nlohmann::ordered_json to_json() const;
};

MetricsReport summarize(const RankTable& table, const std::vector<std::string>& languages);
MetricsReport evaluate(const MultilingualCorpus& corpus, Direction direction);

struct CandidatePair {
  std::size_t text_instance = 0;
  std::size_t language = 0;
  std::size_t image_instance = 0;
  std::span<const double> text;
  std::span<const double> image;
};

// Higher score = better match.
using PairScorer = std::function<double(const CandidatePair&)>;

// 1 for the true pair, 0 otherwise.
PairScorer oracle_scorer();
// Match probability from a trained MITM head. The head must outlive the scorer.
PairScorer mitm_scorer(const MitmHead& head);

inline constexpr std::size_t kDefaultRerankTopN = 128;
inline constexpr std::size_t kLargePoolRerankTopN = 256;

struct RerankConfig {
  std::size_t top_n = kDefaultRerankTopN;
  PairScorer scorer;

  // 256 for pools above 10^4 candidates, 128 otherwise.
  static std::size_t default_top_n(std::size_t pool_size);
};

// Candidate indices for one query, best first: TR candidates are instance
// indices of language `language`; IR candidates are image instance indices.
// With a rerank config, the first top_n are re-sorted by score (stable).
std::vector<std::size_t> ranked_candidates(const MultilingualCorpus& corpus, Direction direction,
                                           std::size_t instance, std::size_t language,
                                           const RerankConfig* rerank = nullptr);

RankTable rerank_top_n(const MultilingualCorpus& corpus, Direction direction,
                       const RerankConfig& cfg);

}  // namespace ccrk
