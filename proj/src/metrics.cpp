#include "ccrk/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "ccrk/error.hpp"
#include "ccrk/losses.hpp"

namespace ccrk {

const char* to_string(Direction d) { return d == Direction::TR ? "TR" : "IR"; }

Direction parse_direction(const std::string& name) {
  if (name == "tr" || name == "TR") return Direction::TR;
  if (name == "ir" || name == "IR") return Direction::IR;
  throw Error(ErrorCode::InvalidConfig, "unknown direction '" + name + "'");
}

void RankTable::validate() const {
  if (ranks.size() != n_instances * n_languages || pool_sizes.size() != n_languages) {
    throw Error(ErrorCode::ShapeMismatch, "rank table shape");
  }
  for (std::size_t j = 0; j < n_instances; ++j) {
    for (std::size_t k = 0; k < n_languages; ++k) {
      const std::size_t r = rank(j, k);
      if (r < 1 || r > pool_sizes[k]) throw Error(ErrorCode::InvalidConfig, "rank out of range");
    }
  }
}

namespace {

void require_normalized(const MultilingualCorpus& corpus) {
  if (!corpus.normalized) throw Error(ErrorCode::NotNormalized, "retrieval needs a normalized corpus");
}

// Similarity of the query to every candidate in its pool.
std::vector<double> pool_scores(const MultilingualCorpus& c, Direction direction, std::size_t j,
                                std::size_t k) {
  std::vector<double> s(c.n_instances);
  for (std::size_t n = 0; n < c.n_instances; ++n) {
    s[n] = direction == Direction::TR ? dot(c.image(j), c.text(n, k)) : dot(c.text(j, k), c.image(n));
  }
  return s;
}

std::vector<std::size_t> cosine_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

RankTable compute_ranks(const MultilingualCorpus& corpus, Direction direction) {
  require_normalized(corpus);
  RankTable t;
  t.direction = direction;
  t.n_instances = corpus.n_instances;
  t.n_languages = corpus.n_languages;
  t.pool_sizes.assign(corpus.n_languages, corpus.n_instances);
  t.ranks.resize(corpus.n_instances * corpus.n_languages);
  for (std::size_t j = 0; j < corpus.n_instances; ++j) {
    for (std::size_t k = 0; k < corpus.n_languages; ++k) {
      const auto s = pool_scores(corpus, direction, j, k);
      std::size_t rank = 1;
      for (std::size_t n = 0; n < s.size(); ++n) {
        if (s[n] > s[j] || (s[n] == s[j] && n < j)) ++rank;
      }
      t.ranks[j * corpus.n_languages + k] = rank;
    }
  }
  return t;
}

std::vector<double> recall_at_k(const RankTable& table, std::size_t k) {
  std::vector<double> out(table.n_languages, 0.0);
  for (std::size_t lang = 0; lang < table.n_languages; ++lang) {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < table.n_instances; ++j) hits += table.rank(j, lang) <= k ? 1 : 0;
    out[lang] = static_cast<double>(hits) / static_cast<double>(table.n_instances);
  }
  return out;
}

std::vector<double> mean_ranks(const RankTable& table) {
  std::vector<double> out(table.n_instances, 0.0);
  for (std::size_t j = 0; j < table.n_instances; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < table.n_languages; ++k) s += static_cast<double>(table.rank(j, k));
    out[j] = s / static_cast<double>(table.n_languages);
  }
  return out;
}

double mrv(const RankTable& table) {
  if (table.n_languages < 2) throw Error(ErrorCode::SingleLanguage, "MRV needs K >= 2");
  const auto means = mean_ranks(table);
  double total = 0.0;
  for (std::size_t j = 0; j < table.n_instances; ++j) {
    for (std::size_t k = 0; k < table.n_languages; ++k) {
      const double dev = static_cast<double>(table.rank(j, k)) - means[j];
      total += dev * dev;
    }
  }
  return total / static_cast<double>(table.n_instances * table.n_languages);
}

MetricsReport summarize(const RankTable& table, const std::vector<std::string>& languages) {
  if (languages.size() != table.n_languages) {
    throw Error(ErrorCode::DimensionMismatch, "language list does not match rank table");
  }
  MetricsReport m;
  m.direction = table.direction;
  m.languages = languages;
  const auto r1 = recall_at_k(table, 1), r5 = recall_at_k(table, 5), r10 = recall_at_k(table, 10);
  const double inv_k = 1.0 / static_cast<double>(table.n_languages);
  for (std::size_t k = 0; k < table.n_languages; ++k) {
    m.per_language.push_back({r1[k], r5[k], r10[k]});
    m.mean_recall.r1 += r1[k] * inv_k;
    m.mean_recall.r5 += r5[k] * inv_k;
    m.mean_recall.r10 += r10[k] * inv_k;
  }
  m.mrv = table.n_languages >= 2 ? mrv(table) : 0.0;
  m.mean_rank = mean_ranks(table);
  const auto [lo, hi] = std::minmax_element(r1.begin(), r1.end());
  m.recall_gap = *hi - *lo;
  return m;
}

MetricsReport evaluate(const MultilingualCorpus& corpus, Direction direction) {
  return summarize(compute_ranks(corpus, direction), corpus.language_codes);
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["direction"] = to_string(direction);
  nlohmann::ordered_json langs = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < languages.size(); ++k) {
    nlohmann::ordered_json r;
    r["r1"] = per_language[k].r1;
    r["r5"] = per_language[k].r5;
    r["r10"] = per_language[k].r10;
    langs[languages[k]] = r;
  }
  j["per_language"] = langs;
  nlohmann::ordered_json mean;
  mean["r1"] = mean_recall.r1;
  mean["r5"] = mean_recall.r5;
  mean["r10"] = mean_recall.r10;
  j["mean_recall"] = mean;
  j["mrv"] = mrv;
  j["recall_gap"] = recall_gap;
  return j;
}

PairScorer oracle_scorer() {
  return [](const CandidatePair& p) { return p.text_instance == p.image_instance ? 1.0 : 0.0; };
}

PairScorer mitm_scorer(const MitmHead& head) {
  return [&head](const CandidatePair& p) { return head.match_probability(p.text, p.image); };
}

std::size_t RerankConfig::default_top_n(std::size_t pool_size) {
  return pool_size > 10000 ? kLargePoolRerankTopN : kDefaultRerankTopN;
}

std::vector<std::size_t> ranked_candidates(const MultilingualCorpus& corpus, Direction direction,
                                           std::size_t instance, std::size_t language,
                                           const RerankConfig* rerank) {
  require_normalized(corpus);
  if (instance >= corpus.n_instances || language >= corpus.n_languages) {
    throw Error(ErrorCode::ShapeMismatch, "query out of range");
  }
  auto order = cosine_order(pool_scores(corpus, direction, instance, language));
  if (rerank == nullptr) return order;
  if (rerank->top_n < 1) throw Error(ErrorCode::InvalidConfig, "top_n must be >= 1");
  if (!rerank->scorer) throw Error(ErrorCode::InvalidConfig, "re-ranking needs a scorer");
  const std::size_t block = std::min(rerank->top_n, order.size());
  std::vector<double> score(corpus.n_instances, 0.0);
  for (std::size_t i = 0; i < block; ++i) {
    const std::size_t cand = order[i];
    CandidatePair pair;
    pair.language = language;
    if (direction == Direction::TR) {
      pair.text_instance = cand;
      pair.image_instance = instance;
    } else {
      pair.text_instance = instance;
      pair.image_instance = cand;
    }
    pair.text = corpus.text(pair.text_instance, language);
    pair.image = corpus.image(pair.image_instance);
    score[cand] = rerank->scorer(pair);
  }
  std::stable_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(block),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

RankTable rerank_top_n(const MultilingualCorpus& corpus, Direction direction,
                       const RerankConfig& cfg) {
  RankTable t;
  t.direction = direction;
  t.n_instances = corpus.n_instances;
  t.n_languages = corpus.n_languages;
  t.pool_sizes.assign(corpus.n_languages, corpus.n_instances);
  t.ranks.resize(corpus.n_instances * corpus.n_languages);
  for (std::size_t j = 0; j < corpus.n_instances; ++j) {
    for (std::size_t k = 0; k < corpus.n_languages; ++k) {
      const auto order = ranked_candidates(corpus, direction, j, k, &cfg);
      const auto pos = std::find(order.begin(), order.end(), j) - order.begin();
      t.ranks[j * corpus.n_languages + k] = static_cast<std::size_t>(pos) + 1;
    }
  }
  return t;
}

}  // namespace ccrk
