#include "ccrk/mining.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccrk/error.hpp"

namespace ccrk {

MiningWeighting parse_mining_weighting(const std::string& name) {
  if (name == "linear_shift") return MiningWeighting::LinearShift;
  if (name == "softmax") return MiningWeighting::Softmax;
  throw Error(ErrorCode::InvalidConfig, "unknown mining weighting '" + name + "'");
}

const char* to_string(MiningWeighting w) {
  return w == MiningWeighting::LinearShift ? "linear_shift" : "softmax";
}

namespace {

std::vector<double> shifted(std::span<const double> sims) {
  const double lowest = *std::min_element(sims.begin(), sims.end());
  const double shift = -std::min(0.0, lowest) + kMiningEpsilon;
  std::vector<double> out(sims.begin(), sims.end());
  for (double& s : out) s += shift;
  return out;
}

std::vector<double> proportional(std::span<const double> sims, MiningWeighting weighting) {
  std::vector<double> w(sims.size());
  if (weighting == MiningWeighting::Softmax) {
    softmax(sims, w);
    return w;
  }
  w = shifted(sims);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

MiningDistribution hard_positive_dist(std::span<const double> sims, MiningWeighting weighting) {
  if (sims.empty()) throw Error(ErrorCode::EmptyInput, "hard_positive_dist needs K >= 1");
  MiningDistribution dist;
  dist.kind = MiningKind::HardPositiveText;
  dist.support.resize(sims.size());
  std::iota(dist.support.begin(), dist.support.end(), std::size_t{0});
  const std::size_t k = sims.size();
  if (k == 1) {
    dist.weights = {1.0};
    return dist;
  }
  if (weighting == MiningWeighting::Softmax) {
    std::vector<double> negated(sims.begin(), sims.end());
    for (double& s : negated) s = -s;
    dist.weights.resize(k);
    softmax(negated, dist.weights);
    return dist;
  }
  const std::vector<double> s = shifted(sims);
  const double total = std::accumulate(s.begin(), s.end(), 0.0);
  dist.weights.resize(k);
  // 1 - s_k / sum(s) sums to K - 1 over k.
  for (std::size_t i = 0; i < k; ++i) {
    dist.weights[i] = (1.0 - s[i] / total) / static_cast<double>(k - 1);
  }
  return dist;
}

MiningDistribution hard_negative_image_dist(const MultilingualCorpus& corpus, std::size_t anchor,
                                            MiningWeighting weighting) {
  if (corpus.n_instances < 2) {
    throw Error(ErrorCode::DegenerateBatch, "hard negatives need at least two instances");
  }
  if (anchor >= corpus.n_instances) throw Error(ErrorCode::ShapeMismatch, "anchor out of range");
  MiningDistribution dist;
  dist.kind = MiningKind::HardNegativeImage;
  std::vector<double> sims;
  for (std::size_t cand = 0; cand < corpus.n_instances; ++cand) {
    if (cand == anchor) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < corpus.n_languages; ++k) {
      s += dot(corpus.text(anchor, k), corpus.image(cand));
    }
    sims.push_back(s);
    dist.support.push_back(cand);
  }
  dist.weights = proportional(sims, weighting);
  return dist;
}

MiningDistribution hard_negative_text_dist(const MultilingualCorpus& corpus, std::size_t anchor,
                                           MiningWeighting weighting) {
  if (corpus.n_instances < 2) {
    throw Error(ErrorCode::DegenerateBatch, "hard negatives need at least two instances");
  }
  if (anchor >= corpus.n_instances) throw Error(ErrorCode::ShapeMismatch, "anchor out of range");
  MiningDistribution dist;
  dist.kind = MiningKind::HardNegativeText;
  std::vector<double> sims;
  for (std::size_t n = 0; n < corpus.n_instances; ++n) {
    if (n == anchor) continue;
    for (std::size_t k = 0; k < corpus.n_languages; ++k) {
      sims.push_back(dot(corpus.image(anchor), corpus.text(n, k)));
      dist.support.push_back(corpus.text_row(n, k));
    }
  }
  dist.weights = proportional(sims, weighting);
  return dist;
}

std::size_t sample(const MiningDistribution& dist, Rng& rng) {
  if (dist.weights.empty() || dist.weights.size() != dist.support.size()) {
    throw Error(ErrorCode::InvalidConfig, "malformed mining distribution");
  }
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.weights.size(); ++i) {
    if (dist.weights[i] <= 0.0) continue;
    last_positive = i;
    cumulative += dist.weights[i];
    if (u < cumulative) return dist.support[i];
  }
  // Rounding left the cumulative sum just below u.
  return dist.support[last_positive];
}

MinedSamples mine_hard_samples(const MultilingualCorpus& corpus, MiningWeighting weighting,
                               Rng& rng) {
  MinedSamples out;
  std::vector<double> sims(corpus.n_languages);
  for (std::size_t j = 0; j < corpus.n_instances; ++j) {
    for (std::size_t k = 0; k < corpus.n_languages; ++k) {
      sims[k] = dot(corpus.text(j, k), corpus.image(j));
    }
    out.positive_language.push_back(sample(hard_positive_dist(sims, weighting), rng));
    const std::size_t text_row = sample(hard_negative_text_dist(corpus, j, weighting), rng);
    out.negative_text.emplace_back(text_row / corpus.n_languages, text_row % corpus.n_languages);
    out.negative_image.push_back(sample(hard_negative_image_dist(corpus, j, weighting), rng));
  }
  return out;
}

}  // namespace ccrk
