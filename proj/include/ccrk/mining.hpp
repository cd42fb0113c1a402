#pragma once

// Hard positive / hard negative sampling distributions. The raw formulas can
// produce negative weights (negative cosine similarities) and the positive
// distribution sums to K-1, so similarities are shifted to be non-negative
// (plus kMiningEpsilon) and every distribution is renormalized to 1.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccrk/corpus.hpp"
#include "ccrk/numerics.hpp"

namespace ccrk {

enum class MiningWeighting { LinearShift, Softmax };
enum class MiningKind { HardPositiveText, HardNegativeImage, HardNegativeText };

MiningWeighting parse_mining_weighting(const std::string& name);
const char* to_string(MiningWeighting w);

inline constexpr double kMiningEpsilon = 1e-6;

struct MiningDistribution {
  std::vector<double> weights;
  // Candidate indices matching `weights`: language index for hard positives,
  // instance index for negative images, text row (n * K + k) for negative texts.
  std::vector<std::size_t> support;
  MiningKind kind = MiningKind::HardPositiveText;
};

// Weights over the K positives of one instance; lower similarity -> higher weight.
MiningDistribution hard_positive_dist(std::span<const double> sims,
                                      MiningWeighting weighting = MiningWeighting::LinearShift);

// Candidates j' != anchor weighted by sum_k t_{anchor,k} . i_{j'}.
MiningDistribution hard_negative_image_dist(const MultilingualCorpus& corpus, std::size_t anchor,
                                            MiningWeighting weighting = MiningWeighting::LinearShift);

// Texts (n, k), n != anchor, weighted by i_anchor . t_{n,k}.
MiningDistribution hard_negative_text_dist(const MultilingualCorpus& corpus, std::size_t anchor,
                                           MiningWeighting weighting = MiningWeighting::LinearShift);

// Draws one support element.
std::size_t sample(const MiningDistribution& dist, Rng& rng);

struct MinedSamples {
  std::vector<std::size_t> positive_language;                        // k_pos per instance
  std::vector<std::pair<std::size_t, std::size_t>> negative_text;    // (instance, language)
  std::vector<std::size_t> negative_image;
};

// One hard positive, one hard negative text and one hard negative image per instance.
// Draw order per instance: positive, negative text, negative image.
MinedSamples mine_hard_samples(const MultilingualCorpus& corpus, MiningWeighting weighting,
                               Rng& rng);

}  // namespace ccrk
