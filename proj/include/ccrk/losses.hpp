#pragma once

// Training objectives with hand-derived gradients. Every gradient is taken with
// respect to the (already normalized) embeddings fed in; back-propagation
// through normalization belongs to the encoder maps in the trainer.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccrk/corpus.hpp"
#include "ccrk/mining.hpp"
#include "ccrk/numerics.hpp"

namespace ccrk {

enum class ContrastMode { OneToK, OneToOne };

struct LossConfig {
  double tau = 0.07;
  ContrastMode mode = ContrastMode::OneToK;

  void validate() const;
};

struct LossComponent {
  std::string name;
  double value = 0.0;
};

struct LossReport {
  double value = 0.0;
  DenseMatrix grad_images;
  DenseMatrix grad_texts;
  std::vector<double> grad_params;
  std::vector<LossComponent> components;

  // Value of a named component; throws InvalidConfig when absent.
  double component(std::string_view name) const;
};

// --- contrastive objectives ------------------------------------------------

// 1-to-K image-to-text loss. Every image scores all N*K texts; its K positives
// each carry target weight 1/K. Mean over images.
LossReport kcl_i2t(const MultilingualCorpus& corpus, const LossConfig& cfg);
// Text-to-image loss over the N images, mean over all N*K texts.
LossReport kcl_t2i(const MultilingualCorpus& corpus, const LossConfig& cfg);

// Matrix-level forms. No normalization check: the caller guarantees unit rows
// (the gradient checks probe off the sphere on purpose). texts is (N*K) x d.
LossReport kcl_i2t(const DenseMatrix& images, const DenseMatrix& texts, std::size_t n_languages,
                   double tau);
LossReport kcl_t2i(const DenseMatrix& images, const DenseMatrix& texts, std::size_t n_languages,
                   double tau);

// Both directions of the 1-to-1 baseline, with the sampled language per instance.
struct OneToOneTerms {
  std::vector<std::size_t> languages;
  LossReport i2t;
  LossReport t2i;
};

OneToOneTerms cl_1to1_terms(const DenseMatrix& images, const DenseMatrix& texts,
                            std::size_t n_languages, double tau, Rng& rng);
OneToOneTerms cl_1to1_terms(const MultilingualCorpus& corpus, const LossConfig& cfg, Rng& rng);

// Symmetric InfoNCE on one randomly chosen language per instance; value and
// gradients are the mean of the two directions.
LossReport cl_1to1(const MultilingualCorpus& corpus, const LossConfig& cfg, Rng& rng);

// --- MITM ------------------------------------------------------------------

// Stand-in fusion scorer: u = tanh(W [text; image] + b), s(u) = psi . u + c.
struct MitmHead {
  std::size_t dim = 0;
  std::size_t fused_dim = 0;
  DenseMatrix fusion_weight;  // fused_dim x 2*dim
  std::vector<double> fusion_bias;
  std::vector<double> score_weight;
  double score_bias = 0.0;

  MitmHead() = default;
  MitmHead(std::size_t dim, std::size_t fused_dim);
  // Gaussian entries with standard deviation 0.02.
  static MitmHead init(std::size_t dim, std::size_t fused_dim, Rng& rng);

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  std::vector<std::span<double>> parameter_blocks();

  double score(std::span<const double> text, std::span<const double> image) const;
  // sigmoid(score): probability that the pair matches.
  double match_probability(std::span<const double> text, std::span<const double> image) const;

  friend bool operator==(const MitmHead&, const MitmHead&) = default;
};

// -log(e^pos / (e^pos + e^neg)), stable for large gaps.
double pairwise_logistic_loss(double pos_score, double neg_score);

// Sum of the i2t and t2i matching terms. grad_texts rows: {positive_text,
// negative_text}; grad_images rows: {image, negative_image}; grad_params
// follows MitmHead::flatten().
LossReport mitm_loss(const MitmHead& head, std::span<const double> positive_text,
                     std::span<const double> image, std::span<const double> negative_text,
                     std::span<const double> negative_image);

// --- CMLM ------------------------------------------------------------------

// Context u = mean of unmasked token embeddings + image_projection * image;
// rho(u, w) = output_embeddings[w] . u.
struct CmlmHead {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  std::size_t token_dim = 0;
  DenseMatrix token_embeddings;   // vocab x token_dim
  DenseMatrix image_projection;   // token_dim x dim
  DenseMatrix output_embeddings;  // vocab x token_dim

  CmlmHead() = default;
  CmlmHead(std::size_t vocab_size, std::size_t dim, std::size_t token_dim);
  static CmlmHead init(std::size_t vocab_size, std::size_t dim, std::size_t token_dim, Rng& rng,
                       double scale = 0.1);

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  std::vector<std::span<double>> parameter_blocks();

  friend bool operator==(const CmlmHead&, const CmlmHead&) = default;
};

inline constexpr double kDefaultMaskRate = 0.15;

struct MaskedSequence {
  std::vector<std::uint32_t> tokens;  // masked positions hold TokenCorpus::kMaskToken
  std::vector<std::size_t> positions; // ascending
};

// Masks round(rate * length) positions (at least one) chosen uniformly without replacement.
MaskedSequence mask_tokens(std::span<const std::uint32_t> tokens, double rate, Rng& rng);

// Mean cross-entropy over masked positions. `tokens` is the original sequence.
// grad_images is 1 x dim; grad_params follows CmlmHead::flatten().
LossReport cmlm_loss(const CmlmHead& head, std::span<const std::uint32_t> tokens,
                     std::span<const double> image, std::span<const std::size_t> mask);

// --- combined objective ----------------------------------------------------

struct AuxHeads {
  std::optional<MitmHead> mitm;
  std::optional<CmlmHead> cmlm;
};

// L = contrastive i2t + contrastive t2i + MITM i2t + MITM t2i + CMLM, unit weights.
// cfg.mode picks the contrastive pair (1-to-K or the 1-to-1 ablation). Absent
// heads drop their terms. MITM / CMLM inputs come from hard mining; the CMLM
// text is the hard positive with mask_rate of its tokens masked.
// grad_params = [mitm params..., cmlm params...].
LossReport combined_loss(const MultilingualCorpus& corpus, const TokenCorpus* tokens,
                         const AuxHeads& heads, const LossConfig& cfg, MiningWeighting weighting,
                         Rng& rng, double mask_rate = kDefaultMaskRate);

}  // namespace ccrk
