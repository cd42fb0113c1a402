#include "ccrk/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccrk/error.hpp"

namespace ccrk {

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidConfig, "temperature must be finite and positive");
  }
}

double LossReport::component(std::string_view name) const {
  for (const auto& c : components) {
    if (c.name == name) return c.value;
  }
  throw Error(ErrorCode::InvalidConfig, "no loss component named " + std::string(name));
}

namespace {

void require_normalized(const MultilingualCorpus& corpus) {
  if (!corpus.normalized) {
    throw Error(ErrorCode::NotNormalized, "contrastive losses need a normalized corpus");
  }
}

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

struct XentResult {
  double value = 0.0;
  DenseMatrix grad_queries;
  DenseMatrix grad_candidates;
};

// Softmax cross-entropy of each query against every candidate with uniform soft
// targets over positives[q]. Per-query losses are summed in sorted order so the
// mean does not depend on query order.
XentResult soft_target_xent(const DenseMatrix& queries, const DenseMatrix& candidates,
                            const std::vector<std::vector<std::size_t>>& positives, double tau) {
  const std::size_t nq = queries.rows(), nc = candidates.rows();
  XentResult out{0.0, DenseMatrix(nq, queries.cols()), DenseMatrix(nc, candidates.cols())};
  std::vector<double> per_query(nq);
  std::vector<double> logits(nc), probs(nc);
  const double inv_nq = 1.0 / static_cast<double>(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t c = 0; c < nc; ++c) logits[c] = dot(queries.row(q), candidates.row(c)) / tau;
    const double lse = log_sum_exp(logits);
    const auto& pos = positives[q];
    const double weight = 1.0 / static_cast<double>(pos.size());
    double positive_sum = 0.0;
    for (std::size_t p : pos) positive_sum += logits[p];
    per_query[q] = lse - weight * positive_sum;

    for (std::size_t c = 0; c < nc; ++c) probs[c] = std::exp(logits[c] - lse);
    for (std::size_t p : pos) probs[p] -= weight;
    auto gq = out.grad_queries.row(q);
    for (std::size_t c = 0; c < nc; ++c) {
      const double g = probs[c] * inv_nq / tau;
      add_scaled(gq, candidates.row(c), g);
      add_scaled(out.grad_candidates.row(c), queries.row(q), g);
    }
  }
  std::sort(per_query.begin(), per_query.end());
  out.value = std::accumulate(per_query.begin(), per_query.end(), 0.0) * inv_nq;
  return out;
}

void check_shapes(const DenseMatrix& images, const DenseMatrix& texts, std::size_t n_languages) {
  if (n_languages == 0 || texts.rows() != images.rows() * n_languages ||
      texts.cols() != images.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "texts must be (N*K) x d for N x d images");
  }
}

void check_tau(double tau) { LossConfig{tau, ContrastMode::OneToK}.validate(); }

}  // namespace

LossReport kcl_i2t(const DenseMatrix& images, const DenseMatrix& texts, std::size_t n_languages,
                   double tau) {
  check_shapes(images, texts, n_languages);
  check_tau(tau);
  if (texts.rows() < 2) throw Error(ErrorCode::DegenerateBatch, "kcl_i2t needs N*K >= 2");
  std::vector<std::vector<std::size_t>> positives(images.rows());
  for (std::size_t j = 0; j < images.rows(); ++j) {
    for (std::size_t k = 0; k < n_languages; ++k) positives[j].push_back(j * n_languages + k);
  }
  auto x = soft_target_xent(images, texts, positives, tau);
  LossReport r;
  r.value = x.value;
  r.grad_images = std::move(x.grad_queries);
  r.grad_texts = std::move(x.grad_candidates);
  r.components = {{"kcl_i2t", r.value}};
  return r;
}

LossReport kcl_t2i(const DenseMatrix& images, const DenseMatrix& texts, std::size_t n_languages,
                   double tau) {
  check_shapes(images, texts, n_languages);
  check_tau(tau);
  if (images.rows() < 2) throw Error(ErrorCode::DegenerateBatch, "kcl_t2i needs N >= 2");
  std::vector<std::vector<std::size_t>> positives(texts.rows());
  for (std::size_t r = 0; r < texts.rows(); ++r) positives[r] = {r / n_languages};
  auto x = soft_target_xent(texts, images, positives, tau);
  LossReport r;
  r.value = x.value;
  r.grad_images = std::move(x.grad_candidates);
  r.grad_texts = std::move(x.grad_queries);
  r.components = {{"kcl_t2i", r.value}};
  return r;
}

LossReport kcl_i2t(const MultilingualCorpus& corpus, const LossConfig& cfg) {
  require_normalized(corpus);
  return kcl_i2t(corpus.images, corpus.texts, corpus.n_languages, cfg.tau);
}

LossReport kcl_t2i(const MultilingualCorpus& corpus, const LossConfig& cfg) {
  require_normalized(corpus);
  return kcl_t2i(corpus.images, corpus.texts, corpus.n_languages, cfg.tau);
}

OneToOneTerms cl_1to1_terms(const DenseMatrix& images, const DenseMatrix& texts,
                            std::size_t n_languages, double tau, Rng& rng) {
  check_shapes(images, texts, n_languages);
  check_tau(tau);
  const std::size_t n = images.rows();
  if (n < 2) throw Error(ErrorCode::DegenerateBatch, "1-to-1 contrastive loss needs N >= 2");
  OneToOneTerms terms;
  DenseMatrix selected(n, images.cols());
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = rng.uniform_index(n_languages);
    terms.languages.push_back(k);
    auto src = texts.row(j * n_languages + k);
    std::copy(src.begin(), src.end(), selected.row(j).begin());
  }
  std::vector<std::vector<std::size_t>> diagonal(n);
  for (std::size_t j = 0; j < n; ++j) diagonal[j] = {j};

  auto scatter = [&](const DenseMatrix& grad_selected) {
    DenseMatrix full(texts.rows(), texts.cols());
    for (std::size_t j = 0; j < n; ++j) {
      auto src = grad_selected.row(j);
      std::copy(src.begin(), src.end(), full.row(j * n_languages + terms.languages[j]).begin());
    }
    return full;
  };

  auto i2t = soft_target_xent(images, selected, diagonal, tau);
  terms.i2t.value = i2t.value;
  terms.i2t.grad_images = std::move(i2t.grad_queries);
  terms.i2t.grad_texts = scatter(i2t.grad_candidates);
  terms.i2t.components = {{"cl_i2t", i2t.value}};

  auto t2i = soft_target_xent(selected, images, diagonal, tau);
  terms.t2i.value = t2i.value;
  terms.t2i.grad_images = std::move(t2i.grad_candidates);
  terms.t2i.grad_texts = scatter(t2i.grad_queries);
  terms.t2i.components = {{"cl_t2i", t2i.value}};
  return terms;
}

OneToOneTerms cl_1to1_terms(const MultilingualCorpus& corpus, const LossConfig& cfg, Rng& rng) {
  require_normalized(corpus);
  return cl_1to1_terms(corpus.images, corpus.texts, corpus.n_languages, cfg.tau, rng);
}

LossReport cl_1to1(const MultilingualCorpus& corpus, const LossConfig& cfg, Rng& rng) {
  auto terms = cl_1to1_terms(corpus, cfg, rng);
  LossReport r;
  r.value = (terms.i2t.value + terms.t2i.value) / 2.0;
  r.grad_images = DenseMatrix(corpus.n_instances, corpus.dim);
  r.grad_texts = DenseMatrix(corpus.texts.rows(), corpus.dim);
  add_scaled(r.grad_images.values(), terms.i2t.grad_images.values(), 0.5);
  add_scaled(r.grad_images.values(), terms.t2i.grad_images.values(), 0.5);
  add_scaled(r.grad_texts.values(), terms.i2t.grad_texts.values(), 0.5);
  add_scaled(r.grad_texts.values(), terms.t2i.grad_texts.values(), 0.5);
  r.components = {{"cl_i2t", terms.i2t.value}, {"cl_t2i", terms.t2i.value}};
  return r;
}

// ---------------------------------------------------------------------------
// MITM

MitmHead::MitmHead(std::size_t d, std::size_t fused)
    : dim(d),
      fused_dim(fused),
      fusion_weight(fused, 2 * d),
      fusion_bias(fused, 0.0),
      score_weight(fused, 0.0) {}

MitmHead MitmHead::init(std::size_t d, std::size_t fused, Rng& rng) {
  MitmHead h(d, fused);
  for (double& w : h.fusion_weight.values()) w = 0.02 * rng.normal();
  for (double& w : h.fusion_bias) w = 0.02 * rng.normal();
  for (double& w : h.score_weight) w = 0.02 * rng.normal();
  h.score_bias = 0.02 * rng.normal();
  return h;
}

std::size_t MitmHead::parameter_count() const {
  return fusion_weight.size() + fusion_bias.size() + score_weight.size() + 1;
}

std::vector<std::span<double>> MitmHead::parameter_blocks() {
  return {fusion_weight.values(), fusion_bias, score_weight, std::span<double>(&score_bias, 1)};
}

std::vector<double> MitmHead::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto vals = fusion_weight.values();
  flat.insert(flat.end(), vals.begin(), vals.end());
  flat.insert(flat.end(), fusion_bias.begin(), fusion_bias.end());
  flat.insert(flat.end(), score_weight.begin(), score_weight.end());
  flat.push_back(score_bias);
  return flat;
}

void MitmHead::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorCode::ShapeMismatch, "MITM parameter count");
  std::size_t at = 0;
  for (auto block : parameter_blocks()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), block.size(), block.begin());
    at += block.size();
  }
}

namespace {

struct FusionPass {
  std::vector<double> input;  // [text; image]
  std::vector<double> fused;  // tanh activations
  double score = 0.0;
};

FusionPass fuse(const MitmHead& head, std::span<const double> text, std::span<const double> image) {
  if (text.size() != head.dim || image.size() != head.dim) {
    throw Error(ErrorCode::ShapeMismatch, "MITM input width does not match head");
  }
  FusionPass pass;
  pass.input.assign(text.begin(), text.end());
  pass.input.insert(pass.input.end(), image.begin(), image.end());
  pass.fused.resize(head.fused_dim);
  pass.score = head.score_bias;
  for (std::size_t r = 0; r < head.fused_dim; ++r) {
    pass.fused[r] = std::tanh(dot(head.fusion_weight.row(r), pass.input) + head.fusion_bias[r]);
    pass.score += head.score_weight[r] * pass.fused[r];
  }
  return pass;
}

// Accumulates upstream * d score / d (params, text, image).
void fuse_backward(const MitmHead& head, const FusionPass& pass, double upstream, MitmHead& grads,
                   std::span<double> grad_text, std::span<double> grad_image) {
  grads.score_bias += upstream;
  for (std::size_t r = 0; r < head.fused_dim; ++r) {
    const double u = pass.fused[r];
    grads.score_weight[r] += upstream * u;
    const double pre = upstream * head.score_weight[r] * (1.0 - u * u);
    grads.fusion_bias[r] += pre;
    add_scaled(grads.fusion_weight.row(r), pass.input, pre);
    auto w = head.fusion_weight.row(r);
    for (std::size_t c = 0; c < head.dim; ++c) {
      grad_text[c] += pre * w[c];
      grad_image[c] += pre * w[head.dim + c];
    }
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double MitmHead::score(std::span<const double> text, std::span<const double> image) const {
  return fuse(*this, text, image).score;
}

double MitmHead::match_probability(std::span<const double> text,
                                   std::span<const double> image) const {
  return sigmoid(score(text, image));
}

double pairwise_logistic_loss(double pos_score, double neg_score) {
  // log(1 + exp(neg - pos))
  const double gap = neg_score - pos_score;
  return gap > 0 ? gap + std::log1p(std::exp(-gap)) : std::log1p(std::exp(gap));
}

LossReport mitm_loss(const MitmHead& head, std::span<const double> positive_text,
                     std::span<const double> image, std::span<const double> negative_text,
                     std::span<const double> negative_image) {
  const FusionPass pos = fuse(head, positive_text, image);
  const FusionPass neg_text = fuse(head, negative_text, image);
  const FusionPass neg_image = fuse(head, positive_text, negative_image);

  const double i2t = pairwise_logistic_loss(pos.score, neg_text.score);
  const double t2i = pairwise_logistic_loss(pos.score, neg_image.score);

  // d/d neg = sigmoid(neg - pos), d/d pos = -sigmoid(neg - pos)
  const double g_nt = sigmoid(neg_text.score - pos.score);
  const double g_ni = sigmoid(neg_image.score - pos.score);

  LossReport r;
  r.value = i2t + t2i;
  r.components = {{"mitm_i2t", i2t}, {"mitm_t2i", t2i}};
  r.grad_texts = DenseMatrix(2, head.dim);
  r.grad_images = DenseMatrix(2, head.dim);
  MitmHead grads(head.dim, head.fused_dim);
  fuse_backward(head, pos, -(g_nt + g_ni), grads, r.grad_texts.row(0), r.grad_images.row(0));
  fuse_backward(head, neg_text, g_nt, grads, r.grad_texts.row(1), r.grad_images.row(0));
  fuse_backward(head, neg_image, g_ni, grads, r.grad_texts.row(0), r.grad_images.row(1));
  r.grad_params = grads.flatten();
  return r;
}

// ---------------------------------------------------------------------------
// CMLM

CmlmHead::CmlmHead(std::size_t vocab, std::size_t d, std::size_t token_d)
    : vocab_size(vocab),
      dim(d),
      token_dim(token_d),
      token_embeddings(vocab, token_d),
      image_projection(token_d, d),
      output_embeddings(vocab, token_d) {}

CmlmHead CmlmHead::init(std::size_t vocab, std::size_t d, std::size_t token_d, Rng& rng,
                        double scale) {
  if (vocab < 1 || d < 1 || token_d < 1) throw Error(ErrorCode::InvalidConfig, "CMLM head shape");
  CmlmHead h(vocab, d, token_d);
  for (auto block : h.parameter_blocks()) {
    for (double& w : block) w = scale * rng.normal();
  }
  return h;
}

std::size_t CmlmHead::parameter_count() const {
  return token_embeddings.size() + image_projection.size() + output_embeddings.size();
}

std::vector<std::span<double>> CmlmHead::parameter_blocks() {
  return {token_embeddings.values(), image_projection.values(), output_embeddings.values()};
}

std::vector<double> CmlmHead::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const DenseMatrix* m : {&token_embeddings, &image_projection, &output_embeddings}) {
    auto v = m->values();
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return flat;
}

void CmlmHead::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorCode::ShapeMismatch, "CMLM parameter count");
  std::size_t at = 0;
  for (auto block : parameter_blocks()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), block.size(), block.begin());
    at += block.size();
  }
}

MaskedSequence mask_tokens(std::span<const std::uint32_t> tokens, double rate, Rng& rng) {
  if (tokens.empty()) throw Error(ErrorCode::EmptySequence, "cannot mask an empty sequence");
  if (!(rate > 0.0 && rate < 1.0)) throw Error(ErrorCode::InvalidConfig, "mask rate must be in (0, 1)");
  const std::size_t len = tokens.size();
  const auto want = static_cast<std::size_t>(std::llround(rate * static_cast<double>(len)));
  const std::size_t count = std::clamp<std::size_t>(want, 1, len);

  std::vector<std::size_t> order(len);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.uniform_index(len - i)]);
  }
  MaskedSequence out;
  out.positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.positions.begin(), out.positions.end());
  out.tokens.assign(tokens.begin(), tokens.end());
  for (std::size_t p : out.positions) out.tokens[p] = TokenCorpus::kMaskToken;
  return out;
}

LossReport cmlm_loss(const CmlmHead& head, std::span<const std::uint32_t> tokens,
                     std::span<const double> image, std::span<const std::size_t> mask) {
  if (image.size() != head.dim) throw Error(ErrorCode::ShapeMismatch, "CMLM image width");
  if (mask.empty()) throw Error(ErrorCode::InvalidConfig, "CMLM mask is empty");
  std::vector<bool> masked(tokens.size(), false);
  for (std::size_t p : mask) {
    if (p >= tokens.size()) throw Error(ErrorCode::ShapeMismatch, "mask position out of range");
    if (masked[p]) throw Error(ErrorCode::InvalidConfig, "duplicate mask position");
    masked[p] = true;
  }
  for (std::uint32_t t : tokens) {
    if (t >= head.vocab_size) throw Error(ErrorCode::ShapeMismatch, "token id outside vocabulary");
  }
  std::vector<std::size_t> context;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (!masked[p]) context.push_back(p);
  }
  if (context.empty()) throw Error(ErrorCode::AllMasked, "every position is masked");

  const std::size_t dt = head.token_dim;
  const double inv_ctx = 1.0 / static_cast<double>(context.size());
  std::vector<double> u(dt, 0.0);
  for (std::size_t p : context) add_scaled(u, head.token_embeddings.row(tokens[p]), inv_ctx);
  for (std::size_t r = 0; r < dt; ++r) u[r] += dot(head.image_projection.row(r), image);

  std::vector<double> logits(head.vocab_size), probs(head.vocab_size);
  for (std::size_t w = 0; w < head.vocab_size; ++w) logits[w] = dot(head.output_embeddings.row(w), u);
  const double lse = log_sum_exp(logits);
  for (std::size_t w = 0; w < head.vocab_size; ++w) probs[w] = std::exp(logits[w] - lse);

  // Every masked position shares u; only the target differs.
  const double inv_m = 1.0 / static_cast<double>(mask.size());
  std::vector<double> dlogits(head.vocab_size);
  for (std::size_t w = 0; w < head.vocab_size; ++w) dlogits[w] = probs[w];
  double value = 0.0;
  for (std::size_t p : mask) {
    value += lse - logits[tokens[p]];
    dlogits[tokens[p]] -= inv_m;
  }
  value *= inv_m;

  CmlmHead grads(head.vocab_size, head.dim, dt);
  std::vector<double> du(dt, 0.0);
  for (std::size_t w = 0; w < head.vocab_size; ++w) {
    add_scaled(grads.output_embeddings.row(w), u, dlogits[w]);
    add_scaled(du, head.output_embeddings.row(w), dlogits[w]);
  }
  for (std::size_t p : context) add_scaled(grads.token_embeddings.row(tokens[p]), du, inv_ctx);

  LossReport r;
  r.value = value;
  r.components = {{"cmlm", value}};
  r.grad_images = DenseMatrix(1, head.dim);
  for (std::size_t row = 0; row < dt; ++row) {
    add_scaled(grads.image_projection.row(row), image, du[row]);
    add_scaled(r.grad_images.row(0), head.image_projection.row(row), du[row]);
  }
  r.grad_params = grads.flatten();
  return r;
}

// ---------------------------------------------------------------------------
// Combined objective

LossReport combined_loss(const MultilingualCorpus& corpus, const TokenCorpus* tokens,
                         const AuxHeads& heads, const LossConfig& cfg, MiningWeighting weighting,
                         Rng& rng, double mask_rate) {
  require_normalized(corpus);
  cfg.validate();
  LossReport out;
  out.grad_images = DenseMatrix(corpus.n_instances, corpus.dim);
  out.grad_texts = DenseMatrix(corpus.texts.rows(), corpus.dim);

  auto absorb = [&](const LossReport& part) {
    add_scaled(out.grad_images.values(), part.grad_images.values(), 1.0);
    add_scaled(out.grad_texts.values(), part.grad_texts.values(), 1.0);
  };

  if (cfg.mode == ContrastMode::OneToK) {
    const LossReport i2t = kcl_i2t(corpus, cfg);
    const LossReport t2i = kcl_t2i(corpus, cfg);
    absorb(i2t);
    absorb(t2i);
    out.components.push_back({"contrastive_i2t", i2t.value});
    out.components.push_back({"contrastive_t2i", t2i.value});
  } else {
    const OneToOneTerms terms = cl_1to1_terms(corpus, cfg, rng);
    absorb(terms.i2t);
    absorb(terms.t2i);
    out.components.push_back({"contrastive_i2t", terms.i2t.value});
    out.components.push_back({"contrastive_t2i", terms.t2i.value});
  }

  if (heads.mitm || heads.cmlm) {
    if (heads.cmlm && tokens == nullptr) {
      throw Error(ErrorCode::InvalidConfig, "CMLM term needs a token corpus");
    }
    if (tokens && (tokens->n_instances != corpus.n_instances ||
                   tokens->n_languages != corpus.n_languages)) {
      throw Error(ErrorCode::DimensionMismatch, "token corpus does not match embedding corpus");
    }
    const MinedSamples mined = mine_hard_samples(corpus, weighting, rng);
    const double inv_n = 1.0 / static_cast<double>(corpus.n_instances);

    if (heads.mitm) {
      const MitmHead& head = *heads.mitm;
      double i2t = 0.0, t2i = 0.0;
      std::vector<double> grad_params(head.parameter_count(), 0.0);
      for (std::size_t j = 0; j < corpus.n_instances; ++j) {
        const std::size_t kpos = mined.positive_language[j];
        const auto [nj, nk] = mined.negative_text[j];
        const std::size_t ni = mined.negative_image[j];
        const LossReport r = mitm_loss(head, corpus.text(j, kpos), corpus.image(j),
                                       corpus.text(nj, nk), corpus.image(ni));
        i2t += r.component("mitm_i2t");
        t2i += r.component("mitm_t2i");
        add_scaled(out.grad_texts.row(corpus.text_row(j, kpos)), r.grad_texts.row(0), inv_n);
        add_scaled(out.grad_texts.row(corpus.text_row(nj, nk)), r.grad_texts.row(1), inv_n);
        add_scaled(out.grad_images.row(j), r.grad_images.row(0), inv_n);
        add_scaled(out.grad_images.row(ni), r.grad_images.row(1), inv_n);
        add_scaled(grad_params, r.grad_params, inv_n);
      }
      out.components.push_back({"mitm_i2t", i2t * inv_n});
      out.components.push_back({"mitm_t2i", t2i * inv_n});
      out.grad_params.insert(out.grad_params.end(), grad_params.begin(), grad_params.end());
    }

    if (heads.cmlm) {
      const CmlmHead& head = *heads.cmlm;
      double total = 0.0;
      std::vector<double> grad_params(head.parameter_count(), 0.0);
      for (std::size_t j = 0; j < corpus.n_instances; ++j) {
        const auto& seq = tokens->sequence(j, mined.positive_language[j]);
        const MaskedSequence masked = mask_tokens(seq, mask_rate, rng);
        const LossReport r = cmlm_loss(head, seq, corpus.image(j), masked.positions);
        total += r.value;
        add_scaled(out.grad_images.row(j), r.grad_images.row(0), inv_n);
        add_scaled(grad_params, r.grad_params, inv_n);
      }
      out.components.push_back({"cmlm", total * inv_n});
      out.grad_params.insert(out.grad_params.end(), grad_params.begin(), grad_params.end());
    }
  }

  out.value = 0.0;
  for (const auto& c : out.components) out.value += c.value;
  return out;
}

}  // namespace ccrk
