#include "ccrk/gradcheck.hpp"

#include <algorithm>

#include "ccrk/error.hpp"
#include "ccrk/losses.hpp"
#include "ccrk/numerics.hpp"

namespace ccrk {

namespace {

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.uniform_index(hi - lo + 1);
}

DenseMatrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return normalize_rows(m);
}

std::vector<double> concat(const DenseMatrix& a, const DenseMatrix& b) {
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return out;
}

std::vector<double> unit_vector(std::size_t d, Rng& rng) {
  DenseMatrix m = random_unit_rows(1, d, rng);
  return {m.values().begin(), m.values().end()};
}

}  // namespace

GradcheckResult gradcheck_kcl(std::size_t trials, std::uint64_t seed) {
  GradcheckResult res{"kcl", trials, 0.0};
  Rng rng(seed);
  const double taus[] = {0.07, 0.2, 0.5, 1.0};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = between(rng, 2, 6), k = between(rng, 1, 4), d = between(rng, 2, 8);
    const double tau = taus[rng.uniform_index(4)];
    const std::uint64_t pick_seed = rng.next_u64();
    const DenseMatrix images = random_unit_rows(n, d, rng);
    const DenseMatrix texts = random_unit_rows(n * k, d, rng);
    const std::vector<double> x = concat(images, texts);

    auto split = [&](std::span<const double> flat) {
      std::vector<double> a(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n * d));
      std::vector<double> b(flat.begin() + static_cast<std::ptrdiff_t>(n * d), flat.end());
      return std::pair{DenseMatrix(n, d, std::move(a)), DenseMatrix(n * k, d, std::move(b))};
    };
    auto check = [&](auto evaluate) {
      const LossReport analytic = evaluate(images, texts);
      const auto numeric = finite_diff_grad(
          [&](std::span<const double> flat) {
            auto [im, tx] = split(flat);
            return evaluate(im, tx).value;
          },
          x);
      res.max_relative_error = std::max(
          res.max_relative_error,
          max_relative_error(concat(analytic.grad_images, analytic.grad_texts), numeric));
    };
    check([&](const DenseMatrix& im, const DenseMatrix& tx) { return kcl_i2t(im, tx, k, tau); });
    check([&](const DenseMatrix& im, const DenseMatrix& tx) { return kcl_t2i(im, tx, k, tau); });
    check([&](const DenseMatrix& im, const DenseMatrix& tx) {
      Rng pick(pick_seed);
      return cl_1to1_terms(im, tx, k, tau, pick).i2t;
    });
    check([&](const DenseMatrix& im, const DenseMatrix& tx) {
      Rng pick(pick_seed);
      return cl_1to1_terms(im, tx, k, tau, pick).t2i;
    });
  }
  return res;
}

GradcheckResult gradcheck_mitm(std::size_t trials, std::uint64_t seed) {
  GradcheckResult res{"mitm", trials, 0.0};
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t d = between(rng, 2, 8), fused = between(rng, 1, 6);
    MitmHead head(d, fused);
    // Larger than the 0.02 training init so the tanh nonlinearity is exercised.
    std::vector<double> params(head.parameter_count());
    for (double& p : params) p = 0.7 * rng.normal();
    head.assign(params);
    std::vector<std::vector<double>> inputs;
    for (int v = 0; v < 4; ++v) inputs.push_back(unit_vector(d, rng));

    std::vector<double> x = params;
    for (const auto& v : inputs) x.insert(x.end(), v.begin(), v.end());
    const std::size_t np = params.size();

    auto eval = [&](std::span<const double> flat) {
      MitmHead h(d, fused);
      h.assign(flat.subspan(0, np));
      auto in = [&](int v) { return flat.subspan(np + static_cast<std::size_t>(v) * d, d); };
      return mitm_loss(h, in(0), in(1), in(2), in(3));
    };
    const LossReport analytic = eval(x);
    std::vector<double> grad = analytic.grad_params;
    // Input order: positive_text, image, negative_text, negative_image.
    for (std::span<const double> g : {analytic.grad_texts.row(0), analytic.grad_images.row(0),
                                      analytic.grad_texts.row(1), analytic.grad_images.row(1)}) {
      grad.insert(grad.end(), g.begin(), g.end());
    }
    const auto numeric = finite_diff_grad([&](std::span<const double> f) { return eval(f).value; }, x);
    res.max_relative_error = std::max(res.max_relative_error, max_relative_error(grad, numeric));
  }
  return res;
}

GradcheckResult gradcheck_cmlm(std::size_t trials, std::uint64_t seed) {
  GradcheckResult res{"cmlm", trials, 0.0};
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t vocab = between(rng, 3, 12), d = between(rng, 2, 8), dt = between(rng, 1, 6);
    const std::size_t len = between(rng, 2, 10);
    const CmlmHead init = CmlmHead::init(vocab, d, dt, rng, 0.5);
    std::vector<std::uint32_t> tokens(len);
    for (auto& tok : tokens) tok = static_cast<std::uint32_t>(rng.uniform_index(vocab));
    const MaskedSequence masked = mask_tokens(tokens, 0.3, rng);
    const std::vector<double> image = unit_vector(d, rng);

    std::vector<double> x = init.flatten();
    const std::size_t np = x.size();
    x.insert(x.end(), image.begin(), image.end());
    auto eval = [&](std::span<const double> flat) {
      CmlmHead h(vocab, d, dt);
      h.assign(flat.subspan(0, np));
      return cmlm_loss(h, tokens, flat.subspan(np), masked.positions);
    };
    const LossReport analytic = eval(x);
    std::vector<double> grad = analytic.grad_params;
    grad.insert(grad.end(), analytic.grad_images.values().begin(), analytic.grad_images.values().end());
    const auto numeric = finite_diff_grad([&](std::span<const double> f) { return eval(f).value; }, x);
    res.max_relative_error = std::max(res.max_relative_error, max_relative_error(grad, numeric));
  }
  return res;
}

std::vector<GradcheckResult> run_gradcheck(const std::string& name, std::size_t trials,
                                           std::uint64_t seed) {
  std::vector<GradcheckResult> out;
  if (name == "kcl" || name == "all") out.push_back(gradcheck_kcl(trials, derive_seed(seed, 0)));
  if (name == "mitm" || name == "all") out.push_back(gradcheck_mitm(trials, derive_seed(seed, 1)));
  if (name == "cmlm" || name == "all") out.push_back(gradcheck_cmlm(trials, derive_seed(seed, 2)));
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "unknown gradcheck loss '" + name + "'");
  return out;
}

}  // namespace ccrk
