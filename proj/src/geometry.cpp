#include "ccrk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <thread>

#include "ccrk/error.hpp"

namespace ccrk {

namespace {

constexpr double kDegenerate = 1e-12;

std::vector<double> diff(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

void check_widths(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  if (a.size() != b.size() || a.size() != c.size() || a.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "angle inputs must share a non-zero width");
  }
}

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

// Unit vector orthogonal to `base` (Gram-Schmidt against a random draw).
std::vector<double> random_orthogonal(std::span<const double> base, Rng& rng) {
  while (true) {
    std::vector<double> v = random_unit(base.size(), rng);
    const double proj = dot(v, base);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= proj * base[k];
    const double n = norm(v);
    if (n > 1e-6) {
      for (double& x : v) x /= n;
      return v;
    }
  }
}

// cos(angle) * base + sin(angle) * ortho
std::vector<double> rotate_towards(std::span<const double> base, std::span<const double> ortho,
                                   double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<double> out(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) out[k] = c * base[k] + s * ortho[k];
  return out;
}

double percentile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

bool degenerate_for(Lemma which, const Triple& t, AlignTarget target) {
  if (which == Lemma::One) {
    return norm(diff(t.t_m, t.t_n)) < kDegenerate || norm(diff(t.i, t.t_n)) < kDegenerate;
  }
  std::vector<double> sum(t.t_m.size());
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = t.t_m[k] + t.t_n[k];
  const auto& tgt = target == AlignTarget::M ? t.t_m : t.t_n;
  return norm(sum) < kDegenerate || norm(diff(tgt, t.i)) < kDegenerate;
}

Triple sample_triple(const TripleConfig& cfg, Lemma which, double controlled, Rng& rng) {
  if (cfg.mode == SamplingMode::FixedAngles) {
    TripleConfig fixed = cfg;
    if (which == Lemma::One) {
      fixed.alpha = controlled;
      fixed.gamma = std::clamp(cfg.gamma, std::abs(controlled - cfg.beta), controlled + cfg.beta);
    } else {
      fixed.gamma = controlled;
      fixed.beta = std::clamp(cfg.beta, std::abs(cfg.alpha - controlled), cfg.alpha + controlled);
    }
    return fixed_angle_triple(fixed, rng);
  }
  Triple t;
  if (which == Lemma::One) {
    // i at exactly alpha from t_m inside a random 2-plane; t_n free.
    t.t_m = random_unit(cfg.dim, rng);
    t.i = rotate_towards(t.t_m, random_orthogonal(t.t_m, rng), controlled);
    t.t_n = random_unit(cfg.dim, rng);
  } else {
    // t_n at exactly gamma from t_m; i free.
    t.t_m = random_unit(cfg.dim, rng);
    t.t_n = rotate_towards(t.t_m, random_orthogonal(t.t_m, rng), controlled);
    t.i = random_unit(cfg.dim, rng);
  }
  return t;
}

}  // namespace

double angle_between(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na < kDegenerate || nb < kDegenerate) {
    throw Error(ErrorCode::DegenerateDirection, "direction has (near) zero length");
  }
  double plus = 0.0, minus = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double ua = a[k] / na, ub = b[k] / nb;
    minus += (ua - ub) * (ua - ub);
    plus += (ua + ub) * (ua + ub);
  }
  return 2.0 * std::atan2(std::sqrt(minus), std::sqrt(plus));
}

double theta_angle(std::span<const double> i, std::span<const double> t_m,
                   std::span<const double> t_n) {
  check_widths(i, t_m, t_n);
  return angle_between(diff(t_m, t_n), diff(i, t_n));
}

double omega_angle(std::span<const double> i, std::span<const double> t_m,
                   std::span<const double> t_n, AlignTarget target) {
  check_widths(i, t_m, t_n);
  std::vector<double> midpoint;
  if (std::equal(t_m.begin(), t_m.end(), t_n.begin())) {
    // Midpoint of a zero-length arc is the point itself.
    midpoint.assign(t_m.begin(), t_m.end());
  } else {
    midpoint.resize(t_m.size());
    for (std::size_t k = 0; k < midpoint.size(); ++k) midpoint[k] = t_m[k] + t_n[k];
    const double n = norm(midpoint);
    if (n < kDegenerate) throw Error(ErrorCode::AntipodalTexts, "t_m and t_n are antipodal");
    for (double& x : midpoint) x /= n;
  }
  const auto tgt = target == AlignTarget::M ? t_m : t_n;
  return angle_between(diff(tgt, i), diff(midpoint, i));
}

void TripleConfig::validate() const {
  if (dim < 2) throw Error(ErrorCode::InvalidConfig, "geometry needs dim >= 2");
  if (mode == SamplingMode::FixedAngles) {
    if (dim < 3) throw Error(ErrorCode::InvalidConfig, "fixed angle triples need dim >= 3");
    for (double a : {alpha, beta, gamma}) {
      if (!(a >= 0.0 && a <= std::numbers::pi)) {
        throw Error(ErrorCode::InvalidConfig, "angles must lie in [0, pi]");
      }
    }
    if (gamma < std::abs(alpha - beta) - 1e-12 || gamma > alpha + beta + 1e-12) {
      throw Error(ErrorCode::InvalidConfig, "angles violate the spherical triangle inequality");
    }
  }
}

Triple fixed_angle_triple(const TripleConfig& cfg, Rng& rng) {
  cfg.validate();
  // Orthonormal e1, e2, e3 spanning a random 3-dimensional subspace.
  const std::vector<double> e1 = random_unit(cfg.dim, rng);
  const std::vector<double> e2 = random_orthogonal(e1, rng);
  std::vector<double> e3;
  while (true) {
    e3 = random_unit(cfg.dim, rng);
    const double p1 = dot(e3, e1), p2 = dot(e3, e2);
    for (std::size_t k = 0; k < cfg.dim; ++k) e3[k] -= p1 * e1[k] + p2 * e2[k];
    const double n = norm(e3);
    if (n > 1e-6) {
      for (double& x : e3) x /= n;
      break;
    }
  }
  // t_m = e1, i at alpha from t_m in span(e1, e2), t_n solves both remaining angles.
  const double ca = std::cos(cfg.alpha), sa = std::sin(cfg.alpha);
  const double cb = std::cos(cfg.beta), cg = std::cos(cfg.gamma);
  double x = 0.0;
  if (sa > 1e-15) x = (cb - cg * ca) / sa;
  const double y = std::sqrt(std::max(0.0, 1.0 - cg * cg - x * x));
  Triple t;
  t.t_m = e1;
  t.i.resize(cfg.dim);
  t.t_n.resize(cfg.dim);
  for (std::size_t k = 0; k < cfg.dim; ++k) {
    t.i[k] = ca * e1[k] + sa * e2[k];
    t.t_n[k] = cg * e1[k] + x * e2[k] + y * e3[k];
  }
  return t;
}

AngleSample measure(const Triple& t, AlignTarget target) {
  AngleSample s;
  s.alpha = angle_between(t.i, t.t_m);
  s.beta = angle_between(t.i, t.t_n);
  s.gamma = angle_between(t.t_m, t.t_n);
  s.theta = theta_angle(t.i, t.t_m, t.t_n);
  s.omega = omega_angle(t.i, t.t_m, t.t_n, target);
  return s;
}

const std::vector<double>& sweep_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    for (int e = 0; e <= 8; ++e) g.push_back(std::pow(10.0, -0.5 * e));
    g.push_back(0.0);
    return g;
  }();
  return grid;
}

std::vector<SweepPoint> lemma_sweep(const TripleConfig& cfg, Lemma which, std::size_t n_samples,
                                    Rng& rng) {
  cfg.validate();
  if (n_samples == 0) throw Error(ErrorCode::InvalidConfig, "n_samples must be >= 1");
  const auto& grid = sweep_grid();
  const std::uint64_t base = rng.next_u64();
  std::vector<SweepPoint> points(grid.size());

  auto run_point = [&](std::size_t g) {
    SweepPoint& p = points[g];
    p.controlled_angle = grid[g];
    p.seed = derive_seed(base, g);
    p.n_samples = n_samples;
    Rng local(p.seed);
    std::vector<double> recorded;
    recorded.reserve(n_samples);
    while (p.samples.size() < n_samples) {
      const Triple t = sample_triple(cfg, which, grid[g], local);
      // The theta sweep never evaluates omega, so only its own directions must be valid.
      if (degenerate_for(which, t, cfg.target)) continue;
      AngleSample s;
      s.alpha = angle_between(t.i, t.t_m);
      s.beta = angle_between(t.i, t.t_n);
      s.gamma = angle_between(t.t_m, t.t_n);
      if (which == Lemma::One) {
        s.theta = theta_angle(t.i, t.t_m, t.t_n);
        recorded.push_back(s.theta);
      } else {
        s.omega = omega_angle(t.i, t.t_m, t.t_n, cfg.target);
        recorded.push_back(s.omega);
      }
      p.samples.push_back(s);
    }
    double total = 0.0;
    for (double v : recorded) total += v;
    p.mean = total / static_cast<double>(recorded.size());
    p.p5 = percentile(recorded, 0.05);
    p.p95 = percentile(recorded, 0.95);
  };

  const std::size_t threads = std::min(thread_budget(), grid.size());
  if (threads <= 1) {
    for (std::size_t g = 0; g < grid.size(); ++g) run_point(g);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t g = w; g < grid.size(); g += threads) run_point(g);
      });
    }
  }
  return points;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "controlled_angle_rad,mean_rad,p5_rad,p95_rad,n_samples,seed\n";
  const auto old = out.precision(17);
  for (const auto& p : points) {
    out << p.controlled_angle << ',' << p.mean << ',' << p.p5 << ',' << p.p95 << ','
        << p.n_samples << ',' << p.seed << '\n';
  }
  out.precision(old);
}

}  // namespace ccrk
