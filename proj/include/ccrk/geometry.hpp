#pragma once

// Alignment-direction angles for one image and two texts on the unit sphere.
//   theta: angle between the practical direction t_m - t_n (align to the other
//          text) and the correct direction i - t_n (align to the image).
//   omega: angle between t_target - i (align to one text) and the direction
//          from i to the midpoint of the minor arc between t_m and t_n.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ccrk/numerics.hpp"

namespace ccrk {

// Angle between two non-zero vectors, 2 * atan2(|a^ - b^|, |a^ + b^|).
// Exactly 0 for bitwise-equal directions.
double angle_between(std::span<const double> a, std::span<const double> b);

double theta_angle(std::span<const double> i, std::span<const double> t_m,
                   std::span<const double> t_n);

enum class AlignTarget { M, N };

double omega_angle(std::span<const double> i, std::span<const double> t_m,
                   std::span<const double> t_n, AlignTarget target = AlignTarget::M);

enum class SamplingMode { FixedAngles, RandomSphere };
enum class Lemma { One, Two };

struct TripleConfig {
  std::size_t dim = 16;
  double alpha = 0.5;  // angle(i, t_m)
  double beta = 0.5;   // angle(i, t_n)
  double gamma = 0.5;  // angle(t_m, t_n)
  SamplingMode mode = SamplingMode::RandomSphere;
  AlignTarget target = AlignTarget::M;

  void validate() const;
};

struct AngleSample {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double theta = 0.0;
  double omega = 0.0;
};

struct Triple {
  std::vector<double> i;
  std::vector<double> t_m;
  std::vector<double> t_n;
};

// Unit vectors with the configured pairwise angles, embedded in a random
// 3-dimensional subspace of R^dim.
Triple fixed_angle_triple(const TripleConfig& cfg, Rng& rng);

AngleSample measure(const Triple& triple, AlignTarget target);

// Controlled-angle grid: half-decades from 1 down to 1e-4, then 0.
const std::vector<double>& sweep_grid();

struct SweepPoint {
  double controlled_angle = 0.0;
  double mean = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<AngleSample> samples;
};

// lemma One: alpha is controlled, records theta. lemma Two: gamma is
// controlled, records omega. Each grid point uses its own sub-seed derived
// from one draw of `rng`, so results do not depend on thread scheduling.
std::vector<SweepPoint> lemma_sweep(const TripleConfig& cfg, Lemma which, std::size_t n_samples,
                                    Rng& rng);

// controlled_angle_rad,mean_rad,p5_rad,p95_rad,n_samples,seed
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);

}  // namespace ccrk
