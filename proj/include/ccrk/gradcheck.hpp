#pragma once

// Randomized analytic-vs-finite-difference checks over small configurations
// (N <= 6, K <= 4, d <= 8). Relative error per coordinate is
// |analytic - numeric| / max(1, |analytic|).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ccrk {

struct GradcheckResult {
  std::string loss;
  std::size_t trials = 0;
  double max_relative_error = 0.0;
};

inline constexpr double kGradcheckTolerance = 1e-4;

// kcl_i2t, kcl_t2i and both 1-to-1 directions.
GradcheckResult gradcheck_kcl(std::size_t trials, std::uint64_t seed);
GradcheckResult gradcheck_mitm(std::size_t trials, std::uint64_t seed);
GradcheckResult gradcheck_cmlm(std::size_t trials, std::uint64_t seed);

// name in {kcl, mitm, cmlm, all}
std::vector<GradcheckResult> run_gradcheck(const std::string& name, std::size_t trials,
                                           std::uint64_t seed);

}  // namespace ccrk
