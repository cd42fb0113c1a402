#pragma once

// Dense f64 kernel shared by every other module: row-major matrices, row
// normalization, similarity products, stable log-sum-exp, a portable seeded
// RNG and the central-difference gradient oracle used throughout the tests.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ccrk {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool all_finite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Seeded generator with a platform-independent stream. The engine is the
// standard-specified mt19937_64; the distributions are implemented here
// because the std:: distributions are not portable across library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  static constexpr const char* algorithm() noexcept { return "mt19937_64"; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  // Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derive an independent sub-seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// Each output row has unit Euclidean norm. Throws ZeroRow for rows with norm < 1e-30.
DenseMatrix normalize_rows(const DenseMatrix& m);

// out(i, j) = a.row(i) . b.row(j)
DenseMatrix similarity(const DenseMatrix& a, const DenseMatrix& b);
// Same product with rows split across threads; every element uses the serial dot,
// so the result is identical to similarity().
DenseMatrix similarity_parallel(const DenseMatrix& a, const DenseMatrix& b, std::size_t threads);

double log_sum_exp(std::span<const double> v);

// Row-wise softmax of v into out (same length).
void softmax(std::span<const double> v, std::span<double> out);

using ScalarFunction = std::function<double(std::span<const double>)>;

inline constexpr double kDefaultFiniteDiffStep = 1e-6;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x,
                                     double h = kDefaultFiniteDiffStep);

// max_i |a_i - b_i| / max(1, |a_i|)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

// Thread cap from CCRK_THREADS (defaults to hardware concurrency, at least 1).
std::size_t thread_budget();

}  // namespace ccrk
