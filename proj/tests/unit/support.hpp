#pragma once
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ccrk/corpus.hpp"
#include "ccrk/numerics.hpp"

namespace ccrk::fixtures {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("ccrk_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline std::vector<std::string> default_languages(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("l" + std::to_string(i));
  return out;
}

// Corpus from raw rows, normalized.
inline MultilingualCorpus make_corpus(DenseMatrix images, DenseMatrix texts, std::size_t k) {
  MultilingualCorpus c;
  c.n_instances = images.rows();
  c.n_languages = k;
  c.dim = images.cols();
  c.images = std::move(images);
  c.texts = std::move(texts);
  c.language_codes = default_languages(k);
  for (std::size_t j = 0; j < c.n_instances; ++j) c.instance_ids.push_back("i" + std::to_string(j));
  return c.normalized_copy();
}

inline MultilingualCorpus random_corpus(std::size_t n, std::size_t k, std::size_t d, Rng& rng) {
  return make_corpus(random_matrix(n, d, rng), random_matrix(n * k, d, rng), k);
}

// Every image and text equal to the same unit vector.
inline MultilingualCorpus identical_corpus(std::size_t n, std::size_t k, std::size_t d) {
  return make_corpus(DenseMatrix(n, d, 1.0), DenseMatrix(n * k, d, 1.0), k);
}

// Random orthogonal d x d matrix via Gram-Schmidt on Gaussian columns.
inline DenseMatrix random_rotation(std::size_t d, Rng& rng) {
  DenseMatrix q = random_matrix(d, d, rng);
  for (std::size_t r = 0; r < d; ++r) {
    auto row = q.row(r);
    for (std::size_t p = 0; p < r; ++p) {
      const double proj = dot(row, q.row(p));
      for (std::size_t c = 0; c < d; ++c) row[c] -= proj * q(p, c);
    }
    const double n = norm(row);
    for (double& v : row) v /= n;
  }
  return q;
}

inline DenseMatrix rotate_rows(const DenseMatrix& m, const DenseMatrix& q) {
  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.cols(); ++i) acc += q(c, i) * m(r, i);
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace ccrk::fixtures
