#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccrk/numerics.hpp"

namespace ccrk {

inline constexpr double kUnitNormTolerance = 1e-9;
// Stored embeddings are f32, so a loaded corpus is accepted as normalized at f32 precision.
inline constexpr double kStoredUnitNormTolerance = 1e-6;
inline constexpr const char* kImageLanguage = "IMG";

// N instances, each one image embedding plus K text embeddings (one per language).
// Text (j, k) lives in row j * K + k of `texts`.
struct MultilingualCorpus {
  std::size_t n_instances = 0;
  std::size_t n_languages = 0;
  std::size_t dim = 0;
  DenseMatrix images;  // N x d
  DenseMatrix texts;   // (N*K) x d
  std::vector<std::string> language_codes;
  std::vector<std::string> instance_ids;
  bool normalized = false;

  std::size_t text_row(std::size_t instance, std::size_t language) const {
    return instance * n_languages + language;
  }
  std::span<const double> image(std::size_t j) const { return images.row(j); }
  std::span<const double> text(std::size_t j, std::size_t k) const {
    return texts.row(text_row(j, k));
  }

  // Throws DimensionMismatch / InvalidConfig when the fields disagree.
  void validate() const;
  // True when every row norm is within tol of 1.
  bool rows_unit_norm(double tol) const;

  // Returns a copy with all rows normalized and the flag set.
  MultilingualCorpus normalized_copy() const;

  // Sub-corpus of the given instances, preserving order.
  MultilingualCorpus select(std::span<const std::size_t> instances) const;

  friend bool operator==(const MultilingualCorpus&, const MultilingualCorpus&) = default;
};

// Discrete stand-in for tokenized captions. Token id 0 is the reserved [MASK];
// language k owns ids [range_begin[k], range_end[k]).
struct TokenCorpus {
  std::size_t vocab_size = 0;
  std::size_t n_instances = 0;
  std::size_t n_languages = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> language_ranges;
  std::vector<std::uint32_t> concept_of_instance;
  std::vector<std::vector<std::uint32_t>> sequences;  // index j * K + k

  static constexpr std::uint32_t kMaskToken = 0;

  const std::vector<std::uint32_t>& sequence(std::size_t j, std::size_t k) const {
    return sequences[j * n_languages + k];
  }
  void validate() const;
  TokenCorpus select(std::span<const std::size_t> instances) const;

  friend bool operator==(const TokenCorpus&, const TokenCorpus&) = default;
};

struct SyntheticConfig {
  std::size_t n_instances = 128;
  std::size_t n_languages = 4;
  std::size_t dim = 32;
  std::size_t latent_dim = 8;
  double noise_sigma = 0.1;
  std::size_t n_concepts = 8;
  std::size_t tokens_per_text = 12;
  std::size_t vocab_per_language = 64;
  // Cosine between each language's lift and the image lift, in [0, 1].
  // 1 shares the image lift across every language; 0 draws independent lifts.
  double lift_correlation = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::pair<MultilingualCorpus, TokenCorpus> generate_synthetic(const SyntheticConfig& cfg);

enum class CorpusFormat { Binary, Csv, Jsonl };

CorpusFormat parse_corpus_format(const std::string& name);
// Picks the format from the extension: .csv, .jsonl, anything else binary.
CorpusFormat format_from_path(const std::filesystem::path& path);

MultilingualCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
void save_corpus(const MultilingualCorpus& corpus, const std::filesystem::path& path,
                 CorpusFormat format);

// Binary codec on in-memory bytes (the file functions wrap these).
std::vector<std::uint8_t> encode_binary(const MultilingualCorpus& corpus);
MultilingualCorpus decode_binary(std::span<const std::uint8_t> bytes);

void save_tokens(const TokenCorpus& tokens, const std::filesystem::path& path);
TokenCorpus load_tokens(const std::filesystem::path& path);

}  // namespace ccrk
