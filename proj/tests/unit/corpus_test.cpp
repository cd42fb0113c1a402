#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "ccrk/corpus.hpp"
#include "ccrk/error.hpp"
#include "ccrk/metrics.hpp"
#include "support.hpp"

using namespace ccrk;
using ccrk::fixtures::TempDir;

namespace {

ErrorCode decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode_binary(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::IoError;
}

SyntheticConfig small_config(std::uint64_t seed = 5) {
  SyntheticConfig cfg;
  cfg.n_instances = 20;
  cfg.n_languages = 3;
  cfg.dim = 12;
  cfg.latent_dim = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Synthetic, SharedLiftNoiselessIsPerfectlyAligned) {
  SyntheticConfig cfg = small_config();
  cfg.noise_sigma = 0.0;
  cfg.lift_correlation = 1.0;
  const auto [c, tokens] = generate_synthetic(cfg);
  for (std::size_t j = 0; j < c.n_instances; ++j) {
    for (std::size_t k = 0; k < c.n_languages; ++k) {
      EXPECT_NEAR(dot(c.image(j), c.text(j, k)), 1.0, 1e-9);
      for (std::size_t k2 = 0; k2 < c.n_languages; ++k2) {
        EXPECT_NEAR(dot(c.text(j, k), c.text(j, k2)), 1.0, 1e-9);
      }
    }
  }
  const auto tr = compute_ranks(c, Direction::TR);
  for (std::size_t r : tr.ranks) EXPECT_EQ(r, 1u);
}

TEST(Synthetic, CorrelatedLiftsSeparateMatchingPairs) {
  SyntheticConfig cfg;
  cfg.n_instances = 128;
  cfg.n_languages = 3;
  cfg.dim = 64;
  cfg.latent_dim = 16;
  cfg.noise_sigma = 0.0;
  cfg.lift_correlation = 0.5;
  cfg.seed = 21;
  const auto [c, tokens] = generate_synthetic(cfg);
  std::size_t wins = 0, total = 0;
  double matching = 0.0, other = 0.0;
  for (std::size_t j = 0; j < c.n_instances; ++j) {
    for (std::size_t k = 0; k < c.n_languages; ++k) {
      const double s_match = dot(c.image(j), c.text(j, k));
      matching += s_match;
      for (std::size_t n = 0; n < c.n_instances; ++n) {
        if (n == j) continue;
        const double s = dot(c.image(j), c.text(n, k));
        other += s;
        wins += s_match > s;
        ++total;
      }
    }
  }
  matching /= static_cast<double>(c.n_instances * c.n_languages);
  other /= static_cast<double>(total);
  EXPECT_GT(matching, other + 0.3);
  EXPECT_GT(static_cast<double>(wins) / static_cast<double>(total), 0.95);
}

TEST(Synthetic, Deterministic) {
  const auto a = generate_synthetic(small_config(9));
  const auto b = generate_synthetic(small_config(9));
  EXPECT_TRUE(a.first == b.first);
  EXPECT_TRUE(a.second == b.second);
  const auto c = generate_synthetic(small_config(10));
  EXPECT_FALSE(a.first == c.first);
}

TEST(Synthetic, RowsAreUnitNorm) {
  const auto [c, tokens] = generate_synthetic(small_config());
  EXPECT_TRUE(c.normalized);
  EXPECT_TRUE(c.rows_unit_norm(kUnitNormTolerance));
  EXPECT_NO_THROW(c.validate());
}

TEST(Synthetic, SinglePairIsTriviallyPerfect) {
  SyntheticConfig cfg = small_config();
  cfg.n_instances = 1;
  cfg.n_languages = 1;
  const auto [c, tokens] = generate_synthetic(cfg);
  EXPECT_EQ(c.images.rows(), 1u);
  EXPECT_EQ(c.texts.rows(), 1u);
  for (Direction d : {Direction::TR, Direction::IR}) {
    const MetricsReport r = evaluate(c, d);
    EXPECT_EQ(r.mean_recall.r1, 1.0);
    EXPECT_EQ(r.mrv, 0.0);
  }
}

TEST(Synthetic, TokensRespectLanguageRanges) {
  SyntheticConfig cfg = small_config();
  cfg.n_languages = 5;
  const auto [c, t] = generate_synthetic(cfg);
  EXPECT_NO_THROW(t.validate());
  ASSERT_EQ(t.sequences.size(), cfg.n_instances * cfg.n_languages);
  std::size_t in_block = 0, count = 0;
  const std::size_t block = cfg.vocab_per_language / cfg.n_concepts;
  for (std::size_t j = 0; j < t.n_instances; ++j) {
    for (std::size_t k = 0; k < t.n_languages; ++k) {
      const auto [lo, hi] = t.language_ranges[k];
      ASSERT_EQ(t.sequence(j, k).size(), cfg.tokens_per_text);
      for (std::uint32_t tok : t.sequence(j, k)) {
        ASSERT_GE(tok, lo);
        ASSERT_LT(tok, hi);
        ASSERT_NE(tok, TokenCorpus::kMaskToken);
        const std::uint32_t block_lo = lo + t.concept_of_instance[j] * block;
        in_block += tok >= block_lo && tok < block_lo + block;
        ++count;
      }
    }
  }
  EXPECT_NEAR(static_cast<double>(in_block) / static_cast<double>(count), 0.8, 0.05);
  for (std::size_t k = 1; k < t.language_ranges.size(); ++k) {
    EXPECT_EQ(t.language_ranges[k - 1].second, t.language_ranges[k].first);
  }
}

TEST(Synthetic, InvalidConfig) {
  SyntheticConfig cfg = small_config();
  cfg.latent_dim = cfg.dim + 1;
  EXPECT_THROW(generate_synthetic(cfg), Error);
  cfg = small_config();
  cfg.noise_sigma = -1.0;
  EXPECT_THROW(generate_synthetic(cfg), Error);
  cfg = small_config();
  cfg.n_instances = 0;
  EXPECT_THROW(generate_synthetic(cfg), Error);
}

TEST(BinaryFormat, RoundTripIsBitExactOnStoredValues) {
  const auto [c, t] = generate_synthetic(small_config());
  const auto bytes = encode_binary(c);
  const MultilingualCorpus loaded = decode_binary(bytes);
  EXPECT_EQ(loaded.n_instances, c.n_instances);
  EXPECT_EQ(loaded.language_codes, c.language_codes);
  EXPECT_EQ(loaded.instance_ids, c.instance_ids);
  EXPECT_TRUE(loaded.normalized);
  for (std::size_t i = 0; i < c.texts.size(); ++i) {
    const auto expect = static_cast<double>(static_cast<float>(c.texts.values()[i]));
    ASSERT_EQ(std::memcmp(&expect, &loaded.texts.values()[i], sizeof(double)), 0);
  }
  // Values already at stored precision survive exactly, byte for byte.
  EXPECT_EQ(encode_binary(loaded), bytes);
  EXPECT_TRUE(decode_binary(encode_binary(loaded)) == loaded);
}

TEST(BinaryFormat, FileRoundTrip) {
  TempDir dir;
  const auto [c, t] = generate_synthetic(small_config());
  save_corpus(c, dir / "a.ccrk", CorpusFormat::Binary);
  const auto once = load_corpus(dir / "a.ccrk", CorpusFormat::Binary);
  save_corpus(once, dir / "b.ccrk", CorpusFormat::Binary);
  const auto twice = load_corpus(dir / "b.ccrk", CorpusFormat::Binary);
  EXPECT_TRUE(once == twice);
  EXPECT_EQ(format_from_path(dir / "a.ccrk"), CorpusFormat::Binary);
}

TEST(BinaryFormat, HeaderLayout) {
  const auto [c, t] = generate_synthetic(small_config());
  const auto bytes = encode_binary(c);
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CCRK");
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(bytes[at]) | static_cast<std::uint32_t>(bytes[at + 1]) << 8 |
           static_cast<std::uint32_t>(bytes[at + 2]) << 16 | static_cast<std::uint32_t>(bytes[at + 3]) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), c.n_instances);
  EXPECT_EQ(u32(12), c.n_languages);
  EXPECT_EQ(u32(16), c.dim);
  const std::size_t meta_len_at = 20 + 4 * (c.images.size() + c.texts.size());
  EXPECT_EQ(bytes.size(), meta_len_at + 4 + u32(meta_len_at));
  float first;
  std::memcpy(&first, bytes.data() + 20, 4);
  EXPECT_EQ(first, static_cast<float>(c.images(0, 0)));
}

TEST(BinaryFormat, TruncationIsFormatError) {
  const auto [c, t] = generate_synthetic(small_config());
  const auto bytes = encode_binary(c);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{4}, std::size_t{10}, std::size_t{21},
                          bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    const std::span<const std::uint8_t> prefix(bytes.data(), cut);
    EXPECT_EQ(decode_error(prefix), ErrorCode::FormatError) << "cut at " << cut;
  }
  try {
    decode_binary(std::span<const std::uint8_t>(bytes.data(), 10));
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_EQ(decode_error(extra), ErrorCode::FormatError);
}

TEST(BinaryFormat, BadMagicVersionAndDims) {
  const auto [c, t] = generate_synthetic(small_config());
  auto bytes = encode_binary(c);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(decode_error(magic), ErrorCode::UnknownMagic);
  auto version = bytes;
  version[4] = 2;
  EXPECT_EQ(decode_error(version), ErrorCode::FormatError);
  auto zero_k = bytes;
  std::memset(zero_k.data() + 12, 0, 4);
  EXPECT_EQ(decode_error(zero_k), ErrorCode::DimensionMismatch);
}

TEST(BinaryFormat, TruncatedFileOnDisk) {
  TempDir dir;
  const auto [c, t] = generate_synthetic(small_config());
  const auto bytes = encode_binary(c);
  {
    std::ofstream f(dir / "cut.ccrk", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() - 7));
  }
  try {
    load_corpus(dir / "cut.ccrk", CorpusFormat::Binary);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
  }
  EXPECT_THROW(load_corpus(dir / "missing.ccrk", CorpusFormat::Binary), Error);
}

TEST(CsvFormat, RoundTripWithinTolerance) {
  TempDir dir;
  const auto [c, t] = generate_synthetic(small_config());
  save_corpus(c, dir / "c.csv", CorpusFormat::Csv);
  const auto loaded = load_corpus(dir / "c.csv", CorpusFormat::Csv);
  ASSERT_EQ(loaded.n_instances, c.n_instances);
  ASSERT_EQ(loaded.n_languages, c.n_languages);
  EXPECT_EQ(loaded.language_codes, c.language_codes);
  EXPECT_EQ(loaded.instance_ids, c.instance_ids);
  for (std::size_t i = 0; i < c.texts.size(); ++i) EXPECT_NEAR(loaded.texts.values()[i], c.texts.values()[i], 1e-6);
  for (std::size_t i = 0; i < c.images.size(); ++i) EXPECT_NEAR(loaded.images.values()[i], c.images.values()[i], 1e-6);
  EXPECT_TRUE(loaded.normalized);
  std::ifstream in(dir / "c.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("instance_id,language,e0,e1,", 0), 0u);
  EXPECT_NE(header.find(",e11"), std::string::npos);
}

TEST(CsvFormat, MatchesBinaryPath) {
  TempDir dir;
  const auto [c, t] = generate_synthetic(small_config());
  save_corpus(c, dir / "c.ccrk", CorpusFormat::Binary);
  const auto from_binary = load_corpus(dir / "c.ccrk", CorpusFormat::Binary);
  save_corpus(from_binary, dir / "c.csv", CorpusFormat::Csv);
  const auto from_csv = load_corpus(dir / "c.csv", CorpusFormat::Csv);
  EXPECT_TRUE(from_csv == from_binary);
}

TEST(CsvFormat, HandWrittenFile) {
  TempDir dir;
  {
    std::ofstream f(dir / "h.csv");
    f << "instance_id,language,e0,e1\n"
         "a,IMG,3,4\n"
         "a,en,1,0\n"
         "b,en,0,1\n"
         "b,IMG,0,2\n";
  }
  const auto c = load_corpus(dir / "h.csv", CorpusFormat::Csv);
  EXPECT_EQ(c.n_instances, 2u);
  EXPECT_EQ(c.n_languages, 1u);
  EXPECT_EQ(c.instance_ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(c.images(0, 1), 4.0);
  EXPECT_FALSE(c.normalized);
  const auto n = c.normalized_copy();
  EXPECT_NEAR(n.images(0, 0), 0.6, 1e-15);
}

TEST(CsvFormat, MissingRowIsError) {
  TempDir dir;
  {
    std::ofstream f(dir / "bad.csv");
    f << "instance_id,language,e0,e1\n"
         "a,IMG,3,4\n"
         "a,en,1,0\n"
         "b,en,0,1\n";
  }
  EXPECT_THROW(load_corpus(dir / "bad.csv", CorpusFormat::Csv), Error);
  {
    std::ofstream f(dir / "ragged.csv");
    f << "instance_id,language,e0,e1\n"
         "a,IMG,3\n";
  }
  EXPECT_THROW(load_corpus(dir / "ragged.csv", CorpusFormat::Csv), Error);
}

TEST(JsonlFormat, RoundTrip) {
  TempDir dir;
  const auto [c, t] = generate_synthetic(small_config());
  save_corpus(c, dir / "c.jsonl", CorpusFormat::Jsonl);
  EXPECT_EQ(format_from_path(dir / "c.jsonl"), CorpusFormat::Jsonl);
  const auto loaded = load_corpus(dir / "c.jsonl", CorpusFormat::Jsonl);
  EXPECT_EQ(loaded.instance_ids, c.instance_ids);
  for (std::size_t i = 0; i < c.texts.size(); ++i) EXPECT_NEAR(loaded.texts.values()[i], c.texts.values()[i], 1e-6);
}

TEST(TokenFile, RoundTrip) {
  TempDir dir;
  const auto [c, t] = generate_synthetic(small_config());
  save_tokens(t, dir / "t.json");
  EXPECT_TRUE(load_tokens(dir / "t.json") == t);
}

TEST(Corpus, SelectKeepsRows) {
  const auto [c, t] = generate_synthetic(small_config());
  const std::vector<std::size_t> pick{4, 1};
  const auto s = c.select(pick);
  EXPECT_EQ(s.n_instances, 2u);
  EXPECT_EQ(s.instance_ids[0], c.instance_ids[4]);
  for (std::size_t k = 0; k < c.n_languages; ++k) {
    for (std::size_t x = 0; x < c.dim; ++x) EXPECT_EQ(s.text(1, k)[x], c.text(1, k)[x]);
  }
  const auto ts = t.select(pick);
  EXPECT_EQ(ts.sequence(0, 2), t.sequence(4, 2));
}

TEST(Corpus, ValidateCatchesDuplicateLanguages) {
  auto [c, t] = generate_synthetic(small_config());
  c.language_codes[1] = c.language_codes[0];
  EXPECT_THROW(c.validate(), Error);
}
