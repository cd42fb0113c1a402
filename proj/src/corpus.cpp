#include "ccrk/corpus.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "ccrk/error.hpp"

namespace ccrk {

namespace {

using json = nlohmann::json;

constexpr std::uint32_t kBinaryVersion = 1;
constexpr char kMagic[4] = {'C', 'C', 'R', 'K'};

}  // namespace

// ---------------------------------------------------------------------------
// MultilingualCorpus

void MultilingualCorpus::validate() const {
  if (n_instances < 1 || n_languages < 1 || dim < 1) {
    throw Error(ErrorCode::InvalidConfig, "corpus needs N >= 1, K >= 1, d >= 1");
  }
  if (images.rows() != n_instances || images.cols() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "image block is not N x d");
  }
  if (texts.rows() != n_instances * n_languages || texts.cols() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "text block is not (N*K) x d");
  }
  if (language_codes.size() != n_languages || instance_ids.size() != n_instances) {
    throw Error(ErrorCode::DimensionMismatch, "metadata does not match N / K");
  }
  std::vector<std::string> sorted = language_codes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::InvalidConfig, "language codes must be distinct");
  }
  if (!images.all_finite() || !texts.all_finite()) {
    throw Error(ErrorCode::NonFiniteEvaluation, "corpus holds non-finite values");
  }
}

bool MultilingualCorpus::rows_unit_norm(double tol) const {
  auto check = [tol](const DenseMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (std::abs(norm(m.row(r)) - 1.0) > tol) return false;
    }
    return true;
  };
  return check(images) && check(texts);
}

MultilingualCorpus MultilingualCorpus::normalized_copy() const {
  MultilingualCorpus out = *this;
  out.images = normalize_rows(images);
  out.texts = normalize_rows(texts);
  out.normalized = true;
  return out;
}

MultilingualCorpus MultilingualCorpus::select(std::span<const std::size_t> instances) const {
  MultilingualCorpus out;
  out.n_instances = instances.size();
  out.n_languages = n_languages;
  out.dim = dim;
  out.images = DenseMatrix(instances.size(), dim);
  out.texts = DenseMatrix(instances.size() * n_languages, dim);
  out.language_codes = language_codes;
  out.normalized = normalized;
  for (std::size_t b = 0; b < instances.size(); ++b) {
    const std::size_t j = instances[b];
    std::copy_n(image(j).begin(), dim, out.images.row(b).begin());
    for (std::size_t k = 0; k < n_languages; ++k) {
      std::copy_n(text(j, k).begin(), dim, out.texts.row(out.text_row(b, k)).begin());
    }
    out.instance_ids.push_back(instance_ids[j]);
  }
  return out;
}

void TokenCorpus::validate() const {
  if (language_ranges.size() != n_languages || sequences.size() != n_instances * n_languages ||
      concept_of_instance.size() != n_instances) {
    throw Error(ErrorCode::DimensionMismatch, "token corpus shape mismatch");
  }
  for (std::size_t j = 0; j < n_instances; ++j) {
    for (std::size_t k = 0; k < n_languages; ++k) {
      const auto& seq = sequence(j, k);
      if (seq.empty()) throw Error(ErrorCode::EmptySequence, "token sequence is empty");
      const auto [lo, hi] = language_ranges[k];
      for (std::uint32_t t : seq) {
        if (t >= vocab_size || t < lo || t >= hi) {
          throw Error(ErrorCode::InvalidConfig, "token outside its language range");
        }
      }
    }
  }
}

TokenCorpus TokenCorpus::select(std::span<const std::size_t> instances) const {
  TokenCorpus out;
  out.vocab_size = vocab_size;
  out.n_instances = instances.size();
  out.n_languages = n_languages;
  out.language_ranges = language_ranges;
  for (std::size_t j : instances) {
    out.concept_of_instance.push_back(concept_of_instance[j]);
    for (std::size_t k = 0; k < n_languages; ++k) out.sequences.push_back(sequence(j, k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (n_instances < 1) fail("n_instances must be >= 1");
  if (n_languages < 1) fail("n_languages must be >= 1");
  if (dim < 1 || latent_dim < 1) fail("dimensions must be >= 1");
  if (latent_dim > dim) fail("latent_dim must not exceed dim");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (n_concepts < 1) fail("n_concepts must be >= 1");
  if (n_concepts > vocab_per_language) fail("n_concepts exceeds vocab_per_language");
  if (tokens_per_text < 1) fail("tokens_per_text must be >= 1");
  if (!(lift_correlation >= 0.0 && lift_correlation <= 1.0)) {
    fail("lift_correlation must lie in [0, 1]");
  }
  if (1 + n_languages * vocab_per_language > UINT32_MAX) fail("vocabulary too large");
}

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
  }
  return m;
}

// Thin Q factor with columns signed so that diag(R) > 0.
Mat orthonormal_columns(const Mat& a) {
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(a.rows(), a.cols());
  const Mat r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  return q;
}

std::vector<double> unit_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double nrm = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    nrm = norm(v);
  } while (nrm < 1e-12);
  for (double& x : v) x /= nrm;
  return v;
}

void lift_into(const Mat& lift, std::span<const double> z, double sigma, Rng& rng,
               std::span<double> out) {
  for (Eigen::Index r = 0; r < lift.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < lift.cols(); ++c) s += lift(r, c) * z[c];
    out[r] = s;
  }
  if (sigma > 0.0) {
    for (double& x : out) x += sigma * rng.normal();
  }
  const double n = norm(out);
  if (n < 1e-30) throw Error(ErrorCode::ZeroRow, "generated a zero embedding");
  for (double& x : out) x /= n;
}

std::string language_code(std::size_t k) {
  // ISO 639-1 codes of the pre-training languages first, then generic ones.
  static const char* kCodes[] = {"en", "de", "fr", "cs", "ja", "zh", "es", "id", "ru", "tr"};
  if (k < std::size(kCodes)) return kCodes[k];
  return "l" + std::to_string(k);
}

}  // namespace

std::pair<MultilingualCorpus, TokenCorpus> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_instances, k_langs = cfg.n_languages, d = cfg.dim,
                    latent = cfg.latent_dim;

  Rng structure_rng(derive_seed(cfg.seed, 0));
  const Mat image_lift = orthonormal_columns(gaussian(d, latent, structure_rng));
  std::vector<Mat> text_lifts;
  const double rho = cfg.lift_correlation;
  for (std::size_t k = 0; k < k_langs; ++k) {
    const Mat own = orthonormal_columns(gaussian(d, latent, structure_rng));
    if (rho == 1.0) {
      text_lifts.push_back(image_lift);
    } else {
      text_lifts.push_back(orthonormal_columns(rho * image_lift + std::sqrt(1.0 - rho * rho) * own));
    }
  }
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < cfg.n_concepts; ++c) centroids.push_back(unit_vector(latent, structure_rng));

  MultilingualCorpus corpus;
  corpus.n_instances = n;
  corpus.n_languages = k_langs;
  corpus.dim = d;
  corpus.images = DenseMatrix(n, d);
  corpus.texts = DenseMatrix(n * k_langs, d);
  for (std::size_t k = 0; k < k_langs; ++k) corpus.language_codes.push_back(language_code(k));

  TokenCorpus tokens;
  tokens.n_instances = n;
  tokens.n_languages = k_langs;
  tokens.vocab_size = 1 + k_langs * cfg.vocab_per_language;
  for (std::size_t k = 0; k < k_langs; ++k) {
    const auto lo = static_cast<std::uint32_t>(1 + k * cfg.vocab_per_language);
    tokens.language_ranges.emplace_back(lo, static_cast<std::uint32_t>(lo + cfg.vocab_per_language));
  }

  Rng embed_rng(derive_seed(cfg.seed, 1));
  Rng token_rng(derive_seed(cfg.seed, 2));
  const std::size_t block = cfg.vocab_per_language / cfg.n_concepts;
  for (std::size_t j = 0; j < n; ++j) {
    char id[32];
    std::snprintf(id, sizeof id, "inst%06zu", j);
    corpus.instance_ids.emplace_back(id);

    const std::vector<double> z = unit_vector(latent, embed_rng);
    lift_into(image_lift, z, cfg.noise_sigma, embed_rng, corpus.images.row(j));
    for (std::size_t k = 0; k < k_langs; ++k) {
      lift_into(text_lifts[k], z, cfg.noise_sigma, embed_rng, corpus.texts.row(corpus.text_row(j, k)));
    }

    std::size_t concept_id = 0;
    double best = -2.0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double s = dot(z, centroids[c]);
      if (s > best) {
        best = s;
        concept_id = c;
      }
    }
    tokens.concept_of_instance.push_back(static_cast<std::uint32_t>(concept_id));

    for (std::size_t k = 0; k < k_langs; ++k) {
      const std::uint32_t lo = tokens.language_ranges[k].first;
      const std::uint32_t block_lo = lo + static_cast<std::uint32_t>(concept_id * block);
      const std::size_t rest = cfg.vocab_per_language - block;
      std::vector<std::uint32_t> seq;
      for (std::size_t t = 0; t < cfg.tokens_per_text; ++t) {
        const bool in_block = rest == 0 || token_rng.uniform() < 0.8;
        if (in_block) {
          seq.push_back(block_lo + static_cast<std::uint32_t>(token_rng.uniform_index(block)));
        } else {
          // Uniform over the language range with the concept block cut out.
          auto offset = static_cast<std::uint32_t>(token_rng.uniform_index(rest));
          std::uint32_t id_in_range = lo + offset;
          if (id_in_range >= block_lo) id_in_range += static_cast<std::uint32_t>(block);
          seq.push_back(id_in_range);
        }
      }
      tokens.sequences.push_back(std::move(seq));
    }
  }
  corpus.normalized = true;
  return {std::move(corpus), std::move(tokens)};
}

// ---------------------------------------------------------------------------
// Formats

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "binary" || name == "ccrk") return CorpusFormat::Binary;
  if (name == "csv") return CorpusFormat::Csv;
  if (name == "jsonl") return CorpusFormat::Jsonl;
  throw Error(ErrorCode::InvalidConfig, "unknown corpus format '" + name + "'");
}

CorpusFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return CorpusFormat::Csv;
  if (ext == ".jsonl") return CorpusFormat::Jsonl;
  return CorpusFormat::Binary;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(pos_, std::string("truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void finalize_loaded(MultilingualCorpus& c) {
  c.validate();
  c.normalized = c.rows_unit_norm(kStoredUnitNormTolerance);
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Row-keyed assembly shared by the CSV and JSONL readers.
class RowAssembler {
 public:
  void add(std::uint64_t offset, const std::string& id, const std::string& lang,
           std::vector<double> values) {
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_ || dim_ == 0) {
      throw Error(ErrorCode::DimensionMismatch,
                  "embedding width differs at byte " + std::to_string(offset));
    }
    if (!instance_index_.contains(id)) {
      instance_index_[id] = ids_.size();
      ids_.push_back(id);
    }
    if (lang != kImageLanguage && !language_index_.contains(lang)) {
      language_index_[lang] = languages_.size();
      languages_.push_back(lang);
    }
    auto key = std::make_pair(instance_index_[id], lang);
    if (rows_.contains(key)) {
      throw FormatError(offset, "duplicate row for (" + id + ", " + lang + ")");
    }
    rows_[key] = std::move(values);
  }

  MultilingualCorpus build() {
    if (ids_.empty()) throw FormatError(0, "no embeddings found");
    MultilingualCorpus c;
    c.n_instances = ids_.size();
    c.n_languages = languages_.size();
    c.dim = dim_;
    c.instance_ids = ids_;
    c.language_codes = languages_;
    if (c.n_languages == 0) throw Error(ErrorCode::DimensionMismatch, "no text languages present");
    c.images = DenseMatrix(c.n_instances, dim_);
    c.texts = DenseMatrix(c.n_instances * c.n_languages, dim_);
    auto fetch = [&](std::size_t j, const std::string& lang) -> const std::vector<double>& {
      auto it = rows_.find({j, lang});
      if (it == rows_.end()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "missing embedding for (" + ids_[j] + ", " + lang + ")");
      }
      return it->second;
    };
    for (std::size_t j = 0; j < c.n_instances; ++j) {
      const auto& img = fetch(j, kImageLanguage);
      std::copy(img.begin(), img.end(), c.images.row(j).begin());
      for (std::size_t k = 0; k < c.n_languages; ++k) {
        const auto& t = fetch(j, languages_[k]);
        std::copy(t.begin(), t.end(), c.texts.row(c.text_row(j, k)).begin());
      }
    }
    return c;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::string> languages_;
  std::unordered_map<std::string, std::size_t> instance_index_;
  std::unordered_map<std::string, std::size_t> language_index_;
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> rows_;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s, std::uint64_t offset) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw FormatError(offset, "invalid number '" + s + "'");
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

MultilingualCorpus parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line)) throw FormatError(0, "empty CSV file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "instance_id" || header[1] != "language") {
    throw FormatError(0, "CSV header must start with instance_id,language");
  }
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] != "e" + std::to_string(c - 2)) throw FormatError(0, "unexpected column " + header[c]);
  }
  const std::size_t d = header.size() - 2;
  offset += line.size() + 1;
  RowAssembler rows;
  while (std::getline(in, line)) {
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != d + 2) throw FormatError(line_offset, "wrong number of CSV fields");
    std::vector<double> values(d);
    for (std::size_t c = 0; c < d; ++c) values[c] = parse_double(fields[c + 2], line_offset);
    rows.add(line_offset, fields[0], fields[1], std::move(values));
  }
  return rows.build();
}

MultilingualCorpus parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::uint64_t offset = 0;
  RowAssembler rows;
  while (std::getline(in, line)) {
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(line_offset + e.byte, "malformed JSON line");
    }
    if (!row.is_object() || !row.contains("instance_id") || !row.contains("language") ||
        !row.contains("embedding") || !row["embedding"].is_array()) {
      throw FormatError(line_offset, "JSONL row needs instance_id, language, embedding");
    }
    std::vector<double> values;
    for (const auto& v : row["embedding"]) {
      if (!v.is_number()) throw FormatError(line_offset, "embedding entries must be numbers");
      values.push_back(v.get<double>());
    }
    rows.add(line_offset, row["instance_id"].get<std::string>(), row["language"].get<std::string>(),
             std::move(values));
  }
  return rows.build();
}

}  // namespace

std::vector<std::uint8_t> encode_binary(const MultilingualCorpus& corpus) {
  corpus.validate();
  std::vector<std::uint8_t> out;
  out.reserve(24 + 4 * (corpus.images.size() + corpus.texts.size()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kBinaryVersion);
  put_u32(out, static_cast<std::uint32_t>(corpus.n_instances));
  put_u32(out, static_cast<std::uint32_t>(corpus.n_languages));
  put_u32(out, static_cast<std::uint32_t>(corpus.dim));
  for (double v : corpus.images.values()) put_f32(out, v);
  for (double v : corpus.texts.values()) put_f32(out, v);
  const json meta = {{"languages", corpus.language_codes}, {"instance_ids", corpus.instance_ids}};
  const std::string meta_text = meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  return out;
}

MultilingualCorpus decode_binary(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error(ErrorCode::UnknownMagic, "file does not start with CCRK");
  }
  const std::size_t version_at = in.offset();
  if (in.u32("version") != kBinaryVersion) throw FormatError(version_at, "unsupported version");
  MultilingualCorpus c;
  c.n_instances = in.u32("N");
  c.n_languages = in.u32("K");
  c.dim = in.u32("d");
  if (c.n_instances == 0 || c.n_languages == 0 || c.dim == 0) {
    throw Error(ErrorCode::DimensionMismatch, "header declares an empty corpus");
  }
  const std::uint64_t image_count = static_cast<std::uint64_t>(c.n_instances) * c.dim;
  const std::uint64_t text_count = image_count * c.n_languages;
  in.need(4 * (image_count + text_count), "embedding blocks");
  c.images = DenseMatrix(c.n_instances, c.dim);
  c.texts = DenseMatrix(c.n_instances * c.n_languages, c.dim);
  for (double& v : c.images.values()) v = in.f32("image block");
  for (double& v : c.texts.values()) v = in.f32("text block");
  const std::uint32_t meta_len = in.u32("metadata length");
  const std::size_t meta_at = in.offset();
  auto meta_bytes = in.take(meta_len, "metadata");
  if (in.remaining() != 0) throw FormatError(in.offset(), "trailing bytes after metadata");
  json meta;
  try {
    meta = json::parse(meta_bytes.begin(), meta_bytes.end());
    c.language_codes = meta.at("languages").get<std::vector<std::string>>();
    c.instance_ids = meta.at("instance_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(meta_at, std::string("bad metadata: ") + e.what());
  }
  finalize_loaded(c);
  return c;
}

MultilingualCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  const std::string data = read_file(path);
  MultilingualCorpus c;
  switch (format) {
    case CorpusFormat::Binary:
      return decode_binary({reinterpret_cast<const std::uint8_t*>(data.data()), data.size()});
    case CorpusFormat::Csv:
      c = parse_csv(data);
      break;
    case CorpusFormat::Jsonl:
      c = parse_jsonl(data);
      break;
  }
  finalize_loaded(c);
  return c;
}

void save_corpus(const MultilingualCorpus& corpus, const std::filesystem::path& path,
                 CorpusFormat format) {
  corpus.validate();
  std::string out;
  switch (format) {
    case CorpusFormat::Binary: {
      const auto bytes = encode_binary(corpus);
      out.assign(bytes.begin(), bytes.end());
      break;
    }
    case CorpusFormat::Csv: {
      out = "instance_id,language";
      for (std::size_t c = 0; c < corpus.dim; ++c) out += ",e" + std::to_string(c);
      out += '\n';
      auto emit = [&](std::size_t j, const std::string& lang, std::span<const double> row) {
        out += corpus.instance_ids[j] + "," + lang;
        for (double v : row) out += "," + format_double(v);
        out += '\n';
      };
      for (std::size_t j = 0; j < corpus.n_instances; ++j) {
        emit(j, kImageLanguage, corpus.image(j));
        for (std::size_t k = 0; k < corpus.n_languages; ++k) {
          emit(j, corpus.language_codes[k], corpus.text(j, k));
        }
      }
      break;
    }
    case CorpusFormat::Jsonl: {
      auto emit = [&](std::size_t j, const std::string& lang, std::span<const double> row) {
        json line = {{"instance_id", corpus.instance_ids[j]},
                     {"language", lang},
                     {"embedding", std::vector<double>(row.begin(), row.end())}};
        out += line.dump() + "\n";
      };
      for (std::size_t j = 0; j < corpus.n_instances; ++j) {
        emit(j, kImageLanguage, corpus.image(j));
        for (std::size_t k = 0; k < corpus.n_languages; ++k) {
          emit(j, corpus.language_codes[k], corpus.text(j, k));
        }
      }
      break;
    }
  }
  write_file(path, out);
}

void save_tokens(const TokenCorpus& tokens, const std::filesystem::path& path) {
  json ranges = json::array();
  for (const auto& [lo, hi] : tokens.language_ranges) ranges.push_back({lo, hi});
  const json doc = {{"vocab_size", tokens.vocab_size},
                    {"n_instances", tokens.n_instances},
                    {"n_languages", tokens.n_languages},
                    {"language_ranges", ranges},
                    {"concept_of_instance", tokens.concept_of_instance},
                    {"sequences", tokens.sequences}};
  write_file(path, doc.dump() + "\n");
}

TokenCorpus load_tokens(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  TokenCorpus t;
  try {
    const json doc = json::parse(data);
    t.vocab_size = doc.at("vocab_size").get<std::size_t>();
    t.n_instances = doc.at("n_instances").get<std::size_t>();
    t.n_languages = doc.at("n_languages").get<std::size_t>();
    for (const auto& r : doc.at("language_ranges")) {
      t.language_ranges.emplace_back(r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>());
    }
    t.concept_of_instance = doc.at("concept_of_instance").get<std::vector<std::uint32_t>>();
    t.sequences = doc.at("sequences").get<std::vector<std::vector<std::uint32_t>>>();
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, "malformed token file");
  } catch (const json::exception& e) {
    throw FormatError(0, std::string("bad token file: ") + e.what());
  }
  t.validate();
  return t;
}

}  // namespace ccrk
