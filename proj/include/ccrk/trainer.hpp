#pragma once

// Desk-scale trainer: one affine image map and K affine text maps whose
// normalized outputs are trained with the contrastive objective alone
// (1-to-1 or 1-to-K) or with the full summed objective (plus MITM and CMLM).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccrk/corpus.hpp"
#include "ccrk/losses.hpp"
#include "ccrk/metrics.hpp"
#include "ccrk/mining.hpp"

namespace ccrk {

enum class Optimizer { Sgd, AdamW };
enum class LossMode { OneToOne, OneToK, Full };

const char* to_string(LossMode m);
LossMode parse_loss_mode(const std::string& name);
const char* to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::AdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double tau = 0.07;
  LossMode loss_mode = LossMode::OneToK;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t embed_dim = 0;  // 0: same as the input width
  std::size_t fused_dim = 16;
  std::size_t token_dim = 16;
  double mask_rate = kDefaultMaskRate;
  MiningWeighting mining_weighting = MiningWeighting::LinearShift;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct AffineMap {
  DenseMatrix weight;  // out x in
  std::vector<double> bias;

  AffineMap() = default;
  AffineMap(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}

  void apply(std::span<const double> in, std::span<double> out) const;

  friend bool operator==(const AffineMap&, const AffineMap&) = default;
};

struct ToyModel {
  AffineMap image_map;
  std::vector<AffineMap> text_maps;
  std::optional<MitmHead> mitm;
  std::optional<CmlmHead> cmlm;

  // Weights ~ N(0, 1/in_dim), zero bias; heads only in full mode.
  static ToyModel init(std::size_t in_dim, std::size_t out_dim, std::size_t n_languages,
                       std::size_t vocab_size, const TrainConfig& cfg, Rng& rng);

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  // Blocks in a fixed order shared by every model of the same shape.
  std::vector<std::span<double>> parameter_blocks();
  ToyModel zeros_like() const;

  // Normalized encoder outputs for every image and text of the corpus.
  MultilingualCorpus embed(const MultilingualCorpus& corpus) const;

  friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double total = 0.0;
  double kcl_i2t = 0.0;  // contrastive image-to-text term (1-to-K or 1-to-1)
  double kcl_t2i = 0.0;
  double mitm = 0.0;
  double cmlm = 0.0;
};

struct Checkpoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean step loss of the epoch (first step loss at epoch 0)
  MetricsReport tr;
  MetricsReport ir;

  double mean_r1() const { return 0.5 * (tr.mean_recall.r1 + ir.mean_recall.r1); }
  double mrv() const { return 0.5 * (tr.mrv + ir.mrv); }
  double recall_gap() const { return 0.5 * (tr.recall_gap + ir.recall_gap); }
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<Checkpoint> checkpoints;
  std::vector<double> epoch_seconds;
};

struct TrainResult {
  ToyModel model;
  TrainTrace trace;
};

// Mini-batch training; batch order derives from cfg.seed. A trailing batch of a
// single instance is merged into the previous batch. Throws DivergenceError on a
// non-finite loss. `tokens` is required in full mode.
TrainResult train(const MultilingualCorpus& corpus, const TokenCorpus* tokens,
                  const TrainConfig& cfg);

// step,total_loss,kcl_i2t,kcl_t2i,mitm,cmlm
void write_trace_csv(std::ostream& out, const TrainTrace& trace);
// epoch,direction,mean_r1,mrv,recall_gap
void write_checkpoints_csv(std::ostream& out, const TrainTrace& trace);
nlohmann::ordered_json final_metrics_json(const TrainResult& result);

// Writes trained, normalized embeddings in the binary corpus format.
void export_embeddings(const ToyModel& model, const MultilingualCorpus& corpus,
                       const std::filesystem::path& path);

// --- mode comparison -------------------------------------------------------

struct CompareConfig {
  SyntheticConfig corpus;
  TrainConfig train;
  std::size_t n_seeds = 5;
  LossMode first = LossMode::OneToOne;
  LossMode second = LossMode::OneToK;
};

struct RunSummary {
  LossMode mode = LossMode::OneToK;
  std::uint64_t corpus_seed = 0;
  std::uint64_t train_seed = 0;
  double final_mrv = 0.0;       // mean of TR and IR
  double final_mean_r1 = 0.0;   // mean of TR and IR
  double final_recall_gap = 0.0;
  TrainTrace trace;
};

struct ComparisonReport {
  std::vector<RunSummary> first;
  std::vector<RunSummary> second;

  static double mean_mrv(const std::vector<RunSummary>& runs);
  static double mean_r1(const std::vector<RunSummary>& runs);
  static double mean_recall_gap(const std::vector<RunSummary>& runs);

  nlohmann::ordered_json to_json() const;
  // mode,seed,epoch,train_loss,mean_r1,mrv,recall_gap
  void write_curves_csv(std::ostream& out) const;
};

// Seed s uses corpus seed cfg.corpus.seed + s and train seed cfg.train.seed + s
// for both modes, so the two modes see identical corpora. Runs are independent
// and may execute concurrently.
ComparisonReport compare_modes(const CompareConfig& cfg);

}  // namespace ccrk
