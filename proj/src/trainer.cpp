#include "ccrk/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "ccrk/error.hpp"

namespace ccrk {

const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::OneToOne: return "1to1";
    case LossMode::OneToK: return "1tok";
    case LossMode::Full: return "full";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "1to1" || name == "one_to_one") return LossMode::OneToOne;
  if (name == "1tok" || name == "one_to_k") return LossMode::OneToK;
  if (name == "full") return LossMode::Full;
  throw Error(ErrorCode::InvalidConfig, "unknown loss mode '" + name + "'");
}

const char* to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adamw"; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "adamw" || name == "adam") return Optimizer::AdamW;
  throw Error(ErrorCode::InvalidConfig, "unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) fail("mask_rate must be in (0, 1)");
  if (fused_dim < 1 || token_dim < 1) fail("head widths must be >= 1");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["optimizer"] = to_string(optimizer);
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["weight_decay"] = weight_decay;
  j["tau"] = tau;
  j["loss_mode"] = to_string(loss_mode);
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  j["embed_dim"] = embed_dim;
  j["fused_dim"] = fused_dim;
  j["token_dim"] = token_dim;
  j["mask_rate"] = mask_rate;
  j["mining_weighting"] = to_string(mining_weighting);
  return j;
}

void AffineMap::apply(std::span<const double> in, std::span<double> out) const {
  for (std::size_t r = 0; r < weight.rows(); ++r) out[r] = dot(weight.row(r), in) + bias[r];
}

// ---------------------------------------------------------------------------
// ToyModel

ToyModel ToyModel::init(std::size_t in_dim, std::size_t out_dim, std::size_t n_languages,
                        std::size_t vocab_size, const TrainConfig& cfg, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  auto make_map = [&] {
    AffineMap m(out_dim, in_dim);
    for (double& w : m.weight.values()) w = scale * rng.normal();
    return m;
  };
  ToyModel model;
  model.image_map = make_map();
  for (std::size_t k = 0; k < n_languages; ++k) model.text_maps.push_back(make_map());
  if (cfg.loss_mode == LossMode::Full) {
    model.mitm = MitmHead::init(out_dim, cfg.fused_dim, rng);
    model.cmlm = CmlmHead::init(vocab_size, out_dim, cfg.token_dim, rng);
  }
  return model;
}

std::vector<std::span<double>> ToyModel::parameter_blocks() {
  std::vector<std::span<double>> blocks = {image_map.weight.values(), image_map.bias};
  for (auto& m : text_maps) {
    blocks.push_back(m.weight.values());
    blocks.push_back(m.bias);
  }
  if (mitm) {
    for (auto b : mitm->parameter_blocks()) blocks.push_back(b);
  }
  if (cmlm) {
    for (auto b : cmlm->parameter_blocks()) blocks.push_back(b);
  }
  return blocks;
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = image_map.weight.size() + image_map.bias.size();
  for (const auto& m : text_maps) n += m.weight.size() + m.bias.size();
  if (mitm) n += mitm->parameter_count();
  if (cmlm) n += cmlm->parameter_count();
  return n;
}

std::vector<double> ToyModel::flatten() const {
  std::vector<double> flat;
  for (auto block : const_cast<ToyModel*>(this)->parameter_blocks()) {
    flat.insert(flat.end(), block.begin(), block.end());
  }
  return flat;
}

ToyModel ToyModel::zeros_like() const {
  ToyModel z = *this;
  for (auto block : z.parameter_blocks()) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

MultilingualCorpus ToyModel::embed(const MultilingualCorpus& corpus) const {
  corpus.validate();
  if (text_maps.size() != corpus.n_languages || image_map.weight.cols() != corpus.dim) {
    throw Error(ErrorCode::DimensionMismatch, "model does not match corpus shape");
  }
  const std::size_t out_dim = image_map.weight.rows();
  MultilingualCorpus out = corpus;
  out.dim = out_dim;
  out.images = DenseMatrix(corpus.n_instances, out_dim);
  out.texts = DenseMatrix(corpus.texts.rows(), out_dim);
  for (std::size_t j = 0; j < corpus.n_instances; ++j) {
    image_map.apply(corpus.image(j), out.images.row(j));
    for (std::size_t k = 0; k < corpus.n_languages; ++k) {
      text_maps[k].apply(corpus.text(j, k), out.texts.row(out.text_row(j, k)));
    }
  }
  out.images = normalize_rows(out.images);
  out.texts = normalize_rows(out.texts);
  out.normalized = true;
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Optim {
  Optimizer kind;
  double lr, beta1, beta2, eps, weight_decay;
  std::vector<double> m, v;
  std::size_t t = 0;

  void step(ToyModel& model, ToyModel& grads) {
    auto params = model.parameter_blocks();
    auto gblocks = grads.parameter_blocks();
    if (kind == Optimizer::Sgd) {
      for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= lr * gblocks[b][i];
      }
      return;
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    std::size_t at = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < params[b].size(); ++i, ++at) {
        const double g = gblocks[b][i];
        m[at] = beta1 * m[at] + (1.0 - beta1) * g;
        v[at] = beta2 * v[at] + (1.0 - beta2) * g * g;
        const double update = (m[at] / bc1) / (std::sqrt(v[at] / bc2) + eps);
        params[b][i] -= lr * (update + weight_decay * params[b][i]);
      }
    }
  }
};

// Gradient of a loss on normalized outputs, pushed back through the map.
void backprop_map(std::span<const double> input,
                  std::span<const double> output, double pre_norm, std::span<const double> grad,
                  AffineMap& grad_map) {
  const double along = dot(grad, output);
  for (std::size_t r = 0; r < output.size(); ++r) {
    const double gx = (grad[r] - along * output[r]) / pre_norm;
    grad_map.bias[r] += gx;
    auto row = grad_map.weight.row(r);
    for (std::size_t c = 0; c < input.size(); ++c) row[c] += gx * input[c];
  }
}

struct BatchForward {
  MultilingualCorpus embedded;
  std::vector<double> image_norms;
  std::vector<double> text_norms;
};

BatchForward forward(const ToyModel& model, const MultilingualCorpus& batch, std::size_t step) {
  const std::size_t out_dim = model.image_map.weight.rows();
  BatchForward f;
  f.embedded = batch;
  f.embedded.dim = out_dim;
  f.embedded.images = DenseMatrix(batch.n_instances, out_dim);
  f.embedded.texts = DenseMatrix(batch.texts.rows(), out_dim);
  auto finish = [step](std::span<double> row) {
    const double n = norm(row);
    if (!std::isfinite(n)) throw DivergenceError(step, "encoder output became non-finite");
    if (n < 1e-30) throw Error(ErrorCode::ZeroRow, "encoder produced a zero embedding");
    for (double& x : row) x /= n;
    return n;
  };
  for (std::size_t j = 0; j < batch.n_instances; ++j) {
    model.image_map.apply(batch.image(j), f.embedded.images.row(j));
    f.image_norms.push_back(finish(f.embedded.images.row(j)));
    for (std::size_t k = 0; k < batch.n_languages; ++k) {
      auto row = f.embedded.texts.row(batch.text_row(j, k));
      model.text_maps[k].apply(batch.text(j, k), row);
      f.text_norms.push_back(finish(row));
    }
  }
  f.embedded.normalized = true;
  return f;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() < 2) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

Checkpoint make_checkpoint(const ToyModel& model, const MultilingualCorpus& corpus,
                           std::size_t epoch, double train_loss) {
  const MultilingualCorpus embedded = model.embed(corpus);
  return Checkpoint{epoch, train_loss, evaluate(embedded, Direction::TR),
                    evaluate(embedded, Direction::IR)};
}

}  // namespace

TrainResult train(const MultilingualCorpus& corpus, const TokenCorpus* tokens,
                  const TrainConfig& cfg) {
  cfg.validate();
  corpus.validate();
  if (corpus.n_instances < 2) throw Error(ErrorCode::DegenerateBatch, "training needs N >= 2");
  if (cfg.loss_mode == LossMode::Full) {
    if (tokens == nullptr) throw Error(ErrorCode::InvalidConfig, "full mode needs a token corpus");
    tokens->validate();
    if (tokens->n_instances != corpus.n_instances || tokens->n_languages != corpus.n_languages) {
      throw Error(ErrorCode::DimensionMismatch, "token corpus does not match embedding corpus");
    }
  }

  Rng init_rng(derive_seed(cfg.seed, 10));
  Rng batch_rng(derive_seed(cfg.seed, 11));
  Rng loss_rng(derive_seed(cfg.seed, 12));

  const std::size_t out_dim = cfg.embed_dim == 0 ? corpus.dim : cfg.embed_dim;
  TrainResult result;
  ToyModel& model = result.model;
  model = ToyModel::init(corpus.dim, out_dim, corpus.n_languages, tokens ? tokens->vocab_size : 0,
                         cfg, init_rng);
  Optim optim{cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps,
              cfg.weight_decay, {}, {}, 0};
  optim.m.assign(model.parameter_count(), 0.0);
  optim.v.assign(model.parameter_count(), 0.0);

  const LossConfig loss_cfg{cfg.tau, cfg.loss_mode == LossMode::OneToOne ? ContrastMode::OneToOne
                                                                           : ContrastMode::OneToK};
  TrainTrace& trace = result.trace;
  std::size_t step = 0;
  bool initial_recorded = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    double epoch_loss = 0.0;
    const auto batches = make_batches(corpus.n_instances, cfg.batch_size, batch_rng);
    for (const auto& batch : batches) {
      const MultilingualCorpus sub = corpus.select(batch);
      std::optional<TokenCorpus> sub_tokens;
      if (cfg.loss_mode == LossMode::Full) sub_tokens = tokens->select(batch);
      const BatchForward fwd = forward(model, sub, step);

      AuxHeads heads;
      if (cfg.loss_mode == LossMode::Full) {
        heads.mitm = model.mitm;
        heads.cmlm = model.cmlm;
      }
      const LossReport report =
          combined_loss(fwd.embedded, sub_tokens ? &*sub_tokens : nullptr, heads, loss_cfg,
                        cfg.mining_weighting, loss_rng, cfg.mask_rate);
      if (!std::isfinite(report.value)) throw DivergenceError(step, "loss became non-finite");

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.total = report.value;
      for (const auto& c : report.components) {
        if (c.name == "contrastive_i2t") rec.kcl_i2t = c.value;
        else if (c.name == "contrastive_t2i") rec.kcl_t2i = c.value;
        else if (c.name == "cmlm") rec.cmlm = c.value;
        else rec.mitm += c.value;
      }
      trace.steps.push_back(rec);
      epoch_loss += report.value;

      if (!initial_recorded) {
        trace.checkpoints.push_back(make_checkpoint(model, corpus, 0, report.value));
        initial_recorded = true;
      }

      ToyModel grads = model.zeros_like();
      for (std::size_t j = 0; j < sub.n_instances; ++j) {
        backprop_map(sub.image(j), fwd.embedded.image(j), fwd.image_norms[j],
                     report.grad_images.row(j), grads.image_map);
        for (std::size_t k = 0; k < sub.n_languages; ++k) {
          const std::size_t row = sub.text_row(j, k);
          backprop_map(sub.text(j, k), fwd.embedded.texts.row(row),
                       fwd.text_norms[row], report.grad_texts.row(row), grads.text_maps[k]);
        }
      }
      std::size_t at = 0;
      if (grads.mitm) {
        std::span<const double> g(report.grad_params.data(), grads.mitm->parameter_count());
        grads.mitm->assign(g);
        at += g.size();
      }
      if (grads.cmlm) {
        grads.cmlm->assign(std::span<const double>(report.grad_params).subspan(at));
      }
      optim.step(model, grads);
      ++step;
    }
    const auto elapsed = std::chrono::steady_clock::now() - started;
    trace.epoch_seconds.push_back(std::chrono::duration<double>(elapsed).count());
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      trace.checkpoints.push_back(
          make_checkpoint(model, corpus, epoch, epoch_loss / static_cast<double>(batches.size())));
    }
  }
  return result;
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "step,total_loss,kcl_i2t,kcl_t2i,mitm,cmlm\n";
  const auto old = out.precision(17);
  for (const auto& s : trace.steps) {
    out << s.step << ',' << s.total << ',' << s.kcl_i2t << ',' << s.kcl_t2i << ',' << s.mitm << ','
        << s.cmlm << '\n';
  }
  out.precision(old);
}

void write_checkpoints_csv(std::ostream& out, const TrainTrace& trace) {
  out << "epoch,direction,mean_r1,mrv,recall_gap\n";
  const auto old = out.precision(17);
  for (const auto& c : trace.checkpoints) {
    for (const MetricsReport* m : {&c.tr, &c.ir}) {
      out << c.epoch << ',' << to_string(m->direction) << ',' << m->mean_recall.r1 << ','
          << m->mrv << ',' << m->recall_gap << '\n';
    }
  }
  out.precision(old);
}

nlohmann::ordered_json final_metrics_json(const TrainResult& result) {
  nlohmann::ordered_json j;
  const auto& last = result.trace.checkpoints.back();
  j["epoch"] = last.epoch;
  j["parameter_count"] = result.model.parameter_count();
  j["final_loss"] = result.trace.steps.empty() ? 0.0 : result.trace.steps.back().total;
  j["tr"] = last.tr.to_json();
  j["ir"] = last.ir.to_json();
  return j;
}

void export_embeddings(const ToyModel& model, const MultilingualCorpus& corpus,
                       const std::filesystem::path& path) {
  save_corpus(model.embed(corpus), path, CorpusFormat::Binary);
}

// ---------------------------------------------------------------------------
// Mode comparison

double ComparisonReport::mean_mrv(const std::vector<RunSummary>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.final_mrv;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double ComparisonReport::mean_r1(const std::vector<RunSummary>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.final_mean_r1;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double ComparisonReport::mean_recall_gap(const std::vector<RunSummary>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.final_recall_gap;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

nlohmann::ordered_json ComparisonReport::to_json() const {
  auto side = [](const std::vector<RunSummary>& runs) {
    nlohmann::ordered_json j;
    j["mode"] = runs.empty() ? "" : to_string(runs.front().mode);
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
      nlohmann::ordered_json s;
      s["corpus_seed"] = r.corpus_seed;
      s["train_seed"] = r.train_seed;
      s["final_mrv"] = r.final_mrv;
      s["final_mean_r1"] = r.final_mean_r1;
      s["final_recall_gap"] = r.final_recall_gap;
      per_seed.push_back(s);
    }
    j["runs"] = per_seed;
    j["mean_mrv"] = mean_mrv(runs);
    j["mean_r1"] = mean_r1(runs);
    j["mean_recall_gap"] = mean_recall_gap(runs);
    return j;
  };
  nlohmann::ordered_json j;
  j["first"] = side(first);
  j["second"] = side(second);
  return j;
}

void ComparisonReport::write_curves_csv(std::ostream& out) const {
  out << "mode,seed,epoch,train_loss,mean_r1,mrv,recall_gap\n";
  const auto old = out.precision(17);
  for (const auto* runs : {&first, &second}) {
    for (const auto& r : *runs) {
      for (const auto& c : r.trace.checkpoints) {
        out << to_string(r.mode) << ',' << r.train_seed << ',' << c.epoch << ',' << c.train_loss
            << ',' << c.mean_r1() << ',' << c.mrv() << ',' << c.recall_gap() << '\n';
      }
    }
  }
  out.precision(old);
}

ComparisonReport compare_modes(const CompareConfig& cfg) {
  if (cfg.n_seeds < 1) throw Error(ErrorCode::InvalidConfig, "compare needs at least one seed");
  cfg.corpus.validate();
  cfg.train.validate();

  ComparisonReport report;
  report.first.resize(cfg.n_seeds);
  report.second.resize(cfg.n_seeds);

  auto run_one = [&](std::size_t job) {
    const std::size_t s = job / 2;
    const LossMode mode = job % 2 == 0 ? cfg.first : cfg.second;
    SyntheticConfig corpus_cfg = cfg.corpus;
    corpus_cfg.seed = cfg.corpus.seed + s;
    const auto [corpus, tokens] = generate_synthetic(corpus_cfg);
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cfg.train.seed + s;
    train_cfg.loss_mode = mode;
    TrainResult result = train(corpus, &tokens, train_cfg);
    RunSummary& summary = job % 2 == 0 ? report.first[s] : report.second[s];
    summary.mode = mode;
    summary.corpus_seed = corpus_cfg.seed;
    summary.train_seed = train_cfg.seed;
    const Checkpoint& last = result.trace.checkpoints.back();
    summary.final_mrv = last.mrv();
    summary.final_mean_r1 = last.mean_r1();
    summary.final_recall_gap = last.recall_gap();
    summary.trace = std::move(result.trace);
  };

  const std::size_t jobs = 2 * cfg.n_seeds;
  const std::size_t threads = std::min(thread_budget(), jobs);
  if (threads <= 1) {
    for (std::size_t job = 0; job < jobs; ++job) run_one(job);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> workers;
      for (std::size_t w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
          try {
            for (std::size_t job = w; job < jobs; job += threads) run_one(job);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return report;
}

}  // namespace ccrk
