#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "ccrk/corpus.hpp"
#include "ccrk/error.hpp"
#include "ccrk/geometry.hpp"
#include "ccrk/gradcheck.hpp"
#include "ccrk/metrics.hpp"
#include "ccrk/trainer.hpp"

namespace ccrk::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

SyntheticConfig reference_synthetic() {
  SyntheticConfig c;
  c.n_instances = 256;
  c.n_languages = 4;
  c.dim = 32;
  c.latent_dim = 8;
  c.noise_sigma = 0.1;
  return c;
}

ojson to_json(const SyntheticConfig& c) {
  ojson j;
  j["n_instances"] = c.n_instances;
  j["n_languages"] = c.n_languages;
  j["dim"] = c.dim;
  j["latent_dim"] = c.latent_dim;
  j["noise_sigma"] = c.noise_sigma;
  j["n_concepts"] = c.n_concepts;
  j["tokens_per_text"] = c.tokens_per_text;
  j["vocab_per_language"] = c.vocab_per_language;
  j["lift_correlation"] = c.lift_correlation;
  j["seed"] = c.seed;
  return j;
}

SyntheticConfig load_synthetic(const fs::path& path, SyntheticConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, "malformed config JSON");
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "n_instances") base.n_instances = value.get<std::size_t>();
      else if (key == "n_languages") base.n_languages = value.get<std::size_t>();
      else if (key == "dim") base.dim = value.get<std::size_t>();
      else if (key == "latent_dim") base.latent_dim = value.get<std::size_t>();
      else if (key == "noise_sigma") base.noise_sigma = value.get<double>();
      else if (key == "n_concepts") base.n_concepts = value.get<std::size_t>();
      else if (key == "tokens_per_text") base.tokens_per_text = value.get<std::size_t>();
      else if (key == "vocab_per_language") base.vocab_per_language = value.get<std::size_t>();
      else if (key == "lift_correlation") base.lift_correlation = value.get<double>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    } catch (const nlohmann::json::type_error&) {
      throw Error(ErrorCode::InvalidConfig, "config key '" + key + "' has the wrong type");
    }
  }
  base.validate();
  return base;
}

CorpusFormat pick_format(const std::string& flag, const fs::path& path) {
  return flag.empty() ? format_from_path(path) : parse_corpus_format(flag);
}

void print_resolved(std::ostream& out, const std::string& command, const ojson& config,
                    std::optional<std::uint64_t> seed) {
  ojson j;
  j["command"] = command;
  j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
  j["config"] = config;
  out << j.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << text;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return f;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Divergence:
    case ErrorCode::NonFiniteEvaluation:
      return kNumericalFailure;
    default:
      return kDataError;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ccrk - 1-to-K contrastive alignment, retrieval consistency and geometry toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic multilingual corpus");
  std::string gen_config, gen_out, gen_tokens, gen_format;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "Synthetic corpus config (JSON)");
  gen->add_option("--out", gen_out, "Output corpus path")->required();
  gen->add_option("--tokens-out", gen_tokens, "Also write the token corpus (JSON)");
  gen->add_option("--format", gen_format, "binary | csv | jsonl (default: from extension)")
      ->check(CLI::IsMember({"binary", "csv", "jsonl"}));
  gen->add_option("--seed", gen_seed, "Override the config seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Recall@K and MRV of a corpus of embeddings");
  std::string eval_corpus, eval_format, eval_direction = "both", eval_out;
  bool eval_normalize = false;
  eval->add_option("--corpus", eval_corpus)->required();
  eval->add_option("--format", eval_format)->check(CLI::IsMember({"binary", "csv", "jsonl"}));
  eval->add_option("--direction", eval_direction)->check(CLI::IsMember({"tr", "ir", "both"}));
  eval->add_option("--out", eval_out, "metrics.json path (default: stdout)");
  eval->add_flag("--normalize", eval_normalize, "Normalize rows before ranking");

  // train
  auto* tr = app.add_subcommand("train", "Train the toy dual encoder");
  std::string tr_corpus, tr_tokens, tr_config, tr_mode = "1tok", tr_out, tr_format,
                         tr_optimizer = "adamw", tr_weighting = "linear_shift";
  TrainConfig tcfg;
  tr->add_option("--corpus", tr_corpus);
  tr->add_option("--tokens", tr_tokens, "Token corpus (required for --mode full with --corpus)");
  tr->add_option("--config", tr_config, "Generate the corpus from this synthetic config instead");
  tr->add_option("--format", tr_format)->check(CLI::IsMember({"binary", "csv", "jsonl"}));
  tr->add_option("--mode", tr_mode)->check(CLI::IsMember({"1to1", "1tok", "full"}));
  tr->add_option("--tau", tcfg.tau);
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--seed", tcfg.seed);
  tr->add_option("--lr", tcfg.learning_rate);
  tr->add_option("--batch-size", tcfg.batch_size);
  tr->add_option("--optimizer", tr_optimizer)->check(CLI::IsMember({"sgd", "adamw"}));
  tr->add_option("--eval-every", tcfg.eval_every);
  tr->add_option("--mining-weighting", tr_weighting)
      ->check(CLI::IsMember({"linear_shift", "softmax"}));
  tr->add_option("--out-dir", tr_out)->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "1-to-1 vs 1-to-K over several seeds");
  CompareConfig ccfg;
  ccfg.corpus = reference_synthetic();
  ccfg.train.learning_rate = 1e-2;
  std::string cmp_config, cmp_out, cmp_weighting = "linear_shift";
  cmp->add_option("--seeds", ccfg.n_seeds);
  cmp->add_option("--config", cmp_config, "Synthetic corpus config (JSON)");
  cmp->add_option("--epochs", ccfg.train.epochs);
  cmp->add_option("--lr", ccfg.train.learning_rate);
  cmp->add_option("--batch-size", ccfg.train.batch_size);
  cmp->add_option("--tau", ccfg.train.tau);
  cmp->add_option("--seed", ccfg.train.seed, "Base train seed");
  cmp->add_option("--mining-weighting", cmp_weighting)
      ->check(CLI::IsMember({"linear_shift", "softmax"}));
  cmp->add_option("--out-dir", cmp_out)->required();

  // geometry
  auto* geo = app.add_subcommand("geometry", "Monte-Carlo sweep of the alignment angles");
  int geo_lemma = 1;
  TripleConfig gcfg;
  std::size_t geo_samples = 2000;
  std::uint64_t geo_seed = 0;
  std::string geo_out, geo_target = "m", geo_mode = "random";
  geo->add_option("--lemma", geo_lemma)->required()->check(CLI::IsMember({1, 2}));
  geo->add_option("--dim", gcfg.dim);
  geo->add_option("--samples", geo_samples);
  geo->add_option("--seed", geo_seed);
  geo->add_option("--target", geo_target)->check(CLI::IsMember({"m", "n"}));
  geo->add_option("--mode", geo_mode)->check(CLI::IsMember({"random", "fixed"}));
  geo->add_option("--alpha", gcfg.alpha);
  geo->add_option("--beta", gcfg.beta);
  geo->add_option("--gamma", gcfg.gamma);
  geo->add_option("--out", geo_out, "CSV path (default: stdout)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Analytic gradients vs central differences");
  std::string gc_loss = "all";
  std::size_t gc_trials = 20;
  std::uint64_t gc_seed = 0;
  gc->add_option("--loss", gc_loss)->check(CLI::IsMember({"kcl", "mitm", "cmlm", "all"}));
  gc->add_option("--trials", gc_trials);
  gc->add_option("--seed", gc_seed);

  // rank
  auto* rk = app.add_subcommand("rank", "Ranked retrieval for one query, optionally re-ranked");
  std::string rk_corpus, rk_format, rk_query, rk_direction = "tr", rk_language, rk_scorer = "oracle";
  std::size_t rk_top = 10, rk_rerank = 0;
  rk->add_option("--corpus", rk_corpus)->required();
  rk->add_option("--format", rk_format)->check(CLI::IsMember({"binary", "csv", "jsonl"}));
  rk->add_option("--query-id", rk_query)->required();
  rk->add_option("--direction", rk_direction)->check(CLI::IsMember({"tr", "ir"}));
  rk->add_option("--language", rk_language, "Language code (default: all for tr, first for ir)");
  rk->add_option("--top", rk_top);
  rk->add_option("--rerank-top-n", rk_rerank, "Re-rank this many cosine candidates (0: off)");
  rk->add_option("--scorer", rk_scorer)->check(CLI::IsMember({"oracle"}));

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (gen->parsed()) {
      SyntheticConfig cfg = gen_config.empty() ? SyntheticConfig{} : load_synthetic(gen_config, {});
      if (gen_seed) cfg.seed = *gen_seed;
      cfg.validate();
      print_resolved(out, "gen", to_json(cfg), cfg.seed);
      const auto [corpus, tokens] = generate_synthetic(cfg);
      save_corpus(corpus, gen_out, pick_format(gen_format, gen_out));
      if (!gen_tokens.empty()) save_tokens(tokens, gen_tokens);
      return kOk;
    }

    if (eval->parsed()) {
      ojson resolved;
      resolved["corpus"] = eval_corpus;
      resolved["direction"] = eval_direction;
      resolved["normalize"] = eval_normalize;
      print_resolved(out, "eval", resolved, std::nullopt);
      MultilingualCorpus corpus = load_corpus(eval_corpus, pick_format(eval_format, eval_corpus));
      if (eval_normalize) corpus = corpus.normalized_copy();
      ojson report;
      if (eval_direction == "both") {
        report = ojson::array({evaluate(corpus, Direction::TR).to_json(),
                               evaluate(corpus, Direction::IR).to_json()});
      } else {
        report = evaluate(corpus, parse_direction(eval_direction)).to_json();
      }
      if (eval_out.empty()) {
        out << report.dump(2) << '\n';
      } else {
        write_text(eval_out, report.dump(2) + "\n");
      }
      return kOk;
    }

    if (tr->parsed()) {
      tcfg.loss_mode = parse_loss_mode(tr_mode);
      tcfg.optimizer = parse_optimizer(tr_optimizer);
      tcfg.mining_weighting = parse_mining_weighting(tr_weighting);
      if (tr_corpus.empty() == tr_config.empty()) {
        throw UsageError("train needs exactly one of --corpus or --config");
      }
      MultilingualCorpus corpus;
      std::optional<TokenCorpus> tokens;
      ojson resolved = tcfg.to_json();
      if (!tr_config.empty()) {
        const SyntheticConfig scfg = load_synthetic(tr_config, {});
        resolved["synthetic"] = to_json(scfg);
        auto generated = generate_synthetic(scfg);
        corpus = std::move(generated.first);
        tokens = std::move(generated.second);
      } else {
        if (tcfg.loss_mode == LossMode::Full && tr_tokens.empty()) {
          throw UsageError("--mode full with --corpus needs --tokens");
        }
        resolved["corpus"] = tr_corpus;
        corpus = load_corpus(tr_corpus, pick_format(tr_format, tr_corpus));
        if (!tr_tokens.empty()) tokens = load_tokens(tr_tokens);
      }
      print_resolved(out, "train", resolved, tcfg.seed);
      const TrainResult result = train(corpus, tokens ? &*tokens : nullptr, tcfg);
      const fs::path dir(tr_out);
      fs::create_directories(dir);
      {
        auto f = open_out(dir / "trace.csv");
        write_trace_csv(f, result.trace);
      }
      {
        auto f = open_out(dir / "checkpoints.csv");
        write_checkpoints_csv(f, result.trace);
      }
      write_text(dir / "metrics.json", final_metrics_json(result).dump(2) + "\n");
      export_embeddings(result.model, corpus, dir / "embeddings.ccrk");
      out << final_metrics_json(result).dump() << '\n';
      return kOk;
    }

    if (cmp->parsed()) {
      if (!cmp_config.empty()) ccfg.corpus = load_synthetic(cmp_config, ccfg.corpus);
      ccfg.train.mining_weighting = parse_mining_weighting(cmp_weighting);
      ojson resolved;
      resolved["synthetic"] = to_json(ccfg.corpus);
      resolved["train"] = ccfg.train.to_json();
      resolved["n_seeds"] = ccfg.n_seeds;
      print_resolved(out, "compare", resolved, ccfg.train.seed);
      const ComparisonReport report = compare_modes(ccfg);
      const fs::path dir(cmp_out);
      fs::create_directories(dir);
      write_text(dir / "compare.json", report.to_json().dump(2) + "\n");
      {
        auto f = open_out(dir / "curves.csv");
        report.write_curves_csv(f);
      }
      out << report.to_json().dump() << '\n';
      return kOk;
    }

    if (geo->parsed()) {
      gcfg.mode = geo_mode == "fixed" ? SamplingMode::FixedAngles : SamplingMode::RandomSphere;
      gcfg.target = geo_target == "m" ? AlignTarget::M : AlignTarget::N;
      ojson resolved;
      resolved["lemma"] = geo_lemma;
      resolved["dim"] = gcfg.dim;
      resolved["samples"] = geo_samples;
      resolved["mode"] = geo_mode;
      resolved["target"] = geo_target;
      if (gcfg.mode == SamplingMode::FixedAngles) {
        resolved["alpha"] = gcfg.alpha;
        resolved["beta"] = gcfg.beta;
        resolved["gamma"] = gcfg.gamma;
      }
      print_resolved(out, "geometry", resolved, geo_seed);
      Rng rng(geo_seed);
      const auto points = lemma_sweep(gcfg, geo_lemma == 1 ? Lemma::One : Lemma::Two, geo_samples, rng);
      if (geo_out.empty()) {
        write_sweep_csv(out, points);
      } else {
        auto f = open_out(geo_out);
        write_sweep_csv(f, points);
      }
      return kOk;
    }

    if (gc->parsed()) {
      ojson resolved;
      resolved["loss"] = gc_loss;
      resolved["trials"] = gc_trials;
      print_resolved(out, "gradcheck", resolved, gc_seed);
      const auto results = run_gradcheck(gc_loss, gc_trials, gc_seed);
      ojson report;
      report["tolerance"] = kGradcheckTolerance;
      report["results"] = ojson::array();
      double worst = 0.0;
      for (const auto& r : results) {
        ojson row;
        row["loss"] = r.loss;
        row["trials"] = r.trials;
        row["max_relative_error"] = r.max_relative_error;
        report["results"].push_back(row);
        worst = std::max(worst, r.max_relative_error);
      }
      report["max_relative_error"] = worst;
      report["passed"] = worst < kGradcheckTolerance;
      out << report.dump() << '\n';
      if (worst >= kGradcheckTolerance) {
        err << "gradient check failed: max relative error " << worst << '\n';
        return kNumericalFailure;
      }
      return kOk;
    }

    if (rk->parsed()) {
      ojson resolved;
      resolved["corpus"] = rk_corpus;
      resolved["query_id"] = rk_query;
      resolved["direction"] = rk_direction;
      resolved["top"] = rk_top;
      resolved["rerank_top_n"] = rk_rerank;
      resolved["scorer"] = rk_scorer;
      print_resolved(out, "rank", resolved, std::nullopt);
      const MultilingualCorpus corpus = load_corpus(rk_corpus, pick_format(rk_format, rk_corpus));
      const auto id_it = std::find(corpus.instance_ids.begin(), corpus.instance_ids.end(), rk_query);
      if (id_it == corpus.instance_ids.end()) {
        throw Error(ErrorCode::InvalidConfig, "no instance with id '" + rk_query + "'");
      }
      const auto query = static_cast<std::size_t>(id_it - corpus.instance_ids.begin());
      const Direction direction = parse_direction(rk_direction);
      std::vector<std::size_t> languages;
      if (!rk_language.empty()) {
        const auto it = std::find(corpus.language_codes.begin(), corpus.language_codes.end(), rk_language);
        if (it == corpus.language_codes.end()) {
          throw Error(ErrorCode::InvalidConfig, "no language '" + rk_language + "' in corpus");
        }
        languages.push_back(static_cast<std::size_t>(it - corpus.language_codes.begin()));
      } else if (direction == Direction::TR) {
        for (std::size_t k = 0; k < corpus.n_languages; ++k) languages.push_back(k);
      } else {
        languages.push_back(0);
      }
      std::optional<RerankConfig> rerank;
      if (rk_rerank > 0) rerank = RerankConfig{rk_rerank, oracle_scorer()};

      ojson report;
      report["query_id"] = rk_query;
      report["direction"] = to_string(direction);
      report["results"] = ojson::array();
      for (std::size_t k : languages) {
        const auto order =
            ranked_candidates(corpus, direction, query, k, rerank ? &*rerank : nullptr);
        ojson row;
        row["language"] = corpus.language_codes[k];
        row["truth_rank"] = static_cast<std::size_t>(std::find(order.begin(), order.end(), query) -
                                                     order.begin()) + 1;
        ojson top = ojson::array();
        for (std::size_t i = 0; i < std::min(rk_top, order.size()); ++i) {
          top.push_back(corpus.instance_ids[order[i]]);
        }
        row["top"] = top;
        report["results"].push_back(row);
      }
      out << report.dump(2) << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace ccrk::cli
