// ttlm: train, evaluate, check and sample tensor-train language models.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
// numerical error.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ttlm/checks.hpp"
#include "ttlm/data.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/model.hpp"
#include "ttlm/run_config.hpp"
#include "ttlm/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Registers a flag whose value is applied to the run config under `key`.
void add_override(CLI::App& app, Overrides& out, const std::string& flag, const std::string& key, const std::string& help) {
  app.add_option_function<std::string>(flag, [&out, key](const std::string& v) { out.emplace_back(key, v); }, help)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

void add_switch(CLI::App& app, Overrides& out, const std::string& flag, const std::string& key, const std::string& value,
                const std::string& help) {
  app.add_flag_callback(flag, [&out, key, value] { out.emplace_back(key, value); }, help);
}

struct TrainArgs {
  std::string config_path;
  Overrides overrides;
  std::vector<std::string> sets;
  bool run_dir_flag = false;
};

int cmd_train(const TrainArgs& args) {
  ttlm::RunConfig cfg = args.config_path.empty() ? ttlm::RunConfig{} : ttlm::RunConfig::load(args.config_path);
  if (const char* env = std::getenv("TTLM_RUN_DIR"); env && *env) cfg.set("run_dir", env);
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ttlm::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cfg.corpus_dir.empty()) throw ttlm::ConfigError("no corpus given (use --corpus or corpus_dir=)");
  cfg.train.validate();

  ttlm::CorpusOptions copts;
  copts.max_vocab = cfg.max_vocab;
  copts.min_count = cfg.min_count;
  copts.max_train_tokens = cfg.max_train_tokens;
  copts.vocab_file = cfg.vocab_file;
  const ttlm::CorpusSplits corpus = ttlm::load_corpus(cfg.corpus_dir, copts);

  const ttlm::ModelConfig mcfg = cfg.model_config(corpus.vocab.size()).resolved();
  ttlm::LanguageModel model = ttlm::LanguageModel::create(mcfg);

  std::filesystem::create_directories(cfg.run_dir);
  const std::string resolved = cfg.to_text();
  {
    std::ofstream echo(cfg.resolved_config_path(), std::ios::trunc);
    echo << resolved;
    if (!echo) throw ttlm::DataError("cannot write " + cfg.resolved_config_path().string());
  }
  corpus.vocab.save(cfg.vocab_echo_path());

  fmt::print("model {} ({}) rank={} embed={} vocab={} params={}\n", ttlm::to_string(mcfg.kind.tag),
             ttlm::to_string(mcfg.kind.activation), mcfg.hidden, mcfg.embed, mcfg.vocab, model.parameter_count());
  fmt::print("tokens train={} valid={} test={}\n", corpus.train.size(), corpus.valid.size(), corpus.test.size());

  ttlm::TrainingOutputs outputs;
  outputs.checkpoint = cfg.checkpoint_path();
  outputs.metrics_log = cfg.metrics_log_path();
  outputs.timing_log = cfg.timing_log_path();
  outputs.checkpoint_metadata = resolved;
  outputs.vocab_tokens = corpus.vocab.tokens();
  outputs.on_epoch = [](const ttlm::EpochRecord& r) {
    fmt::print("epoch {:>3}  train_nll {:.4f}  valid_ppl {}  lr {:g}  {:.1f}s\n", r.epoch, r.train_nll,
               r.valid_ppl ? fmt::format("{:.2f}", *r.valid_ppl) : std::string("-"), r.lr, r.seconds);
    std::fflush(stdout);
  };
  const ttlm::TrainingReport report =
      ttlm::run_training(model, corpus.train, corpus.valid, corpus.test, cfg.train, outputs);
  fmt::print("best epoch {}  valid PPL {:.1f}  test PPL {:.1f}\n", report.best_epoch, report.best_valid_ppl,
             report.test_ppl);
  fmt::print("checkpoint {}\n", cfg.checkpoint_path().string());
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string split = "test";
  std::size_t batch_size = 0;
  std::size_t bptt_len = 0;
};

ttlm::Vocabulary vocab_of(const ttlm::Checkpoint& ck) {
  if (ck.vocab_tokens.empty()) throw ttlm::ConfigError("checkpoint carries no vocabulary");
  return ttlm::Vocabulary::from_tokens(ck.vocab_tokens);
}

int cmd_eval(const EvalArgs& args) {
  if (args.split != "valid" && args.split != "test" && args.split != "train") {
    throw ttlm::ConfigError("--split must be train, valid or test");
  }
  const ttlm::Checkpoint ck = ttlm::load_checkpoint(args.checkpoint);
  const ttlm::Vocabulary vocab = vocab_of(ck);
  const ttlm::RunConfig run = ttlm::RunConfig::parse(ck.metadata);
  const std::filesystem::path dir = args.corpus.empty() ? run.corpus_dir : std::filesystem::path(args.corpus);
  if (dir.empty() || !std::filesystem::is_directory(dir)) {
    throw ttlm::DataError("corpus directory '" + dir.string() + "' does not exist");
  }
  const ttlm::TokenStream stream = ttlm::encode(ttlm::read_text_file(ttlm::find_split_file(dir, args.split)), vocab);
  const std::size_t batch = args.batch_size ? args.batch_size : run.train.eval_batch_size;
  const std::size_t bptt = args.bptt_len ? args.bptt_len : run.train.bptt_len;
  const double ppl = ttlm::evaluate_ppl(ck.model, stream, batch, bptt);
  fmt::print("{} PPL {:.1f}\n", args.split, ppl);
  return kExitOk;
}

struct CheckArgs {
  std::string scale = "default";
  std::uint64_t seed = ttlm::CheckOptions{}.seed;
  std::size_t cap = ttlm::kDefaultEntryCap;
};

int cmd_check(const CheckArgs& args) {
  ttlm::CheckOptions opts;
  if (args.scale == "default") {
    opts.scale = ttlm::CheckScale::Default;
  } else if (args.scale == "large") {
    opts.scale = ttlm::CheckScale::Large;
  } else {
    throw ttlm::ConfigError("--scale must be default or large");
  }
  opts.seed = args.seed;
  opts.entry_cap = args.cap;
  bool ok = true;
  for (const auto& r : ttlm::run_checks(opts)) {
    fmt::print("{}\n", ttlm::format_suite_result(r));
    ok = ok && r.passed;
  }
  if (!ok) {
    fmt::print(stderr, "oracle checks failed\n");
    return kExitRuntime;
  }
  return kExitOk;
}

struct SampleArgs {
  std::string checkpoint;
  std::size_t length = 50;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  bool greedy = false;
};

int cmd_sample(const SampleArgs& args) {
  if (!args.greedy && !(args.temperature > 0.0)) throw ttlm::ConfigError("--temperature must be positive");
  const ttlm::Checkpoint ck = ttlm::load_checkpoint(args.checkpoint);
  const ttlm::Vocabulary vocab = vocab_of(ck);
  if (vocab.size() != ck.model.config().vocab) throw ttlm::ConfigError("checkpoint vocabulary does not match the model");
  std::mt19937_64 rng(args.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  ttlm::HiddenState h = ck.model.init_hidden();
  std::string line;
  for (std::size_t i = 0; i < args.length; ++i) {
    const ttlm::Tensor logits = ck.model.logits(h);
    std::size_t next = 0;
    if (args.greedy) {
      for (std::size_t k = 1; k < logits.size(); ++k) {
        if (logits[k] > logits[next]) next = k;
      }
    } else {
      const ttlm::Tensor p = ttlm::softmax(ttlm::scale(logits, 1.0 / args.temperature));
      const double u = uniform(rng);
      double acc = 0.0;
      next = p.size() - 1;
      for (std::size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (u < acc) {
          next = k;
          break;
        }
      }
    }
    if (next == ttlm::Vocabulary::kEosIndex) {
      fmt::print("{}\n", line);
      line.clear();
    } else {
      if (!line.empty()) line += ' ';
      line += vocab.token(next);
    }
    h = ck.model.advance(h, next);
  }
  if (!line.empty()) fmt::print("{}\n", line);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-train recurrent language models: train, eval, check, sample"};
  app.require_subcommand(1);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and keep the best-validation checkpoint");
  train_cmd->add_option("--config", train.config_path, "key=value config file")->check(CLI::ExistingFile);
  add_override(*train_cmd, train.overrides, "--corpus", "corpus_dir", "Directory with train/valid/test splits");
  add_override(*train_cmd, train.overrides, "--kind", "kind",
               "ttlm, ttlm-tiny, ttlm-large, vanilla-rnn, rac, mi-rnn or second-order");
  add_override(*train_cmd, train.overrides, "--activation", "activation", "none or tanh");
  add_override(*train_cmd, train.overrides, "--rank", "rank", "Rank R or hidden size H");
  add_override(*train_cmd, train.overrides, "--embed", "embed", "Embedding size (TTLM family: R^2)");
  add_override(*train_cmd, train.overrides, "--epochs", "epochs", "Training epochs");
  add_override(*train_cmd, train.overrides, "--lr", "lr", "Initial learning rate");
  add_override(*train_cmd, train.overrides, "--anneal", "anneal_factor", "LR factor on non-improving validation");
  add_override(*train_cmd, train.overrides, "--clip", "clip_norm", "Global gradient-norm clip");
  add_override(*train_cmd, train.overrides, "--batch-size", "batch_size", "Training batch size");
  add_override(*train_cmd, train.overrides, "--bptt", "bptt_len", "Truncated BPTT window length");
  add_override(*train_cmd, train.overrides, "--eval-batch-size", "eval_batch_size", "Evaluation batch size");
  add_override(*train_cmd, train.overrides, "--eval-interval", "eval_interval", "Validate every N epochs");
  add_override(*train_cmd, train.overrides, "--seed", "seed", "Random seed");
  add_override(*train_cmd, train.overrides, "--vocab-file", "vocab_file", "Load the vocabulary instead of building it");
  add_override(*train_cmd, train.overrides, "--max-vocab", "max_vocab", "Cap on non-reserved vocabulary entries");
  add_override(*train_cmd, train.overrides, "--min-count", "min_count", "Minimum token count for the vocabulary");
  add_override(*train_cmd, train.overrides, "--max-train-tokens", "max_train_tokens", "Use only the first N train tokens");
  add_override(*train_cmd, train.overrides, "--run-dir", "run_dir", "Output directory (env TTLM_RUN_DIR)");
  add_override(*train_cmd, train.overrides, "--metrics", "metrics_path", "Metrics log path");
  add_switch(*train_cmd, train.overrides, "--untied", "tie_weights", "false", "Separate output embedding");
  add_switch(*train_cmd, train.overrides, "--zero-init", "zero_init_hidden", "true", "Zero initial hidden state");
  train_cmd->add_option("--set", train.sets, "Any config key as key=value (repeatable)");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Print the perplexity of a checkpoint on a corpus split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "Corpus directory (default: the one used in training)");
  eval_cmd->add_option("--split", eval.split, "train, valid or test")->capture_default_str();
  eval_cmd->add_option("--batch-size", eval.batch_size, "Evaluation batch size (default: from the checkpoint)");
  eval_cmd->add_option("--bptt", eval.bptt_len, "Window length (default: from the checkpoint)");

  CheckArgs check;
  CLI::App* check_cmd = app.add_subcommand("check", "Run the seeded oracle equivalence and gradient suites");
  check_cmd->add_option("--scale", check.scale, "default or large")->capture_default_str();
  check_cmd->add_option("--seed", check.seed, "Instance seed")->capture_default_str();
  check_cmd->add_option("--cap", check.cap, "Entry cap for materialized tensors")->capture_default_str();

  SampleArgs sample;
  CLI::App* sample_cmd = app.add_subcommand("sample", "Sample text from a checkpoint");
  sample_cmd->add_option("--checkpoint", sample.checkpoint, "Checkpoint file")->required();
  sample_cmd->add_option("--length", sample.length, "Number of tokens")->capture_default_str();
  sample_cmd->add_option("--temperature", sample.temperature, "Softmax temperature")->capture_default_str();
  sample_cmd->add_option("--seed", sample.seed, "Sampling seed")->capture_default_str();
  sample_cmd->add_flag("--greedy", sample.greedy, "Take the argmax at every step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*check_cmd) return cmd_check(check);
    if (*sample_cmd) return cmd_sample(sample);
  } catch (const ttlm::ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const ttlm::DataError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const ttlm::CheckpointError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.kind() == ttlm::CheckpointError::Kind::Io ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
