#include "ttlm/trainer.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>

namespace ttlm {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
  if (!(anneal_factor > 0.0 && anneal_factor <= 1.0)) throw ConfigError("anneal_factor must be in (0, 1]");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (bptt_len == 0) throw ConfigError("bptt_len must be at least 1");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be at least 1");
  if (eval_interval == 0) throw ConfigError("eval_interval must be at least 1");
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    grads.for_each([&](std::string_view, Tensor& t) {
      for (double& x : t.data()) x *= s;
    });
  }
  return norm;
}

EpochStats train_epoch(LanguageModel& model, const BatchedStream& data, const TrainConfig& cfg, double lr) {
  const auto started = std::chrono::steady_clock::now();
  EpochStats stats;
  std::vector<HiddenState> states(data.cols, model.init_hidden());
  const bool learn_init = model.params().g_init.has_value();
  double total_nll = 0.0;

  const auto windows = bptt_windows(data, cfg.bptt_len);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const BpttWindow& win = windows[w];
    const std::size_t n_tokens = win.length * data.cols;
    const double scale = 1.0 / static_cast<double>(n_tokens);
    ModelParams grads = model.params().zeros_like();
    double window_nll = 0.0;
    try {
      for (std::size_t c = 0; c < data.cols; ++c) {
        const auto in = win.inputs(data, c);
        const auto tg = win.targets(data, c);
        Tensor dh0;
        const bool first = w == 0 && learn_init;
        window_nll += model.segment_nll(in, tg, states[c], &grads, scale, first ? &dh0 : nullptr);
        if (first) {
          Tensor& g = *grads.g_init;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += dh0[i];
        }
      }
    } catch (const NumericError& e) {
      throw DivergenceError(fmt::format("training diverged in window {}: {}", w, e.what()), std::nullopt);
    }
    if (!std::isfinite(window_nll)) {
      throw DivergenceError(fmt::format("training diverged: non-finite loss in window {}", w), std::nullopt);
    }
    const double norm = clip_global_norm(grads, cfg.clip_norm);
    if (!std::isfinite(norm)) {
      throw DivergenceError(fmt::format("training diverged: non-finite gradient in window {}", w), std::nullopt);
    }
    stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
    if (lr != 0.0) axpy(model.params(), grads, -lr);
    total_nll += window_nll;
    stats.tokens += n_tokens;
    ++stats.windows;
  }
  stats.mean_nll = stats.tokens ? total_nll / static_cast<double>(stats.tokens) : 0.0;
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  stats.tokens_per_second = stats.seconds > 0.0 ? static_cast<double>(stats.tokens) / stats.seconds : 0.0;
  return stats;
}

double evaluate_ppl(const LanguageModel& model, const TokenStream& stream, std::size_t batch_size,
                    std::size_t bptt_len) {
  const BatchedStream data = batchify(stream, batch_size);
  std::vector<HiddenState> states(data.cols, model.init_hidden());
  double total = 0.0;
  std::size_t tokens = 0;
  for (const BpttWindow& win : bptt_windows(data, bptt_len)) {
    for (std::size_t c = 0; c < data.cols; ++c) {
      total += model.segment_nll(win.inputs(data, c), win.targets(data, c), states[c]);
    }
    tokens += win.length * data.cols;
  }
  if (tokens == 0) throw DataError("evaluation stream has no predicted tokens");
  return std::exp(total / static_cast<double>(tokens));
}

double evaluate_ppl(const LanguageModel& model, const TokenStream& stream, const TrainConfig& cfg) {
  return evaluate_ppl(model, stream, cfg.eval_batch_size, cfg.bptt_len);
}

bool record_validation(SelectionState& state, std::size_t epoch, double valid_ppl, double anneal_factor) {
  if (valid_ppl < state.best_valid_ppl) {
    state.best_valid_ppl = valid_ppl;
    state.best_epoch = epoch;
    return true;
  }
  state.lr *= anneal_factor;
  ++state.anneal_count;
  return false;
}

std::string format_epoch_record(const EpochRecord& r) {
  std::string out = fmt::format("epoch={} train_nll={}", r.epoch, r.train_nll);
  if (r.valid_ppl) out += fmt::format(" valid_ppl={}", *r.valid_ppl);
  out += fmt::format(" lr={}", r.lr);
  return out;
}

std::string format_final_record(const TrainingReport& r) {
  return fmt::format("final best_epoch={} best_valid_ppl={} test_ppl={} final_lr={}", r.best_epoch, r.best_valid_ppl,
                     r.test_ppl, r.final_lr);
}

namespace {

std::ofstream open_log(const std::optional<std::filesystem::path>& path) {
  std::ofstream out;
  if (path) {
    if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
    out.open(*path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path->string());
  }
  return out;
}

}  // namespace

TrainingReport run_training(LanguageModel& model, const TokenStream& train, const TokenStream& valid,
                            const TokenStream& test, const TrainConfig& cfg, const TrainingOutputs& outputs) {
  cfg.validate();
  const BatchedStream data = batchify(train, cfg.batch_size);
  std::ofstream metrics = open_log(outputs.metrics_log);
  std::ofstream timing = open_log(outputs.timing_log);
  if (outputs.checkpoint && outputs.checkpoint->has_parent_path()) {
    std::filesystem::create_directories(outputs.checkpoint->parent_path());
  }

  TrainingReport report;
  SelectionState sel;
  sel.lr = cfg.lr;
  ModelParams best = model.params();
  bool saved = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sel.lr;
    EpochStats stats;
    try {
      stats = train_epoch(model, data, cfg, sel.lr);
    } catch (const DivergenceError& e) {
      const auto last_good = saved ? outputs.checkpoint : std::nullopt;
      throw DivergenceError(fmt::format("epoch {}: {}; last good checkpoint: {}", epoch, e.what(),
                                        last_good ? last_good->string() : std::string("none")),
                            last_good);
    }
    rec.train_nll = stats.mean_nll;
    rec.seconds = stats.seconds;
    rec.tokens_per_second = stats.tokens_per_second;

    if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) {
      double ppl = 0.0;
      try {
        ppl = evaluate_ppl(model, valid, cfg);
      } catch (const NumericError& e) {
        throw DivergenceError(fmt::format("epoch {}: validation diverged: {}", epoch, e.what()),
                              saved ? outputs.checkpoint : std::nullopt);
      }
      if (!std::isfinite(ppl)) {
        throw DivergenceError(fmt::format("epoch {}: validation perplexity is not finite", epoch),
                              saved ? outputs.checkpoint : std::nullopt);
      }
      rec.valid_ppl = ppl;
      if (record_validation(sel, epoch, ppl, cfg.anneal_factor)) {
        best = model.params();
        if (outputs.checkpoint) {
          save_checkpoint(*outputs.checkpoint, model, outputs.checkpoint_metadata, outputs.vocab_tokens);
          saved = true;
        }
      }
    }
    report.epochs.push_back(rec);
    if (outputs.on_epoch) outputs.on_epoch(rec);
    if (metrics.is_open()) metrics << format_epoch_record(rec) << '\n' << std::flush;
    if (timing.is_open()) {
      timing << fmt::format("epoch={} seconds={:.3f} tokens_per_second={:.1f}", epoch, rec.seconds,
                            rec.tokens_per_second)
             << '\n'
             << std::flush;
    }
  }

  model.params() = best;
  report.best_epoch = sel.best_epoch;
  report.best_valid_ppl = sel.best_valid_ppl;
  report.final_lr = sel.lr;
  report.test_ppl = evaluate_ppl(model, test, cfg);
  if (metrics.is_open()) metrics << format_final_record(report) << '\n' << std::flush;
  return report;
}

}  // namespace ttlm
