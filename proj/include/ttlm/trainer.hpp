#pragma once

// Truncated-BPTT SGD training with global-norm clipping, validation-based
// model selection and perplexity evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ttlm/data.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/model.hpp"

namespace ttlm {

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1.0;
  double anneal_factor = 0.25;
  double clip_norm = 0.25;
  std::size_t batch_size = 20;
  std::size_t bptt_len = 35;
  std::size_t eval_batch_size = 10;
  std::uint64_t seed = 1;
  // Replaces the cell's activation when the model is built from a run config.
  std::optional<Activation> activation;
  // Validation runs every eval_interval epochs and after the last one.
  std::size_t eval_interval = 1;

  // Throws ConfigError unless every field is positive (anneal_factor in (0, 1]).
  void validate() const;
};

// Non-finite loss or hidden state during training.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::optional<std::filesystem::path> last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const std::optional<std::filesystem::path>& last_good_checkpoint() const noexcept { return last_good_; }

 private:
  std::optional<std::filesystem::path> last_good_;
};

// Scales grads so their global norm is at most max_norm. Returns the norm
// before clipping; grads are untouched when it is already within bounds.
double clip_global_norm(ModelParams& grads, double max_norm);

struct EpochStats {
  double mean_nll = 0.0;  // nats per predicted token
  std::size_t tokens = 0;
  std::size_t windows = 0;
  double max_grad_norm = 0.0;  // before clipping
  double seconds = 0.0;
  double tokens_per_second = 0.0;
};

// One pass over the batched stream. Each column starts from the model's
// initial state; states carry across windows and are detached at window
// boundaries. Per window the loss is the mean NLL over its tokens.
EpochStats train_epoch(LanguageModel& model, const BatchedStream& data, const TrainConfig& cfg, double lr);

// exp(total NLL / predicted tokens), state carried across windows.
double evaluate_ppl(const LanguageModel& model, const TokenStream& stream, std::size_t batch_size, std::size_t bptt_len);
double evaluate_ppl(const LanguageModel& model, const TokenStream& stream, const TrainConfig& cfg);

// Validation bookkeeping: best epoch so far and the annealed learning rate.
struct SelectionState {
  double lr = 1.0;
  double best_valid_ppl = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t anneal_count = 0;
};

// Records a validation result. Returns true when it is a new best;
// otherwise multiplies lr by anneal_factor.
bool record_validation(SelectionState& state, std::size_t epoch, double valid_ppl, double anneal_factor);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  std::optional<double> valid_ppl;
  double lr = 0.0;  // rate used during the epoch
  double seconds = 0.0;
  double tokens_per_second = 0.0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_ppl = 0.0;
  double test_ppl = 0.0;
  double final_lr = 0.0;
};

struct TrainingOutputs {
  std::optional<std::filesystem::path> checkpoint;  // best-validation model
  // One key=value record per epoch plus a final summary line. Holds no
  // timing data, so it is bitwise reproducible.
  std::optional<std::filesystem::path> metrics_log;
  // Wall time and throughput per epoch.
  std::optional<std::filesystem::path> timing_log;
  std::string checkpoint_metadata;
  std::vector<std::string> vocab_tokens;
  // Called after each epoch's record is complete.
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains for cfg.epochs, keeping the parameters with the lowest validation
// PPL. On return the model holds those parameters and the report carries
// their test PPL.
TrainingReport run_training(LanguageModel& model, const TokenStream& train, const TokenStream& valid,
                            const TokenStream& test, const TrainConfig& cfg, const TrainingOutputs& outputs = {});

// Metrics-log line formatting, shared with tools that parse the log.
std::string format_epoch_record(const EpochRecord& r);
std::string format_final_record(const TrainingReport& r);

}  // namespace ttlm
