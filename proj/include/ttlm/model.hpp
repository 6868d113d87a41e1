#pragma once

// A recurrent cell plus initial hidden state and output head, forming a
// word-level language model with exact reverse-mode gradients.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttlm/cells.hpp"
#include "ttlm/tensor.hpp"
#include "ttlm/tt_oracle.hpp"

namespace ttlm {

struct ModelConfig {
  CellKind kind = CellKind::with_default_activation(CellTag::TtlmTiny);
  std::size_t hidden = 20;  // rank R or hidden units H
  std::size_t embed = 0;    // 0 means "derive": R^2
  std::size_t vocab = 0;
  // Shares the input embedding with the output embedding. Pure TTLM has no
  // separate input embedding (its output core is |V| x R), so the flag has no
  // effect there.
  bool tie_weights = true;
  // Start from a zero hidden state instead of the trainable initial row.
  bool zero_init_hidden = false;
  std::uint64_t seed = 1;

  // Fills in derived fields and throws ConfigError on inconsistent values.
  ModelConfig resolved() const;
  CellDims dims() const { return {vocab, hidden, embed}; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  CellParams cell;
  std::optional<Tensor> g_init;  // {R}; the collapsed first core
  std::optional<Tensor> head_p;  // R^2 x R (TTLM family) or H x E (baselines)
  std::optional<Tensor> head_v;  // untied output embedding, same shape as w_xe
  std::optional<Tensor> g_out;   // pure TTLM output core, V x R

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  ModelParams zeros_like() const;
  std::size_t count() const;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    self.cell.for_each(f);
    if (self.g_init) f("g_init", *self.g_init);
    if (self.head_p) f("head_p", *self.head_p);
    if (self.head_v) f("head_v", *self.head_v);
    if (self.g_out) f("g_out", *self.g_out);
  }
};

struct SequenceNll {
  double total = 0.0;
  std::vector<double> per_step;
};

class LanguageModel {
 public:
  LanguageModel(ModelConfig config, ModelParams params);

  // Fresh parameters drawn from config.seed.
  static LanguageModel create(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }

  HiddenState init_hidden() const;
  HiddenState advance(const HiddenState& h, std::size_t word) const { return step(params_.cell, word, h); }
  Tensor logits(const HiddenState& h) const;
  Tensor predict(const HiddenState& h) const;

  // Output embedding actually used by the head (w_xe when tied).
  const Tensor& output_embedding() const;

  // -sum_t log y_t[w_t], with y_1 predicted from init_hidden().
  SequenceNll sequence_nll(const SequenceEncoding& seq) const;
  // Same, also accumulating d(total)/d(theta) into grads (including g_init).
  SequenceNll sequence_nll(const SequenceEncoding& seq, ModelParams& grads) const;

  // Feeds inputs starting from `h` (updated in place) and scores targets[t]
  // after consuming inputs[t]. Returns the summed NLL. With `grads`, adds the
  // gradient of scale * NLL; the incoming state is treated as a constant
  // unless grad_h0 is given, which receives d(scale * NLL)/dh.
  double segment_nll(std::span<const std::size_t> inputs, std::span<const std::size_t> targets, HiddenState& h,
                     ModelParams* grads = nullptr, double scale = 1.0, Tensor* grad_h0 = nullptr) const;

  std::size_t parameter_count() const { return params_.count(); }

  // Pure TTLM only: the collapsed tensor-train cores this model scores with.
  TTCores to_tt_cores() const;

 private:
  struct HeadCache {
    std::vector<double> projected;
  };
  Tensor head_forward(const HiddenState& h, HeadCache* cache) const;
  // Accumulates head gradients and returns dL/dh.
  std::vector<double> head_backward(const HiddenState& h, const HeadCache& cache, const Tensor& dlogits,
                                    ModelParams& grads) const;

  struct Scored {
    double nll = 0.0;
    Tensor dlogits;  // scale * (y - onehot)
  };
  Scored score(const Tensor& logits, std::size_t target, bool want_grad, double scale) const;

  double run(const HiddenState& h0, std::optional<std::size_t> first_target, std::span<const std::size_t> inputs,
             std::span<const std::size_t> targets, HiddenState* h_out, ModelParams* grads, double scale,
             Tensor* grad_h0, std::vector<double>* per_step) const;

  ModelConfig config_;
  ModelParams params_;
};

// Parameters with the documented shapes for a resolved config, drawn from
// config.seed: cell tensors per init_params, g_init and head_p uniform in
// +-1/sqrt(H), untied head_v and g_out uniform in +-0.1.
ModelParams init_model_params(const ModelConfig& config);

// Adds `scale * src` into `dst` (same layout).
void axpy(ModelParams& dst, const ModelParams& src, double scale);
double global_norm(const ModelParams& p);

// Binary checkpoint: little-endian, magic + version + config + metadata text +
// vocabulary tokens + named fp64 parameter blobs in declaration order.
struct Checkpoint {
  LanguageModel model;
  std::string metadata;
  std::vector<std::string> vocab_tokens;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const LanguageModel& model, const std::string& metadata = {},
                     const std::vector<std::string>& vocab_tokens = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also rejects checkpoints whose kind or dimensions differ from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace ttlm
