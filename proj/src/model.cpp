#include "ttlm/model.hpp"

#include <cmath>
#include <random>

#include "kernels.hpp"
#include "ttlm/errors.hpp"

namespace ttlm {

using kernels::add_outer;
using kernels::mat_t_vec;
using kernels::mat_vec;

ModelConfig ModelConfig::resolved() const {
  ModelConfig out = *this;
  if (out.hidden == 0) throw ConfigError("rank/hidden size must be positive");
  if (out.vocab == 0) throw ConfigError("vocabulary size must be positive");
  if (out.embed == 0) out.embed = out.hidden * out.hidden;
  if (is_tt_family(out.kind.tag) && out.embed != out.hidden * out.hidden) {
    throw ConfigError("TTLM-family models require embed = rank^2 (" + std::to_string(out.hidden * out.hidden) + "), got " +
                      std::to_string(out.embed));
  }
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  out.for_each([](std::string_view, Tensor& t) { std::fill(t.data().begin(), t.data().end(), 0.0); });
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

void axpy(ModelParams& dst, const ModelParams& src, double scale) {
  std::vector<const Tensor*> from;
  src.for_each([&](std::string_view, const Tensor& t) { from.push_back(&t); });
  std::size_t i = 0;
  dst.for_each([&](std::string_view name, Tensor& t) {
    if (i >= from.size() || from[i]->shape() != t.shape()) {
      throw ShapeError("axpy: parameter layout mismatch at " + std::string(name));
    }
    const Tensor& s = *from[i++];
    for (std::size_t k = 0; k < t.size(); ++k) t[k] += scale * s[k];
  });
  if (i != from.size()) throw ShapeError("axpy: parameter layout mismatch");
}

double global_norm(const ModelParams& p) {
  double sq = 0.0;
  p.for_each([&](std::string_view, const Tensor& t) {
    for (double x : t.data()) sq += x * x;
  });
  return std::sqrt(sq);
}

ModelParams init_model_params(const ModelConfig& raw) {
  const ModelConfig cfg = raw.resolved();
  ModelParams p;
  p.cell = init_params(cfg.kind, cfg.dims(), cfg.seed);

  // Head parameters come from an independent stream so the cell draws match
  // init_params for the same seed.
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  const double hidden_bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  auto fill = [&](Tensor& t, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : t.data()) x = dist(rng);
  };
  const std::size_t v = cfg.vocab, h = cfg.hidden, e = cfg.embed;

  if (!cfg.zero_init_hidden) {
    p.g_init = Tensor({h});
    fill(*p.g_init, hidden_bound);
  }
  if (cfg.kind.tag == CellTag::Ttlm) {
    p.g_out = Tensor({v, h});
    fill(*p.g_out, 0.1);
  } else if (is_tt_family(cfg.kind.tag)) {
    p.head_p = Tensor({e, h});
    fill(*p.head_p, hidden_bound);
    if (!cfg.tie_weights) {
      p.head_v = Tensor({v, e});
      fill(*p.head_v, 0.1);
    }
  } else {
    p.head_p = Tensor({h, e});
    fill(*p.head_p, hidden_bound);
    if (!cfg.tie_weights) {
      p.head_v = Tensor({e, v});
      fill(*p.head_v, 0.1);
    }
  }
  return p;
}

LanguageModel::LanguageModel(ModelConfig config, ModelParams params)
    : config_(config.resolved()), params_(std::move(params)) {
  if (params_.cell.kind != config_.kind || params_.cell.dims != config_.dims()) {
    throw ShapeError("cell parameters do not match the model config");
  }
  params_.cell.validate();
  const std::size_t v = config_.vocab, h = config_.hidden, e = config_.embed;
  auto expect = [](const std::optional<Tensor>& t, bool present, const Shape& shape, const char* name) {
    if (t.has_value() != present) {
      throw ShapeError(std::string("parameter ") + name + (present ? " is missing" : " is not expected"));
    }
    if (present && t->shape() != shape) {
      throw ShapeError(std::string("parameter ") + name + " must be " + shape_to_string(shape) + ", got " +
                       shape_to_string(t->shape()));
    }
  };
  const CellTag tag = config_.kind.tag;
  const bool pure = tag == CellTag::Ttlm;
  const bool tt = is_tt_family(tag);
  expect(params_.g_init, !config_.zero_init_hidden, {h}, "g_init");
  expect(params_.g_out, pure, {v, h}, "g_out");
  expect(params_.head_p, !pure, tt ? Shape{e, h} : Shape{h, e}, "head_p");
  expect(params_.head_v, !pure && !config_.tie_weights, tt ? Shape{v, e} : Shape{e, v}, "head_v");
}

LanguageModel LanguageModel::create(const ModelConfig& config) {
  return LanguageModel(config, init_model_params(config));
}

HiddenState LanguageModel::init_hidden() const {
  if (params_.g_init) return {*params_.g_init};
  return {Tensor({config_.hidden})};
}

const Tensor& LanguageModel::output_embedding() const {
  if (config_.kind.tag == CellTag::Ttlm) return *params_.g_out;
  return params_.head_v ? *params_.head_v : *params_.cell.w_xe;
}

Tensor LanguageModel::head_forward(const HiddenState& h, HeadCache* cache) const {
  const double* hv = h.h.data().data();
  const CellTag tag = config_.kind.tag;
  std::vector<double> logits;
  std::vector<double> projected;
  if (tag == CellTag::Ttlm) {
    logits = mat_vec(*params_.g_out, hv);
  } else if (is_tt_family(tag)) {
    projected = mat_vec(*params_.head_p, hv);            // R^2
    logits = mat_vec(output_embedding(), projected.data());  // V x R^2
  } else {
    projected = mat_t_vec(*params_.head_p, hv);            // E
    logits = mat_t_vec(output_embedding(), projected.data());  // E x V
  }
  if (cache) cache->projected = std::move(projected);
  return Tensor({config_.vocab}, std::move(logits));
}

std::vector<double> LanguageModel::head_backward(const HiddenState& h, const HeadCache& cache, const Tensor& dlogits,
                                                 ModelParams& grads) const {
  const double* hv = h.h.data().data();
  const double* dl = dlogits.data().data();
  const CellTag tag = config_.kind.tag;
  if (tag == CellTag::Ttlm) {
    add_outer(*grads.g_out, dl, hv);
    return mat_t_vec(*params_.g_out, dl);
  }
  Tensor& d_emb = params_.head_v ? *grads.head_v : *grads.cell.w_xe;
  if (is_tt_family(tag)) {
    add_outer(d_emb, dl, cache.projected.data());
    const std::vector<double> dproj = mat_t_vec(output_embedding(), dl);
    add_outer(*grads.head_p, dproj.data(), hv);
    return mat_t_vec(*params_.head_p, dproj.data());
  }
  add_outer(d_emb, cache.projected.data(), dl);
  const std::vector<double> dproj = mat_vec(output_embedding(), dl);
  add_outer(*grads.head_p, hv, dproj.data());
  return mat_vec(*params_.head_p, dproj.data());
}

Tensor LanguageModel::logits(const HiddenState& h) const {
  if (h.h.order() != 1 || h.h.dim(0) != config_.hidden) throw ShapeError("hidden state has the wrong dimension");
  if (!h.h.all_finite()) throw NumericError("numerical divergence: non-finite hidden state");
  return head_forward(h, nullptr);
}

Tensor LanguageModel::predict(const HiddenState& h) const {
  const Tensor l = logits(h);
  if (!l.all_finite()) throw NumericError("numerical divergence: non-finite logits");
  return softmax(l);
}

LanguageModel::Scored LanguageModel::score(const Tensor& logits, std::size_t target, bool want_grad, double scale) const {
  if (target >= config_.vocab) throw IndexError("target index " + std::to_string(target) + " out of range");
  if (!logits.all_finite()) throw NumericError("numerical divergence: non-finite logits");
  Tensor y = softmax(logits);
  const double p = y[target];
  if (!(p > 0.0)) throw NumericError("predicted probability of the target is exactly zero");
  Scored out;
  out.nll = -std::log(p);
  if (want_grad) {
    y[target] -= 1.0;
    out.dlogits = scale == 1.0 ? std::move(y) : ttlm::scale(y, scale);
  }
  return out;
}

double LanguageModel::run(const HiddenState& h0, std::optional<std::size_t> first_target,
                          std::span<const std::size_t> inputs, std::span<const std::size_t> targets, HiddenState* h_out,
                          ModelParams* grads, double scale, Tensor* grad_h0, std::vector<double>* per_step) const {
  if (inputs.size() != targets.size()) throw ShapeError("inputs and targets must have the same length");
  if (h0.h.order() != 1 || h0.h.dim(0) != config_.hidden) throw ShapeError("hidden state has the wrong dimension");
  const bool want_grad = grads != nullptr;
  const std::size_t n = inputs.size();

  std::vector<StepCache> steps(want_grad ? n : 0);
  std::vector<HiddenState> states;  // state the head reads at each scored position
  std::vector<HeadCache> heads;
  std::vector<Tensor> dlogits;
  if (want_grad) {
    states.reserve(n + 1);
    heads.reserve(n + 1);
    dlogits.reserve(n + 1);
  }
  double total = 0.0;

  auto score_at = [&](const HiddenState& h, std::size_t target) {
    HeadCache hc;
    const Tensor l = head_forward(h, want_grad ? &hc : nullptr);
    Scored s = score(l, target, want_grad, scale);
    total += s.nll;
    if (per_step) per_step->push_back(s.nll);
    if (want_grad) {
      states.push_back(h);
      heads.push_back(std::move(hc));
      dlogits.push_back(std::move(s.dlogits));
    }
  };

  if (first_target) score_at(h0, *first_target);
  HiddenState h = h0;
  for (std::size_t t = 0; t < n; ++t) {
    h = step(params_.cell, inputs[t], h, want_grad ? &steps[t] : nullptr);
    score_at(h, targets[t]);
  }
  if (h_out) *h_out = h;
  if (!want_grad) return total;

  // Reverse sweep. dh holds dL/d(state after step t).
  const std::size_t offset = first_target ? 1 : 0;
  std::vector<double> dh(config_.hidden, 0.0);
  for (std::size_t t = n; t-- > 0;) {
    const std::vector<double> from_head = head_backward(states[t + offset], heads[t + offset], dlogits[t + offset], *grads);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += from_head[i];
    const Tensor prev = backward_step(params_.cell, steps[t], Tensor({config_.hidden}, dh), grads->cell);
    dh.assign(prev.data().begin(), prev.data().end());
  }
  if (first_target) {
    const std::vector<double> from_head = head_backward(states[0], heads[0], dlogits[0], *grads);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += from_head[i];
  }
  if (grad_h0) *grad_h0 = Tensor({config_.hidden}, std::move(dh));
  return total;
}

double LanguageModel::segment_nll(std::span<const std::size_t> inputs, std::span<const std::size_t> targets,
                                  HiddenState& h, ModelParams* grads, double scale, Tensor* grad_h0) const {
  HiddenState out;
  const double total = run(h, std::nullopt, inputs, targets, &out, grads, scale, grad_h0, nullptr);
  h = std::move(out);
  return total;
}

SequenceNll LanguageModel::sequence_nll(const SequenceEncoding& seq) const {
  seq.validate(config_.vocab);
  SequenceNll out;
  const std::span<const std::size_t> w(seq.indices);
  out.total = run(init_hidden(), w[0], w.first(w.size() - 1), w.subspan(1), nullptr, nullptr, 1.0, nullptr,
                  &out.per_step);
  return out;
}

SequenceNll LanguageModel::sequence_nll(const SequenceEncoding& seq, ModelParams& grads) const {
  seq.validate(config_.vocab);
  SequenceNll out;
  const std::span<const std::size_t> w(seq.indices);
  Tensor dh0;
  out.total =
      run(init_hidden(), w[0], w.first(w.size() - 1), w.subspan(1), nullptr, &grads, 1.0, &dh0, &out.per_step);
  if (grads.g_init) {
    for (std::size_t i = 0; i < dh0.size(); ++i) (*grads.g_init)[i] += dh0[i];
  }
  return out;
}

TTCores LanguageModel::to_tt_cores() const {
  if (config_.kind.tag != CellTag::Ttlm) throw ConfigError("only pure TTLM models have tensor-train cores");
  if (config_.kind.activation != Activation::None) throw ConfigError("a tanh TTLM is not a tensor-train model");
  return TTCores::collapsed(init_hidden().h, *params_.cell.g_mid, *params_.g_out);
}

}  // namespace ttlm
