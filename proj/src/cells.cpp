#include "ttlm/cells.hpp"

#include <cmath>
#include <random>

#include "kernels.hpp"
#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

using kernels::Vec;
using kernels::add_outer;
using kernels::mat_t_vec;
using kernels::mat_vec;

struct TagName {
  CellTag tag;
  std::string_view name;
};

constexpr TagName kTagNames[] = {
    {CellTag::Ttlm, "ttlm"},       {CellTag::TtlmTiny, "ttlm-tiny"}, {CellTag::TtlmLarge, "ttlm-large"},
    {CellTag::VanillaRnn, "vanilla-rnn"}, {CellTag::Rac, "rac"},     {CellTag::MiRnn, "mi-rnn"},
    {CellTag::SecondOrder, "second-order"},
};

Vec column(const Tensor& m, std::size_t c) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Vec out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = m[i * cols + c];
  return out;
}

void add_to_column(Tensor& m, std::size_t c, const Vec& v) {
  const std::size_t cols = m.dim(1);
  for (std::size_t i = 0; i < v.size(); ++i) m[i * cols + c] += v[i];
}

void check_word(const CellParams& p, std::size_t word) {
  if (word >= p.dims.vocab) {
    throw IndexError("word index " + std::to_string(word) + " out of range for vocabulary of " + std::to_string(p.dims.vocab));
  }
}

// z = (rows x cols matrix stored flat in `m`) * x
Vec small_mat_vec(const double* m, std::size_t rows, std::size_t cols, const Vec& x) {
  Vec out(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += m[i * cols + j] * x[j];
    out[i] = acc;
  }
  return out;
}

}  // namespace

std::string_view to_string(CellTag tag) {
  for (const auto& tn : kTagNames) if (tn.tag == tag) return tn.name;
  return "unknown";
}

std::string_view to_string(Activation act) { return act == Activation::Tanh ? "tanh" : "none"; }

CellTag parse_cell_tag(std::string_view name) {
  for (const auto& tn : kTagNames) if (tn.name == name) return tn.tag;
  throw ConfigError("unknown cell kind '" + std::string(name) +
                    "' (expected ttlm, ttlm-tiny, ttlm-large, vanilla-rnn, rac, mi-rnn, second-order)");
}

Activation parse_activation(std::string_view name) {
  if (name == "none" || name == "linear") return Activation::None;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected none or tanh)");
}

bool is_tt_family(CellTag tag) {
  return tag == CellTag::Ttlm || tag == CellTag::TtlmTiny || tag == CellTag::TtlmLarge;
}

CellKind CellKind::with_default_activation(CellTag tag) {
  const bool tanh = tag == CellTag::MiRnn || tag == CellTag::SecondOrder || tag == CellTag::VanillaRnn;
  return {tag, tanh ? Activation::Tanh : Activation::None};
}

std::vector<std::pair<std::string, Shape>> cell_param_shapes(CellTag tag, const CellDims& d) {
  const std::size_t v = d.vocab, h = d.hidden, e = d.embed;
  switch (tag) {
    case CellTag::Ttlm:
      return {{"g_mid", {h, v, h}}};
    case CellTag::TtlmTiny:
      return {{"w_xe", {v, h * h}}, {"w_hh", {h, h}}};
    case CellTag::TtlmLarge:
      return {{"w_xe", {v, h * h}}, {"w_eh", {h * h, h * h}}, {"w_hh", {h, h}}};
    case CellTag::VanillaRnn:
    case CellTag::Rac:
    case CellTag::MiRnn:
      return {{"w_xe", {e, v}}, {"w_eh", {e, h}}, {"w_hh", {h, h}}};
    case CellTag::SecondOrder:
      return {{"w_xe", {e, v}}, {"projection", {e, h}}, {"t3", {h, h, h}}, {"bias", {h}}};
  }
  return {};
}

void CellParams::validate() const {
  if (dims.vocab == 0 || dims.hidden == 0 || dims.embed == 0) throw ShapeError("cell dimensions must be positive");
  if (is_tt_family(kind.tag) && dims.embed != dims.hidden * dims.hidden) {
    throw ShapeError("TTLM-family cells require embed = rank^2");
  }
  const auto expected = cell_param_shapes(kind.tag, dims);
  std::size_t i = 0;
  bool ok = true;
  for_each([&](std::string_view name, const Tensor& t) {
    if (i >= expected.size() || expected[i].first != name) {
      ok = false;
    } else if (expected[i].second != t.shape()) {
      throw ShapeError("parameter " + std::string(name) + " must be " + shape_to_string(expected[i].second) + ", got " +
                       shape_to_string(t.shape()));
    }
    ++i;
  });
  if (!ok || i != expected.size()) {
    throw ShapeError("parameter set does not match cell kind " + std::string(to_string(kind.tag)));
  }
}

CellParams CellParams::zeros_like() const {
  CellParams out = *this;
  out.for_each([](std::string_view, Tensor& t) { std::fill(t.data().begin(), t.data().end(), 0.0); });
  return out;
}

CellParams init_params(CellKind kind, const CellDims& dims, std::uint64_t seed) {
  CellParams p;
  p.kind = kind;
  p.dims = dims;
  for (auto& [name, shape] : cell_param_shapes(kind.tag, dims)) {
    Tensor t(shape);
    if (name == "g_mid") p.g_mid = std::move(t);
    else if (name == "w_xe") p.w_xe = std::move(t);
    else if (name == "w_eh") p.w_eh = std::move(t);
    else if (name == "w_hh") p.w_hh = std::move(t);
    else if (name == "projection") p.projection = std::move(t);
    else if (name == "t3") p.t3 = std::move(t);
    else if (name == "bias") p.bias = std::move(t);
  }
  p.validate();

  std::mt19937_64 rng(seed);
  const double hidden_bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  p.for_each([&](std::string_view name, Tensor& t) {
    if (name == "bias") return;
    const double bound = name == "w_xe" ? 0.1 : hidden_bound;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : t.data()) x = dist(rng);
  });
  return p;
}

HiddenState step(const CellParams& p, std::size_t word, const HiddenState& h_prev, StepCache* cache) {
  check_word(p, word);
  const std::size_t r = p.dims.hidden;
  if (h_prev.h.order() != 1 || h_prev.h.dim(0) != r) {
    throw ShapeError("hidden state must have dimension " + std::to_string(r) + ", got " + shape_to_string(h_prev.h.shape()));
  }
  const double* h = h_prev.h.data().data();
  Vec z(r, 0.0), input, mixed, lifted;

  switch (p.kind.tag) {
    case CellTag::Ttlm: {
      // z[b] = sum_a G[a, w, b] h[a]
      const Tensor& g = *p.g_mid;
      const std::size_t v = p.dims.vocab;
      for (std::size_t a = 0; a < r; ++a) {
        const double* slice = &g[(a * v + word) * r];
        for (std::size_t b = 0; b < r; ++b) z[b] += slice[b] * h[a];
      }
      break;
    }
    case CellTag::TtlmTiny:
    case CellTag::TtlmLarge: {
      const std::size_t e = r * r;
      const double* row = &(*p.w_xe)[word * e];
      input.assign(row, row + e);
      mixed = mat_vec(*p.w_hh, h);
      const double* core = input.data();
      if (p.kind.tag == CellTag::TtlmLarge) {
        lifted = mat_vec(*p.w_eh, input.data());
        core = lifted.data();
      }
      // The diagonal coupling is a reshape: the length-R^2 embedding becomes an
      // R x R matrix applied to W^hh h.
      z = small_mat_vec(core, r, r, mixed);
      break;
    }
    case CellTag::VanillaRnn:
    case CellTag::Rac:
    case CellTag::MiRnn: {
      input = column(*p.w_xe, word);
      lifted = mat_t_vec(*p.w_eh, input.data());
      mixed = mat_vec(*p.w_hh, h);
      for (std::size_t i = 0; i < r; ++i) {
        z[i] = p.kind.tag == CellTag::VanillaRnn ? lifted[i] + mixed[i] : lifted[i] * mixed[i];
      }
      break;
    }
    case CellTag::SecondOrder: {
      input = column(*p.w_xe, word);
      lifted = mat_t_vec(*p.projection, input.data());
      const Tensor& t3 = *p.t3;
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < r; ++j) {
          const double* tij = &t3[(i * r + j) * r];
          double inner = 0.0;
          for (std::size_t k = 0; k < r; ++k) inner += tij[k] * h[k];
          acc += lifted[j] * inner;
        }
        z[i] = acc + (*p.bias)[i];
      }
      break;
    }
  }

  if (p.kind.activation == Activation::Tanh) {
    for (double& x : z) x = std::tanh(x);
  }
  for (double x : z) {
    if (!std::isfinite(x)) {
      throw NumericError("numerical divergence: non-finite hidden state in " + std::string(to_string(p.kind.tag)) +
                         " step (word " + std::to_string(word) + ")");
    }
  }

  HiddenState out{Tensor({r}, z)};
  if (cache) {
    cache->valid = true;
    cache->tag = p.kind.tag;
    cache->word = word;
    cache->h_prev.assign(h, h + r);
    cache->h_next = std::move(z);
    cache->input = std::move(input);
    cache->mixed = std::move(mixed);
    cache->lifted = std::move(lifted);
  }
  return out;
}

Tensor backward_step(const CellParams& p, const StepCache& cache, const Tensor& grad_h_next, CellParams& grads) {
  if (!cache.valid) throw Error("backward_step: missing forward cache");
  if (cache.tag != p.kind.tag) throw Error("backward_step: cache belongs to a different cell kind");
  const std::size_t r = p.dims.hidden;
  if (grad_h_next.order() != 1 || grad_h_next.dim(0) != r) throw ShapeError("backward_step: gradient has the wrong shape");
  if (cache.h_prev.size() != r || cache.h_next.size() != r) throw Error("backward_step: cache does not match parameters");

  // Through the activation.
  Vec dz(grad_h_next.data().begin(), grad_h_next.data().end());
  if (p.kind.activation == Activation::Tanh) {
    for (std::size_t i = 0; i < r; ++i) dz[i] *= 1.0 - cache.h_next[i] * cache.h_next[i];
  }
  const double* h = cache.h_prev.data();
  const std::size_t word = cache.word;
  Vec dh(r, 0.0);

  switch (p.kind.tag) {
    case CellTag::Ttlm: {
      const Tensor& g = *p.g_mid;
      Tensor& dg = *grads.g_mid;
      const std::size_t v = p.dims.vocab;
      for (std::size_t a = 0; a < r; ++a) {
        const std::size_t off = (a * v + word) * r;
        double acc = 0.0;
        for (std::size_t b = 0; b < r; ++b) {
          dg[off + b] += dz[b] * h[a];
          acc += g[off + b] * dz[b];
        }
        dh[a] = acc;
      }
      break;
    }
    case CellTag::TtlmTiny:
    case CellTag::TtlmLarge: {
      const std::size_t e = r * r;
      const bool large = p.kind.tag == CellTag::TtlmLarge;
      const double* core = large ? cache.lifted.data() : cache.input.data();
      // z = core(r x r) * mixed
      Vec dcore(e, 0.0), dmixed(r, 0.0);
      for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t k = 0; k < r; ++k) {
          dcore[a * r + k] = dz[a] * cache.mixed[k];
          dmixed[k] += core[a * r + k] * dz[a];
        }
      }
      Vec dinput = large ? mat_t_vec(*p.w_eh, dcore.data()) : dcore;
      if (large) add_outer(*grads.w_eh, dcore.data(), cache.input.data());
      double* drow = &(*grads.w_xe)[word * e];
      for (std::size_t i = 0; i < e; ++i) drow[i] += dinput[i];
      add_outer(*grads.w_hh, dmixed.data(), h);
      dh = mat_t_vec(*p.w_hh, dmixed.data());
      break;
    }
    case CellTag::VanillaRnn:
    case CellTag::Rac:
    case CellTag::MiRnn: {
      Vec dlifted(r), dmixed(r);
      for (std::size_t i = 0; i < r; ++i) {
        if (p.kind.tag == CellTag::VanillaRnn) {
          dlifted[i] = dz[i];
          dmixed[i] = dz[i];
        } else {
          dlifted[i] = dz[i] * cache.mixed[i];
          dmixed[i] = dz[i] * cache.lifted[i];
        }
      }
      // lifted = W^eh^T input
      add_outer(*grads.w_eh, cache.input.data(), dlifted.data());
      add_to_column(*grads.w_xe, word, mat_vec(*p.w_eh, dlifted.data()));
      add_outer(*grads.w_hh, dmixed.data(), h);
      dh = mat_t_vec(*p.w_hh, dmixed.data());
      break;
    }
    case CellTag::SecondOrder: {
      const Tensor& t3 = *p.t3;
      Tensor& dt3 = *grads.t3;
      Vec dlifted(r, 0.0);
      for (std::size_t i = 0; i < r; ++i) {
        const double dzi = dz[i];
        (*grads.bias)[i] += dzi;
        for (std::size_t j = 0; j < r; ++j) {
          const std::size_t off = (i * r + j) * r;
          const double lj = cache.lifted[j];
          double inner = 0.0;
          for (std::size_t k = 0; k < r; ++k) {
            inner += t3[off + k] * h[k];
            dt3[off + k] += dzi * lj * h[k];
            dh[k] += dzi * lj * t3[off + k];
          }
          dlifted[j] += dzi * inner;
        }
      }
      add_outer(*grads.projection, cache.input.data(), dlifted.data());
      add_to_column(*grads.w_xe, word, mat_vec(*p.projection, dlifted.data()));
      break;
    }
  }
  return Tensor({r}, std::move(dh));
}

StepGradients backward_step(const CellParams& params, std::size_t word, const HiddenState& h_prev,
                            const Tensor& grad_h_next) {
  StepCache cache;
  step(params, word, h_prev, &cache);
  StepGradients out{params.zeros_like(), Tensor()};
  out.grad_h_prev = backward_step(params, cache, grad_h_next, out.grads);
  return out;
}

Tensor rac_input_matrix(const CellParams& p) {
  if (p.kind.tag != CellTag::Rac && p.kind.tag != CellTag::MiRnn && p.kind.tag != CellTag::VanillaRnn) {
    throw ShapeError("rac_input_matrix: cell has no factored input embedding");
  }
  return matmul(transpose(*p.w_eh), *p.w_xe);
}

Tensor secondorder_input_tensor(const CellParams& p) {
  if (p.kind.tag != CellTag::SecondOrder) throw ShapeError("secondorder_input_tensor: not a second-order cell");
  const std::size_t r = p.dims.hidden, v = p.dims.vocab;
  const Tensor emb = matmul(transpose(*p.projection), *p.w_xe);  // H x V
  const Tensor& t3 = *p.t3;
  Tensor out({r, v, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t w = 0; w < v; ++w) {
      for (std::size_t j = 0; j < r; ++j) {
        const double e = emb[j * v + w];
        for (std::size_t k = 0; k < r; ++k) out[(i * v + w) * r + k] += e * t3[(i * r + j) * r + k];
      }
    }
  }
  return out;
}

}  // namespace ttlm
