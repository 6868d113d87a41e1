#pragma once

// One-step forward and reverse-mode computations for every recurrent cell.
//
// Parameter shapes (R = rank, H = hidden, E = embedding, V = vocabulary):
//
//   ttlm          g_mid R x V x R
//   ttlm-tiny     w_xe V x R^2, w_hh R x R
//   ttlm-large    w_xe V x R^2, w_eh R^2 x R^2, w_hh R x R
//   vanilla/rac/mi-rnn
//                 w_xe E x V, w_eh E x H, w_hh H x H
//   second-order  w_xe E x V, projection E x H, t3 H x H x H, bias H

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttlm/tensor.hpp"

namespace ttlm {

enum class CellTag { Ttlm, TtlmTiny, TtlmLarge, VanillaRnn, Rac, MiRnn, SecondOrder };
enum class Activation { None, Tanh };

inline constexpr CellTag kAllCellTags[] = {CellTag::Ttlm,       CellTag::TtlmTiny, CellTag::TtlmLarge,
                                           CellTag::VanillaRnn, CellTag::Rac,      CellTag::MiRnn,
                                           CellTag::SecondOrder};

std::string_view to_string(CellTag tag);
std::string_view to_string(Activation act);
CellTag parse_cell_tag(std::string_view name);
Activation parse_activation(std::string_view name);

// TTLM-family cells (ttlm, ttlm-tiny, ttlm-large).
bool is_tt_family(CellTag tag);

struct CellKind {
  CellTag tag = CellTag::TtlmTiny;
  Activation activation = Activation::None;

  static CellKind with_default_activation(CellTag tag);
  friend bool operator==(const CellKind&, const CellKind&) = default;
};

struct CellDims {
  std::size_t vocab = 0;
  std::size_t hidden = 0;  // R or H
  std::size_t embed = 0;   // E; R^2 for the TTLM family

  friend bool operator==(const CellDims&, const CellDims&) = default;
};

struct CellParams {
  CellKind kind;
  CellDims dims;
  std::optional<Tensor> g_mid;
  std::optional<Tensor> w_xe;
  std::optional<Tensor> w_eh;
  std::optional<Tensor> w_hh;
  std::optional<Tensor> projection;
  std::optional<Tensor> t3;
  std::optional<Tensor> bias;

  // Throws ShapeError unless exactly the tensors of `kind` are present with
  // the documented shapes.
  void validate() const;

  // Visits present tensors in declaration order.
  template <class F>
  void for_each(F&& f) {
    visit_fields(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_fields(*this, f);
  }

  CellParams zeros_like() const;

 private:
  template <class Self, class F>
  static void visit_fields(Self& self, F& f) {
    if (self.g_mid) f("g_mid", *self.g_mid);
    if (self.w_xe) f("w_xe", *self.w_xe);
    if (self.w_eh) f("w_eh", *self.w_eh);
    if (self.w_hh) f("w_hh", *self.w_hh);
    if (self.projection) f("projection", *self.projection);
    if (self.t3) f("t3", *self.t3);
    if (self.bias) f("bias", *self.bias);
  }
};

// Expected shape of every tensor a cell of this kind owns, in the same order
// as CellParams::for_each.
std::vector<std::pair<std::string, Shape>> cell_param_shapes(CellTag tag, const CellDims& dims);

struct HiddenState {
  Tensor h;
};

// Forward intermediates needed by backward_step.
struct StepCache {
  bool valid = false;
  CellTag tag = CellTag::Ttlm;
  std::size_t word = 0;
  std::vector<double> h_prev;
  std::vector<double> h_next;
  std::vector<double> input;   // embedding column / row used this step
  std::vector<double> mixed;   // W^hh h_prev
  std::vector<double> lifted;  // projected or remapped embedding
};

HiddenState step(const CellParams& params, std::size_t word, const HiddenState& h_prev, StepCache* cache = nullptr);

// Accumulates parameter gradients into `grads` and returns dL/dh_prev.
Tensor backward_step(const CellParams& params, const StepCache& cache, const Tensor& grad_h_next, CellParams& grads);

struct StepGradients {
  CellParams grads;
  Tensor grad_h_prev;
};

// Recomputes the forward pass, then runs backward_step into fresh buffers.
StepGradients backward_step(const CellParams& params, std::size_t word, const HiddenState& h_prev,
                            const Tensor& grad_h_next);

CellParams init_params(CellKind kind, const CellDims& dims, std::uint64_t seed);

// Input-to-hidden matrix W^hx = W^eh^T W^xe (H x V) of a rac/mi-rnn cell.
Tensor rac_input_matrix(const CellParams& params);

// Effective bilinear tensor of a second-order cell with the embedding folded
// in: out[i, w, k] = sum_j e(w)_j T[i, j, k], shape H x V x H.
Tensor secondorder_input_tensor(const CellParams& params);

}  // namespace ttlm
