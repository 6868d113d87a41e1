#pragma once

// Shared-core tensor-train scoring in both forms: the exponential-space
// objects (one-hot sequence tensor, full weight tensor) used as ground truth,
// and the recursive hidden-state evaluation that never builds them.

#include <cstddef>
#include <vector>

#include "ttlm/tensor.hpp"

namespace ttlm {

inline constexpr std::size_t kDefaultEntryCap = 10'000'000;

struct SequenceEncoding {
  std::vector<std::size_t> indices;

  std::size_t length() const noexcept { return indices.size(); }
  // Throws IndexError if any index is >= vocab_size, ShapeError if empty.
  void validate(std::size_t vocab_size) const;
};

// The triple (first core, shared middle core, output core).
//
//   g_first: |V| x R   (or 1 x R when collapsed into an initial hidden state)
//   g_mid:   R x |V| x R, indexed (incoming rank, word, outgoing rank)
//   g_out:   |V| x R
//
// In collapsed mode the first row acts as h0 and every word except the last
// passes through g_mid; in full mode the first word selects a row of g_first.
class TTCores {
 public:
  static TTCores untied(Tensor g_first, Tensor g_mid, Tensor g_out);
  // Output core identical to the first core.
  static TTCores tied(Tensor g_first, Tensor g_mid);
  static TTCores collapsed(Tensor g_init, Tensor g_mid, Tensor g_out);

  const Tensor& g_first() const noexcept { return g_first_; }
  const Tensor& g_mid() const noexcept { return g_mid_; }
  const Tensor& g_out() const noexcept { return g_out_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t vocab_size() const noexcept { return vocab_; }
  bool is_tied() const noexcept { return tied_; }
  bool is_collapsed() const noexcept { return collapsed_; }

  // Full-mode cores computing the same tensor: g_first[w] = h0^T G[:, w, :].
  TTCores expanded() const;

 private:
  TTCores(Tensor g_first, Tensor g_mid, Tensor g_out, bool tied, bool collapsed);

  Tensor g_first_;
  Tensor g_mid_;
  Tensor g_out_;
  std::size_t rank_ = 0;
  std::size_t vocab_ = 0;
  bool tied_ = false;
  bool collapsed_ = false;
};

// One-hot tensor product of the sequence: order N, every mode |V|.
Tensor phi_of_sequence(const SequenceEncoding& seq, std::size_t vocab_size,
                       std::size_t entry_cap = kDefaultEntryCap);

// Product of the sliced cores along the sequence.
double tt_element(const TTCores& cores, const SequenceEncoding& seq);

// The full order-n weight tensor, built by contracting cores mode by mode.
Tensor materialize_A(const TTCores& cores, std::size_t n, std::size_t entry_cap = kDefaultEntryCap);

// <A, Phi(X)> over the whole exponential space.
double score_bruteforce(const TTCores& cores, const SequenceEncoding& seq,
                        std::size_t entry_cap = kDefaultEntryCap);

// Hidden-state recursion h <- f(x)^T G h, finished with the output core.
double score_recursive(const TTCores& cores, const SequenceEncoding& seq);

// softmax(<A^(1:t), Phi(prefix)>_{t-1}) with t = |prefix| + 1.
Tensor conditional_bruteforce(const TTCores& cores, const SequenceEncoding& prefix,
                              std::size_t entry_cap = kDefaultEntryCap);

// softmax(g_out h) after running the recursion over the prefix.
Tensor conditional_recursive(const TTCores& cores, const SequenceEncoding& prefix);

// Middle core G[b, w, a] = w_hx[a, w] * w_hh[a, b] (diagonal coupling routed
// by index, never materialized). w_hx: R x |V|, w_hh: R x R.
Tensor cores_from_hadamard(const Tensor& w_hx, const Tensor& w_hh);

// Second-order tensor T (out-hidden, input, in-hidden) -> middle core
// G[in, input, out] = T[out, input, in], and back.
Tensor core_from_secondorder(const Tensor& t3);
Tensor secondorder_from_core(const Tensor& g_mid);

}  // namespace ttlm
