#include "ttlm/tt_oracle.hpp"

#include <string>

#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

void require_under_cap(std::size_t entries, std::size_t cap, const char* what) {
  if (entries > cap) {
    throw CapExceededError(std::string(what) + ": " + std::to_string(entries) + " entries exceeds the entry cap of " +
                           std::to_string(cap));
  }
}

// base^exp, saturating at cap + 1 so callers can reject without overflow.
std::size_t capped_power(std::size_t base, std::size_t exp, std::size_t cap) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (out > (cap + 1) / base) return cap + 1;
    out *= base;
  }
  return out;
}

void check_index(std::size_t w, std::size_t vocab) {
  if (w >= vocab) {
    throw IndexError("word index " + std::to_string(w) + " out of range for vocabulary of " + std::to_string(vocab));
  }
}

// Row vector times the middle-core slice: out[b] = sum_a row[a] * G[a, w, b].
std::vector<double> advance(const std::vector<double>& row, const Tensor& g_mid, std::size_t w) {
  const std::size_t r = g_mid.dim(0);
  const std::size_t v = g_mid.dim(1);
  std::vector<double> out(r, 0.0);
  for (std::size_t a = 0; a < r; ++a) {
    const double* slice = &g_mid[(a * v + w) * r];
    for (std::size_t b = 0; b < r; ++b) out[b] += row[a] * slice[b];
  }
  return out;
}

std::vector<double> row_of(const Tensor& m, std::size_t i) {
  const std::size_t cols = m.dim(1);
  return {m.data().begin() + static_cast<std::ptrdiff_t>(i * cols),
          m.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * cols)};
}

void require_min_length(const TTCores& cores, const SequenceEncoding& seq) {
  seq.validate(cores.vocab_size());
  if (!cores.is_collapsed() && seq.length() < 2) {
    throw ShapeError("full-mode tensor-train scoring needs a sequence of length >= 2");
  }
}

// Hidden state after consuming seq[0 .. count), via one-hot contractions.
Tensor recursive_state(const TTCores& cores, const SequenceEncoding& seq, std::size_t count) {
  const std::size_t vocab = cores.vocab_size();
  const std::size_t r = cores.rank();
  Tensor h;
  std::size_t t = 0;
  if (cores.is_collapsed()) {
    h = reshape(cores.g_first(), {r});
  } else {
    h = contract_mode(Tensor::one_hot(vocab, seq.indices[0]), cores.g_first(), 0, 0);
    t = 1;
  }
  for (; t < count; ++t) {
    const Tensor slice = contract_mode(Tensor::one_hot(vocab, seq.indices[t]), cores.g_mid(), 0, 1);  // (in, out)
    h = contract_mode(slice, h, 0, 0);
    if (!h.all_finite()) throw NumericError("non-finite hidden state at position " + std::to_string(t));
  }
  return h;
}

}  // namespace

void SequenceEncoding::validate(std::size_t vocab_size) const {
  if (indices.empty()) throw ShapeError("sequence must contain at least one word");
  for (std::size_t w : indices) check_index(w, vocab_size);
}

TTCores::TTCores(Tensor g_first, Tensor g_mid, Tensor g_out, bool tied, bool collapsed)
    : g_first_(std::move(g_first)), g_mid_(std::move(g_mid)), g_out_(std::move(g_out)), tied_(tied), collapsed_(collapsed) {
  if (g_mid_.order() != 3 || g_mid_.dim(0) != g_mid_.dim(2)) {
    throw ShapeError("middle core must be R x |V| x R, got " + shape_to_string(g_mid_.shape()));
  }
  rank_ = g_mid_.dim(0);
  vocab_ = g_mid_.dim(1);
  const Shape first_expected = collapsed_ ? Shape{1, rank_} : Shape{vocab_, rank_};
  if (g_first_.shape() != first_expected) {
    throw ShapeError("first core must be " + shape_to_string(first_expected) + ", got " + shape_to_string(g_first_.shape()));
  }
  if (g_out_.shape() != Shape{vocab_, rank_}) {
    throw ShapeError("output core must be " + shape_to_string({vocab_, rank_}) + ", got " + shape_to_string(g_out_.shape()));
  }
  if (tied_ && collapsed_) throw ShapeError("a collapsed first core cannot be tied to the output core");
}

TTCores TTCores::untied(Tensor g_first, Tensor g_mid, Tensor g_out) {
  return TTCores(std::move(g_first), std::move(g_mid), std::move(g_out), false, false);
}

TTCores TTCores::tied(Tensor g_first, Tensor g_mid) {
  Tensor g_out = g_first;
  return TTCores(std::move(g_first), std::move(g_mid), std::move(g_out), true, false);
}

TTCores TTCores::collapsed(Tensor g_init, Tensor g_mid, Tensor g_out) {
  if (g_init.order() == 1) g_init = reshape(g_init, {1, g_init.dim(0)});
  return TTCores(std::move(g_init), std::move(g_mid), std::move(g_out), false, true);
}

TTCores TTCores::expanded() const {
  if (!collapsed_) return *this;
  Tensor first({vocab_, rank_});
  const std::vector<double> h0 = row_of(g_first_, 0);
  for (std::size_t w = 0; w < vocab_; ++w) {
    const std::vector<double> row = advance(h0, g_mid_, w);
    for (std::size_t b = 0; b < rank_; ++b) first[w * rank_ + b] = row[b];
  }
  return untied(std::move(first), g_mid_, g_out_);
}

Tensor phi_of_sequence(const SequenceEncoding& seq, std::size_t vocab_size, std::size_t entry_cap) {
  seq.validate(vocab_size);
  require_under_cap(capped_power(vocab_size, seq.length(), entry_cap), entry_cap, "phi_of_sequence");
  Tensor phi = Tensor::one_hot(vocab_size, seq.indices[0]);
  for (std::size_t t = 1; t < seq.length(); ++t) phi = tensor_product(phi, Tensor::one_hot(vocab_size, seq.indices[t]));
  return phi;
}

double tt_element(const TTCores& cores, const SequenceEncoding& seq) {
  require_min_length(cores, seq);
  const std::size_t n = seq.length();
  std::vector<double> row;
  std::size_t t = 0;
  if (cores.is_collapsed()) {
    row = row_of(cores.g_first(), 0);
  } else {
    row = row_of(cores.g_first(), seq.indices[0]);
    t = 1;
  }
  for (; t + 1 < n; ++t) row = advance(row, cores.g_mid(), seq.indices[t]);
  const std::vector<double> last = row_of(cores.g_out(), seq.indices[n - 1]);
  double acc = 0.0;
  for (std::size_t a = 0; a < cores.rank(); ++a) acc += row[a] * last[a];
  return acc;
}

Tensor materialize_A(const TTCores& cores, std::size_t n, std::size_t entry_cap) {
  const std::size_t vocab = cores.vocab_size();
  const std::size_t r = cores.rank();
  if (n < (cores.is_collapsed() ? 1u : 2u)) throw ShapeError("materialize_A: sequence length too short");
  require_under_cap(capped_power(vocab, n, entry_cap), entry_cap, "materialize_A");
  // Largest intermediate is |V|^(n-1) x R.
  const std::size_t inter = capped_power(vocab, n - 1, entry_cap);
  require_under_cap(inter > entry_cap / r ? entry_cap + 1 : inter * r, entry_cap, "materialize_A intermediate");

  // acc has modes (w_1 .. w_k, rank).
  Tensor acc;
  std::size_t built = 0;
  if (cores.is_collapsed()) {
    if (n == 1) return contract_mode(reshape(cores.g_first(), {r}), cores.g_out(), 0, 1);
    acc = contract_mode(reshape(cores.g_first(), {r}), cores.g_mid(), 0, 0);
  } else {
    acc = cores.g_first();
  }
  built = 1;
  while (built + 1 < n) {
    acc = contract_mode(acc, cores.g_mid(), acc.order() - 1, 0);
    ++built;
  }
  return contract_mode(acc, cores.g_out(), acc.order() - 1, 1);
}

double score_bruteforce(const TTCores& cores, const SequenceEncoding& seq, std::size_t entry_cap) {
  require_min_length(cores, seq);
  const Tensor a = materialize_A(cores, seq.length(), entry_cap);
  const Tensor phi = phi_of_sequence(seq, cores.vocab_size(), entry_cap);
  return inner_product(a, phi);
}

double score_recursive(const TTCores& cores, const SequenceEncoding& seq) {
  require_min_length(cores, seq);
  const std::size_t n = seq.length();
  const Tensor h = recursive_state(cores, seq, n - 1);
  const Tensor out_row = contract_mode(Tensor::one_hot(cores.vocab_size(), seq.indices[n - 1]), cores.g_out(), 0, 0);
  return inner_product(out_row, h);
}

Tensor conditional_bruteforce(const TTCores& cores, const SequenceEncoding& prefix, std::size_t entry_cap) {
  prefix.validate(cores.vocab_size());
  const std::size_t t = prefix.length() + 1;
  const Tensor a = materialize_A(cores, t, entry_cap);
  const Tensor phi = phi_of_sequence(prefix, cores.vocab_size(), entry_cap);
  return softmax(generalized_inner_product(a, phi, t - 1));
}

Tensor conditional_recursive(const TTCores& cores, const SequenceEncoding& prefix) {
  prefix.validate(cores.vocab_size());
  const Tensor h = recursive_state(cores, prefix, prefix.length());
  return softmax(matvec(cores.g_out(), h));
}

Tensor cores_from_hadamard(const Tensor& w_hx, const Tensor& w_hh) {
  if (w_hx.order() != 2 || w_hh.order() != 2 || w_hh.dim(0) != w_hh.dim(1) || w_hx.dim(0) != w_hh.dim(0)) {
    throw ShapeError("cores_from_hadamard: expected R x |V| and R x R, got " + shape_to_string(w_hx.shape()) + " and " +
                     shape_to_string(w_hh.shape()));
  }
  const std::size_t r = w_hx.dim(0);
  const std::size_t v = w_hx.dim(1);
  Tensor g({r, v, r});
  for (std::size_t b = 0; b < r; ++b) {
    for (std::size_t w = 0; w < v; ++w) {
      for (std::size_t a = 0; a < r; ++a) g[(b * v + w) * r + a] = w_hx[a * v + w] * w_hh[a * r + b];
    }
  }
  return g;
}

Tensor core_from_secondorder(const Tensor& t3) {
  if (t3.order() != 3 || t3.dim(0) != t3.dim(2)) {
    throw ShapeError("core_from_secondorder: expected H x |V| x H, got " + shape_to_string(t3.shape()));
  }
  const std::size_t axes[3] = {2, 1, 0};
  return permute(t3, axes);
}

Tensor secondorder_from_core(const Tensor& g_mid) {
  if (g_mid.order() != 3 || g_mid.dim(0) != g_mid.dim(2)) {
    throw ShapeError("secondorder_from_core: expected R x |V| x R, got " + shape_to_string(g_mid.shape()));
  }
  const std::size_t axes[3] = {2, 1, 0};
  return permute(g_mid, axes);
}

}  // namespace ttlm
