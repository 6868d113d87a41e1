#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "oracles.hpp"
#include "ttlm/cells.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/tt_oracle.hpp"

using namespace ttlm;

namespace {

CellParams make_cell(CellTag tag, Activation act, std::size_t v, std::size_t h, std::size_t e, std::uint64_t seed) {
  CellParams p = init_params({tag, act}, {v, h, is_tt_family(tag) ? h * h : e}, seed);
  // Non-zero bias so its gradient is exercised.
  if (p.bias) {
    std::mt19937_64 rng(seed + 1);
    *p.bias = oracle::random_tensor({h}, rng, 0.3);
  }
  return p;
}

HiddenState random_state(std::size_t h, std::mt19937_64& rng) { return {oracle::random_tensor({h}, rng)}; }

double probe(const CellParams& p, std::size_t word, const HiddenState& h, const Tensor& u) {
  return inner_product(step(p, word, h).h, u);
}

// Central-difference check of <u, step(h)> against backward_step, over every
// parameter entry and every h_prev entry.
double fd_max_rel(const CellParams& p, std::size_t word, const HiddenState& h, const Tensor& u) {
  const StepGradients g = backward_step(p, word, h, u);
  const double eps = 1e-5, floor = 1e-6;
  double worst = 0.0;
  auto rel = [&](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}); };

  CellParams live = p;
  std::vector<Tensor*> tensors;
  live.for_each([&](std::string_view, Tensor& t) { tensors.push_back(&t); });
  std::vector<const Tensor*> grads;
  g.grads.for_each([&](std::string_view, const Tensor& t) { grads.push_back(&t); });
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Tensor& t = *tensors[k];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + eps;
      const double up = probe(live, word, h, u);
      t[i] = saved - eps;
      const double down = probe(live, word, h, u);
      t[i] = saved;
      worst = std::max(worst, rel((*grads[k])[i], (up - down) / (2 * eps)));
    }
  }
  HiddenState hh = h;
  for (std::size_t i = 0; i < hh.h.size(); ++i) {
    const double saved = hh.h[i];
    hh.h[i] = saved + eps;
    const double up = probe(p, word, hh, u);
    hh.h[i] = saved - eps;
    const double down = probe(p, word, hh, u);
    hh.h[i] = saved;
    worst = std::max(worst, rel(g.grad_h_prev[i], (up - down) / (2 * eps)));
  }
  return worst;
}

}  // namespace

TEST_SUITE("cells") {

TEST_CASE("names and default activations") {
  for (CellTag tag : kAllCellTags) CHECK(parse_cell_tag(to_string(tag)) == tag);
  CHECK_THROWS_AS(parse_cell_tag("lstm"), ConfigError);
  CHECK(parse_activation("tanh") == Activation::Tanh);
  CHECK(parse_activation("none") == Activation::None);
  CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
  CHECK(CellKind::with_default_activation(CellTag::Ttlm).activation == Activation::None);
  CHECK(CellKind::with_default_activation(CellTag::Rac).activation == Activation::None);
  CHECK(CellKind::with_default_activation(CellTag::TtlmTiny).activation == Activation::None);
  CHECK(CellKind::with_default_activation(CellTag::MiRnn).activation == Activation::Tanh);
  CHECK(CellKind::with_default_activation(CellTag::SecondOrder).activation == Activation::Tanh);
  CHECK(CellKind::with_default_activation(CellTag::VanillaRnn).activation == Activation::Tanh);
}

TEST_CASE("parameter shapes are enforced") {
  CellParams p = make_cell(CellTag::TtlmLarge, Activation::None, 5, 2, 4, 1);
  CHECK_NOTHROW(p.validate());
  CHECK(p.w_eh->shape() == Shape{4, 4});
  CHECK(p.w_xe->shape() == Shape{5, 4});
  p.w_eh = Tensor({4, 3});
  CHECK_THROWS_AS(p.validate(), ShapeError);

  CellParams q = make_cell(CellTag::Rac, Activation::None, 5, 3, 4, 1);
  q.t3 = Tensor({3, 3, 3});
  CHECK_THROWS_AS(q.validate(), ShapeError);

  CHECK_THROWS_AS(init_params({CellTag::TtlmTiny, Activation::None}, {5, 2, 3}, 1), ShapeError);
  CHECK_THROWS_AS(init_params({CellTag::Rac, Activation::None}, {0, 2, 3}, 1), ShapeError);

  const CellParams s = make_cell(CellTag::SecondOrder, Activation::Tanh, 5, 3, 4, 1);
  CHECK(s.w_xe->shape() == Shape{4, 5});
  CHECK(s.projection->shape() == Shape{4, 3});
  CHECK(s.t3->shape() == Shape{3, 3, 3});
  CHECK(s.bias->shape() == Shape{3});
}

TEST_CASE("step rejects bad words and states") {
  const CellParams p = make_cell(CellTag::TtlmTiny, Activation::None, 5, 2, 4, 1);
  CHECK_THROWS_AS(step(p, 5, {Tensor({2})}), IndexError);
  CHECK_THROWS_AS(step(p, 0, {Tensor({3})}), ShapeError);
}

TEST_CASE("ttlm with an identity slice passes the state through") {
  CellParams p = init_params({CellTag::Ttlm, Activation::None}, {3, 2, 4}, 1);
  const std::size_t word = 1;
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) p.g_mid->at({a, word, b}) = a == b ? 1.0 : 0.0;
  }
  const HiddenState h{Tensor::vector({0.25, -1.5})};
  CHECK(step(p, word, h).h == h.h);
}

TEST_CASE("rank-one rac is a product of three scalars") {
  CellParams p = init_params({CellTag::Rac, Activation::None}, {3, 1, 1}, 2);
  const double a = (*p.w_eh)[0] * p.w_xe->at({0, 2});
  const double c = (*p.w_hh)[0];
  const double h = 0.7;
  CHECK(step(p, 2, {Tensor::vector({h})}).h[0] == doctest::Approx(a * c * h).epsilon(1e-15));
  const Tensor g = cores_from_hadamard(rac_input_matrix(p), *p.w_hh);
  CHECK(std::abs(g.at({0, 2, 0}) * h - a * c * h) <= 1e-16);
}

TEST_CASE("ttlm-tiny matches the explicit fourth-order diagonal") {
  std::mt19937_64 rng(3);
  for (std::size_t r = 1; r <= 3; ++r) {
    const CellParams p = make_cell(CellTag::TtlmTiny, Activation::None, 5, r, 0, 10 + r);
    for (std::size_t w = 0; w < 5; ++w) {
      const HiddenState h = random_state(r, rng);
      const auto ref = oracle::tiny_step_explicit(*p.w_xe, *p.w_hh, w, h.h.values());
      const Tensor got = step(p, w, h).h;
      for (std::size_t i = 0; i < r; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-13);
    }
  }
}

TEST_CASE("ttlm-large matches the explicit fourth-order diagonal") {
  std::mt19937_64 rng(4);
  for (std::size_t r = 1; r <= 3; ++r) {
    const CellParams p = make_cell(CellTag::TtlmLarge, Activation::None, 5, r, 0, 20 + r);
    for (std::size_t w = 0; w < 5; ++w) {
      const HiddenState h = random_state(r, rng);
      const auto ref = oracle::large_step_explicit(*p.w_xe, *p.w_eh, *p.w_hh, w, h.h.values());
      const Tensor got = step(p, w, h).h;
      for (std::size_t i = 0; i < r; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-13);
    }
  }
}

TEST_CASE("baseline cells against hand-written updates") {
  std::mt19937_64 rng(5);
  const std::size_t v = 5, h = 3, e = 4;
  for (CellTag tag : {CellTag::VanillaRnn, CellTag::Rac, CellTag::MiRnn}) {
    for (Activation act : {Activation::None, Activation::Tanh}) {
      const CellParams p = make_cell(tag, act, v, h, e, 30);
      const HiddenState s = random_state(h, rng);
      const std::size_t w = 3;
      const Tensor got = step(p, w, s).h;
      for (std::size_t i = 0; i < h; ++i) {
        double in = 0.0, mix = 0.0;
        for (std::size_t k = 0; k < e; ++k) in += p.w_eh->at({k, i}) * p.w_xe->at({k, w});
        for (std::size_t k = 0; k < h; ++k) mix += p.w_hh->at({i, k}) * s.h[k];
        double z = tag == CellTag::VanillaRnn ? in + mix : in * mix;
        if (act == Activation::Tanh) z = std::tanh(z);
        CHECK(std::abs(got[i] - z) <= 1e-14);
      }
    }
  }
  const CellParams p = make_cell(CellTag::SecondOrder, Activation::Tanh, v, h, e, 31);
  const HiddenState s = random_state(h, rng);
  const Tensor got = step(p, 1, s).h;
  for (std::size_t i = 0; i < h; ++i) {
    double z = (*p.bias)[i];
    for (std::size_t j = 0; j < h; ++j) {
      double ej = 0.0;
      for (std::size_t k = 0; k < e; ++k) ej += p.projection->at({k, j}) * p.w_xe->at({k, 1});
      for (std::size_t k = 0; k < h; ++k) z += ej * p.t3->at({i, j, k}) * s.h[k];
    }
    CHECK(std::abs(got[i] - std::tanh(z)) <= 1e-14);
  }
}

TEST_CASE("second-order with a literal one-hot embedding equals ttlm") {
  // E = H = |V|, identity embedding and projection, zero bias: the embedding
  // is the one-hot itself and the cell reduces to the bilinear tensor T.
  const std::size_t n = 3;
  std::mt19937_64 rng(6);
  for (Activation act : {Activation::None, Activation::Tanh}) {
    CellParams so = init_params({CellTag::SecondOrder, act}, {n, n, n}, 40);
    *so.w_xe = Tensor::identity(n);
    *so.projection = Tensor::identity(n);
    CellParams tt = init_params({CellTag::Ttlm, act}, {n, n, n * n}, 41);
    *tt.g_mid = core_from_secondorder(*so.t3);
    for (std::size_t w = 0; w < n; ++w) {
      const HiddenState h = random_state(n, rng);
      CHECK(max_abs_diff(step(so, w, h).h, step(tt, w, h).h) <= 1e-14);
    }
  }
}

TEST_CASE("second-order with a factored embedding equals ttlm") {
  std::mt19937_64 rng(7);
  for (Activation act : {Activation::None, Activation::Tanh}) {
    CellParams so = make_cell(CellTag::SecondOrder, act, 5, 3, 4, 42);
    std::fill(so.bias->data().begin(), so.bias->data().end(), 0.0);
    CellParams tt = init_params({CellTag::Ttlm, act}, {5, 3, 9}, 43);
    *tt.g_mid = core_from_secondorder(secondorder_input_tensor(so));
    for (std::size_t w = 0; w < 5; ++w) {
      const HiddenState h = random_state(3, rng);
      CHECK(max_abs_diff(step(so, w, h).h, step(tt, w, h).h) <= 1e-14);
    }
  }
}

TEST_CASE("rac and mi-rnn equal ttlm with hadamard cores") {
  std::mt19937_64 rng(8);
  for (CellTag tag : {CellTag::Rac, CellTag::MiRnn}) {
    const Activation act = CellKind::with_default_activation(tag).activation;
    const CellParams p = make_cell(tag, act, 5, 3, 4, 44);
    CellParams tt = init_params({CellTag::Ttlm, act}, {5, 3, 9}, 45);
    *tt.g_mid = cores_from_hadamard(rac_input_matrix(p), *p.w_hh);
    for (std::size_t w = 0; w < 5; ++w) {
      const HiddenState h = random_state(3, rng);
      CHECK(max_abs_diff(step(p, w, h).h, step(tt, w, h).h) <= 1e-14);
    }
  }
}

TEST_CASE("linear ttlm step is linear in the state") {
  std::mt19937_64 rng(9);
  for (CellTag tag : {CellTag::Ttlm, CellTag::TtlmTiny, CellTag::TtlmLarge, CellTag::Rac}) {
    const CellParams p = make_cell(tag, Activation::None, 5, 3, 4, 46);
    for (int trial = 0; trial < 10; ++trial) {
      const HiddenState a = random_state(3, rng), b = random_state(3, rng);
      const Tensor lhs = step(p, trial % 5, {add(a.h, b.h)}).h;
      const Tensor rhs = add(step(p, trial % 5, a).h, step(p, trial % 5, b).h);
      CHECK(max_abs_diff(lhs, rhs) <= 1e-13);
    }
  }
}

TEST_CASE("non-finite states are reported") {
  CellParams p = make_cell(CellTag::Ttlm, Activation::None, 3, 2, 4, 47);
  p.g_mid->at({0, 1, 0}) = 1e308;
  try {
    step(p, 1, {Tensor::vector({1e308, 0.0})});
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("ttlm") != std::string::npos);
  }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  std::mt19937_64 rng(10);
  for (CellTag tag : kAllCellTags) {
    const CellParams p = make_cell(tag, CellKind::with_default_activation(tag).activation, 5, 3, 4, 48);
    const StepGradients g = backward_step(p, 2, random_state(3, rng), Tensor({3}));
    g.grads.for_each([](std::string_view, const Tensor& t) {
      for (double x : t.data()) CHECK(x == 0.0);
    });
    for (double x : g.grad_h_prev.data()) CHECK(x == 0.0);
  }
}

TEST_CASE("ttlm core gradient is an outer product on one slice") {
  std::mt19937_64 rng(11);
  const CellParams p = make_cell(CellTag::Ttlm, Activation::None, 4, 3, 9, 49);
  const HiddenState h = random_state(3, rng);
  const Tensor u = oracle::random_tensor({3}, rng);
  const std::size_t word = 2;
  const StepGradients g = backward_step(p, word, h, u);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t w = 0; w < 4; ++w) {
      for (std::size_t b = 0; b < 3; ++b) {
        const double expected = w == word ? u[b] * h.h[a] : 0.0;
        CHECK(g.grads.g_mid->at({a, w, b}) == expected);
      }
    }
  }
}

TEST_CASE("backward requires a forward cache") {
  const CellParams p = make_cell(CellTag::Rac, Activation::None, 5, 3, 4, 50);
  CellParams grads = p.zeros_like();
  CHECK_THROWS_AS(backward_step(p, StepCache{}, Tensor({3}), grads), Error);
}

TEST_CASE("gradients accumulate across calls") {
  std::mt19937_64 rng(12);
  const CellParams p = make_cell(CellTag::TtlmTiny, Activation::None, 5, 2, 4, 51);
  const HiddenState h = random_state(2, rng);
  const Tensor u = oracle::random_tensor({2}, rng);
  StepCache cache;
  step(p, 1, h, &cache);
  CellParams once = p.zeros_like(), twice = p.zeros_like();
  backward_step(p, cache, u, once);
  backward_step(p, cache, u, twice);
  backward_step(p, cache, u, twice);
  CHECK(max_abs_diff(*twice.w_hh, scale(*once.w_hh, 2.0)) <= 1e-15);
}

TEST_CASE("finite differences for every cell and activation") {
  std::mt19937_64 rng(13);
  for (CellTag tag : kAllCellTags) {
    for (Activation act : {Activation::None, Activation::Tanh}) {
      const CellParams p = make_cell(tag, act, 5, 3, 4, 52);
      for (std::size_t w : {0u, 4u}) {
        const HiddenState h = random_state(3, rng);
        const Tensor u = oracle::random_tensor({3}, rng);
        INFO(to_string(tag), " ", to_string(act), " word ", w);
        CHECK(fd_max_rel(p, w, h, u) <= 1e-4);
      }
    }
  }
}

TEST_CASE("initialization ranges") {
  for (CellTag tag : kAllCellTags) {
    const std::size_t h = 7;
    const CellParams p = init_params(CellKind::with_default_activation(tag), {50, h, is_tt_family(tag) ? h * h : 10}, 3);
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    p.for_each([&](std::string_view name, const Tensor& t) {
      for (double x : t.data()) {
        if (name == "w_xe") CHECK(std::abs(x) <= 0.1);
        else if (name == "bias") CHECK(x == 0.0);
        else CHECK(std::abs(x) <= bound);
      }
    });
  }
}

TEST_CASE("initialization is deterministic per seed") {
  for (CellTag tag : kAllCellTags) {
    const CellKind kind = CellKind::with_default_activation(tag);
    const CellDims dims{6, 3, is_tt_family(tag) ? 9u : 4u};
    const CellParams a = init_params(kind, dims, 99), b = init_params(kind, dims, 99), c = init_params(kind, dims, 100);
    std::vector<const Tensor*> ta, tb, tc;
    a.for_each([&](std::string_view, const Tensor& t) { ta.push_back(&t); });
    b.for_each([&](std::string_view, const Tensor& t) { tb.push_back(&t); });
    c.for_each([&](std::string_view, const Tensor& t) { tc.push_back(&t); });
    bool differs = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      CHECK(*ta[i] == *tb[i]);
      differs = differs || !(*ta[i] == *tc[i]);
    }
    CHECK(differs);
  }
}

TEST_CASE("forward and backward are bitwise repeatable") {
  std::mt19937_64 rng(14);
  for (CellTag tag : kAllCellTags) {
    const CellParams p = make_cell(tag, CellKind::with_default_activation(tag).activation, 5, 3, 4, 53);
    const HiddenState h = random_state(3, rng);
    const Tensor u = oracle::random_tensor({3}, rng);
    CHECK(step(p, 3, h).h == step(p, 3, h).h);
    const StepGradients g1 = backward_step(p, 3, h, u), g2 = backward_step(p, 3, h, u);
    CHECK(g1.grad_h_prev == g2.grad_h_prev);
  }
}

}  // TEST_SUITE
