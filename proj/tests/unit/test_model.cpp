#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "oracles.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/model.hpp"
#include "ttlm/tt_oracle.hpp"

using namespace ttlm;

namespace {

ModelConfig config_for(CellTag tag, Activation act, std::size_t v, std::size_t h, std::size_t e, bool tied,
                       std::uint64_t seed = 5) {
  ModelConfig c;
  c.kind = {tag, act};
  c.vocab = v;
  c.hidden = h;
  c.embed = is_tt_family(tag) ? 0 : e;
  c.tie_weights = tied;
  c.seed = seed;
  return c;
}

LanguageModel with_zero_head(ModelConfig c) {
  LanguageModel m = LanguageModel::create(c);
  m.params().for_each([](std::string_view name, Tensor& t) {
    if (name == "head_p" || name == "g_out") std::fill(t.data().begin(), t.data().end(), 0.0);
  });
  return m;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config resolution") {
  ModelConfig c = config_for(CellTag::TtlmTiny, Activation::None, 10, 3, 0, true);
  CHECK(c.resolved().embed == 9);
  c.embed = 8;
  CHECK_THROWS_AS(c.resolved(), ConfigError);
  ModelConfig b = config_for(CellTag::Rac, Activation::None, 10, 3, 0, true);
  CHECK(b.resolved().embed == 9);
  b.embed = 5;
  CHECK(b.resolved().embed == 5);
  b.vocab = 0;
  CHECK_THROWS_AS(b.resolved(), ConfigError);
}

TEST_CASE("initial hidden state") {
  ModelConfig c = config_for(CellTag::Ttlm, Activation::None, 4, 2, 0, true);
  LanguageModel m = LanguageModel::create(c);
  *m.params().g_init = Tensor::vector({0.1, 0.2});
  CHECK(m.init_hidden().h == Tensor::vector({0.1, 0.2}));

  c.zero_init_hidden = true;
  const LanguageModel z = LanguageModel::create(c);
  CHECK_FALSE(z.params().g_init.has_value());
  CHECK(z.init_hidden().h == Tensor({2}));

  for (CellTag tag : kAllCellTags) {
    const LanguageModel any = LanguageModel::create(config_for(tag, CellKind::with_default_activation(tag).activation,
                                                               6, 3, 4, true));
    const double bound = 1.0 / std::sqrt(3.0);
    const HiddenState h0 = any.init_hidden();
    for (double x : h0.h.data()) CHECK(std::abs(x) <= bound);
  }
}

TEST_CASE("zero state with a zero head predicts uniformly") {
  for (CellTag tag : kAllCellTags) {
    const LanguageModel m = with_zero_head(config_for(tag, Activation::None, 4, 2, 3, true));
    const Tensor y = m.predict({Tensor({2})});
    for (double p : y.data()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("uniform predictions give 3 ln 4 over three words") {
  const LanguageModel m = with_zero_head(config_for(CellTag::TtlmTiny, Activation::None, 4, 2, 0, true));
  const SequenceNll nll = m.sequence_nll({{0, 3, 1}});
  CHECK(std::abs(nll.total - 3.0 * std::log(4.0)) <= 1e-12);
  REQUIRE(nll.per_step.size() == 3);
  for (double s : nll.per_step) CHECK(std::abs(s - std::log(4.0)) <= 1e-12);
  CHECK(std::abs(std::exp(nll.total / 3.0) - 4.0) <= 1e-12);
}

TEST_CASE("predictions are probability vectors") {
  std::mt19937_64 rng(1);
  for (CellTag tag : kAllCellTags) {
    for (Activation act : {Activation::None, Activation::Tanh}) {
      const LanguageModel m = LanguageModel::create(config_for(tag, act, 7, 3, 4, true, 11));
      HiddenState h = m.init_hidden();
      for (int t = 0; t < 12; ++t) {
        const Tensor y = m.predict(h);
        double s = 0.0;
        for (double p : y.data()) {
          CHECK(p >= 0.0);
          s += p;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
        h = m.advance(h, rng() % 7);
      }
    }
  }
}

TEST_CASE("non-finite states are rejected by the head") {
  const LanguageModel m = LanguageModel::create(config_for(CellTag::Rac, Activation::None, 4, 2, 3, true));
  CHECK_THROWS_AS(m.predict({Tensor::vector({NAN, 0.0})}), NumericError);
  CHECK_THROWS_AS(m.predict({Tensor({3})}), ShapeError);
}

TEST_CASE("pure ttlm head matches the tensor-train conditional") {
  std::mt19937_64 rng(2);
  for (std::size_t v = 2; v <= 4; ++v) {
    for (std::size_t r = 1; r <= 3; ++r) {
      LanguageModel m = LanguageModel::create(config_for(CellTag::Ttlm, Activation::None, v, r, 0, true, 20 + v * r));
      // Larger cores than the default init so the check is not trivially flat.
      m.params().for_each([&](std::string_view, Tensor& t) { t = oracle::random_tensor(t.shape(), rng); });
      const TTCores cores = m.to_tt_cores();
      for (std::size_t t = 1; t <= 4; ++t) {
        const auto prefix = oracle::random_sequence(t, v, rng);
        HiddenState h = m.init_hidden();
        for (std::size_t w : prefix.indices) h = m.advance(h, w);
        const Tensor y = m.predict(h);
        // After t words the head gives the conditional of word t + 1.
        const Tensor ref = conditional_bruteforce(cores, {prefix.indices});
        CHECK(max_abs_diff(y, ref) <= 1e-10);
      }
    }
  }
}

TEST_CASE("pure ttlm with output core equal to first core") {
  // Choosing g_out as the expanded first core makes the tensor-train tied;
  // the head must still agree with the oracle on every prefix.
  std::mt19937_64 rng(3);
  const std::size_t v = 3, r = 2;
  LanguageModel m = LanguageModel::create(config_for(CellTag::Ttlm, Activation::None, v, r, 0, true, 31));
  m.params().for_each([&](std::string_view, Tensor& t) { t = oracle::random_tensor(t.shape(), rng); });
  const TTCores expanded = m.to_tt_cores().expanded();
  *m.params().g_out = expanded.g_first();
  const TTCores tied = TTCores::tied(expanded.g_first(), expanded.g_mid());
  REQUIRE(tied.is_tied());
  for (std::size_t n = 1; n <= 4; ++n) {
    for (int k = 0; k < 5; ++k) {
      const auto prefix = oracle::random_sequence(n, v, rng);
      HiddenState h = m.init_hidden();
      for (std::size_t w : prefix.indices) h = m.advance(h, w);
      CHECK(max_abs_diff(m.predict(h), conditional_bruteforce(tied, prefix)) <= 1e-10);
      CHECK(max_abs_diff(m.predict(h), conditional_recursive(tied, prefix)) <= 1e-10);
    }
  }
}

TEST_CASE("chain rule total equals step-by-step conditionals") {
  std::mt19937_64 rng(4);
  for (CellTag tag : kAllCellTags) {
    const LanguageModel m = LanguageModel::create(
        config_for(tag, CellKind::with_default_activation(tag).activation, 6, 3, 4, true, 40));
    const auto seq = oracle::random_sequence(7, 6, rng);
    const SequenceNll nll = m.sequence_nll(seq);
    HiddenState h = m.init_hidden();
    double total = 0.0;
    for (std::size_t t = 0; t < seq.length(); ++t) {
      const double step_nll = -std::log(m.predict(h)[seq.indices[t]]);
      CHECK(nll.per_step[t] == step_nll);
      total += step_nll;
      h = m.advance(h, seq.indices[t]);
    }
    CHECK(nll.total == total);
  }
  const LanguageModel m = LanguageModel::create(config_for(CellTag::Rac, Activation::None, 6, 3, 4, true));
  CHECK_THROWS_AS(m.sequence_nll({}), ShapeError);
  CHECK_THROWS_AS(m.sequence_nll({{0, 6}}), IndexError);
}

TEST_CASE("segment and sequence losses agree") {
  std::mt19937_64 rng(5);
  const LanguageModel m = LanguageModel::create(config_for(CellTag::TtlmLarge, Activation::None, 6, 2, 0, true, 41));
  const auto seq = oracle::random_sequence(9, 6, rng);
  // A full sequence is the first prediction from h0 plus a segment over the rest.
  const double first = -std::log(m.predict(m.init_hidden())[seq.indices[0]]);
  HiddenState h = m.init_hidden();
  std::vector<std::size_t> in(seq.indices.begin(), seq.indices.end() - 1);
  std::vector<std::size_t> tg(seq.indices.begin() + 1, seq.indices.end());
  const double seg = m.segment_nll(in, tg, h);
  CHECK(std::abs(first + seg - m.sequence_nll(seq).total) <= 1e-12);
  // The state is carried forward in place.
  HiddenState ref = m.init_hidden();
  for (std::size_t w : in) ref = m.advance(ref, w);
  CHECK(h.h == ref.h);
}

TEST_CASE("finite differences over every model parameter") {
  std::mt19937_64 rng(6);
  for (CellTag tag : kAllCellTags) {
    for (Activation act : {Activation::None, Activation::Tanh}) {
      for (bool tied : {true, false}) {
        if (tag == CellTag::Ttlm && !tied) continue;
        const LanguageModel m = LanguageModel::create(config_for(tag, act, 5, 3, 4, tied, 50));
        const auto seq = oracle::random_sequence(4, 5, rng);
        ModelParams grads = m.params().zeros_like();
        m.sequence_nll(seq, grads);
        const ModelConfig cfg = m.config();
        const auto res = oracle::finite_difference_check(
            m.params(), grads,
            [&](const ModelParams& p) { return LanguageModel(cfg, p).sequence_nll(seq).total; }, 1e-5, 1e-6);
        INFO(to_string(tag), " ", to_string(act), tied ? " tied" : " untied", " worst ", res.worst_param);
        CHECK(res.max_rel <= 1e-4);
      }
    }
  }
}

TEST_CASE("gradient reaches the initial state on a two-word sequence") {
  const LanguageModel m = LanguageModel::create(config_for(CellTag::TtlmTiny, Activation::None, 5, 2, 0, true, 51));
  const SequenceEncoding seq{{3, 1}};
  ModelParams grads = m.params().zeros_like();
  m.sequence_nll(seq, grads);
  double mag = 0.0;
  for (double x : grads.g_init->data()) mag += std::abs(x);
  CHECK(mag > 0.0);
  const ModelConfig cfg = m.config();
  const auto res = oracle::finite_difference_check(
      m.params(), grads, [&](const ModelParams& p) { return LanguageModel(cfg, p).sequence_nll(seq).total; }, 1e-5,
      1e-6);
  CHECK(res.max_rel <= 1e-4);
}

TEST_CASE("tied embeddings share one buffer") {
  LanguageModel m = LanguageModel::create(config_for(CellTag::TtlmTiny, Activation::None, 5, 2, 0, true, 52));
  CHECK_FALSE(m.params().head_v.has_value());
  CHECK(&m.output_embedding() == &*m.params().cell.w_xe);
  const HiddenState h{Tensor::vector({0.3, -0.4})};
  const Tensor before = m.logits(h);
  (*m.params().cell.w_xe)[0] += 0.5;  // row 0 is both the embedding and the output vector of word 0
  const Tensor after = m.logits(h);
  CHECK(after[0] != before[0]);
  for (std::size_t w = 1; w < 5; ++w) CHECK(after[w] == before[w]);
}

TEST_CASE("tying removes one vocabulary-sized embedding from the count") {
  for (CellTag tag : kAllCellTags) {
    if (tag == CellTag::Ttlm) continue;
    const ModelConfig t = config_for(tag, CellKind::with_default_activation(tag).activation, 11, 3, 4, true);
    ModelConfig u = t;
    u.tie_weights = false;
    const auto tied = LanguageModel::create(t).parameter_count();
    const auto untied = LanguageModel::create(u).parameter_count();
    CHECK(tied == untied - 11 * t.resolved().embed);
  }
}

TEST_CASE("parameter counts at the reported scale") {
  // R = H = 20, E = 400, |V| = 10000.
  auto count = [](CellTag tag) {
    ModelConfig c = config_for(tag, CellKind::with_default_activation(tag).activation, 10000, 20, 400, true);
    return static_cast<double>(init_model_params(c).count());
  };
  CHECK(std::abs(count(CellTag::VanillaRnn) / 4.0e6 - 1.0) <= 0.05);
  CHECK(std::abs(count(CellTag::TtlmTiny) / 4.0e6 - 1.0) <= 0.05);
  CHECK(std::abs(count(CellTag::TtlmLarge) / 4.2e6 - 1.0) <= 0.05);
  CHECK(std::abs(count(CellTag::Ttlm) / 4.2e6 - 1.0) <= 0.05);
}

TEST_CASE("exact parameter layout") {
  const ModelParams p = init_model_params(config_for(CellTag::TtlmTiny, Activation::None, 7, 3, 0, false));
  CHECK(p.cell.w_xe->shape() == Shape{7, 9});
  CHECK(p.head_p->shape() == Shape{9, 3});
  CHECK(p.head_v->shape() == Shape{7, 9});
  CHECK(p.g_init->shape() == Shape{3});
  CHECK(p.count() == 63 + 9 + 27 + 63 + 3);
  const ModelParams b = init_model_params(config_for(CellTag::Rac, Activation::None, 7, 3, 4, true));
  CHECK(b.head_p->shape() == Shape{3, 4});
  for (double x : b.head_p->data()) CHECK(std::abs(x) <= 1.0 / std::sqrt(3.0));
  const ModelParams t = init_model_params(config_for(CellTag::Ttlm, Activation::None, 7, 3, 0, true));
  CHECK(t.g_out->shape() == Shape{7, 3});
  CHECK_FALSE(t.head_p.has_value());
}

TEST_CASE("constructor rejects inconsistent parameters") {
  const ModelConfig c = config_for(CellTag::TtlmTiny, Activation::None, 5, 2, 0, true);
  ModelParams p = init_model_params(c);
  p.head_v = Tensor({5, 4});
  CHECK_THROWS_AS(LanguageModel(c, p), ShapeError);
  ModelParams q = init_model_params(c);
  q.head_p = Tensor({4, 3});
  CHECK_THROWS_AS(LanguageModel(c, q), ShapeError);
}

TEST_CASE("tensor-train cores only exist for the linear pure model") {
  CHECK_THROWS_AS(LanguageModel::create(config_for(CellTag::TtlmTiny, Activation::None, 5, 2, 0, true)).to_tt_cores(),
                  ConfigError);
  CHECK_THROWS_AS(LanguageModel::create(config_for(CellTag::Ttlm, Activation::Tanh, 5, 2, 0, true)).to_tt_cores(),
                  ConfigError);
}

TEST_CASE("axpy and global norm") {
  const ModelParams p = init_model_params(config_for(CellTag::Rac, Activation::None, 5, 2, 3, true));
  ModelParams q = p.zeros_like();
  CHECK(global_norm(q) == 0.0);
  axpy(q, p, 2.0);
  CHECK(std::abs(global_norm(q) - 2.0 * global_norm(p)) <= 1e-12);
  ModelParams other = init_model_params(config_for(CellTag::TtlmTiny, Activation::None, 5, 2, 0, true));
  CHECK_THROWS_AS(axpy(other, p, 1.0), ShapeError);
}

}  // TEST_SUITE
