#include "ttlm/checks.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

constexpr double kDenseTol = 1e-12;
constexpr double kRecursiveTol = 1e-10;
constexpr double kConditionalTol = 1e-10;
constexpr double kConstructionTol = 1e-14;
constexpr double kGradTol = 1e-4;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double bound = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

SequenceEncoding random_sequence(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  SequenceEncoding s;
  for (std::size_t i = 0; i < n; ++i) s.indices.push_back(rng() % vocab);
  return s;
}

struct Shape3 {
  std::size_t vocab, length, rank;
};

std::vector<Shape3> instance_shapes(CheckScale scale) {
  const std::size_t max_v = scale == CheckScale::Large ? 6 : 4;
  const std::size_t max_n = scale == CheckScale::Large ? 6 : 5;
  std::vector<Shape3> out;
  for (std::size_t v = 2; v <= max_v; ++v) {
    for (std::size_t n = 2; n <= max_n; ++n) {
      for (std::size_t r = 1; r <= 3; ++r) out.push_back({v, n, r});
    }
  }
  return out;
}

// Runs body over every seeded instance; body returns the instance residual.
SuiteResult run_suite(const char* name, double tol, const std::function<void(SuiteResult&)>& body) {
  SuiteResult r;
  r.name = name;
  r.tolerance = tol;
  try {
    body(r);
    r.passed = r.max_residual <= tol && r.cases > 0;
  } catch (const std::exception& e) {
    r.error = e.what();
    r.passed = false;
  }
  return r;
}

void note(SuiteResult& r, double residual) {
  ++r.cases;
  if (!(residual <= r.max_residual)) r.max_residual = std::isnan(residual) ? INFINITY : residual;
}

double max_abs(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

CellParams ttlm_cell(const Tensor& g_mid, Activation act) {
  CellParams p;
  p.kind = {CellTag::Ttlm, act};
  const std::size_t r = g_mid.dim(0);
  p.dims = {g_mid.dim(1), r, r * r};
  p.g_mid = g_mid;
  return p;
}

}  // namespace

double gradient_check_max_rel_error(const LanguageModel& model, const SequenceEncoding& seq, double h, double floor) {
  ModelParams grads = model.params().zeros_like();
  model.sequence_nll(seq, grads);
  std::vector<const Tensor*> analytic;
  grads.for_each([&](std::string_view, const Tensor& t) { analytic.push_back(&t); });

  LanguageModel probe = model;
  std::vector<Tensor*> live;
  probe.params().for_each([&](std::string_view, Tensor& t) { live.push_back(&t); });

  double worst = 0.0;
  for (std::size_t p = 0; p < live.size(); ++p) {
    Tensor& t = *live[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = probe.sequence_nll(seq).total;
      t[i] = saved - h;
      const double down = probe.sequence_nll(seq).total;
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = (*analytic[p])[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::vector<SuiteResult> run_checks(const CheckOptions& options) {
  const auto shapes = instance_shapes(options.scale);
  std::vector<SuiteResult> out;

  auto for_each_instance = [&](const std::function<void(const Shape3&, std::mt19937_64&)>& fn) {
    for (const Shape3& s : shapes) {
      for (std::size_t k = 0; k < options.seeds_per_shape; ++k) {
        std::mt19937_64 rng(options.seed + 1000003ULL * (s.vocab * 100 + s.length * 10 + s.rank) + k);
        fn(s, rng);
      }
    }
  };

  out.push_back(run_suite(kSuiteDenseVsElement, kDenseTol, [&](SuiteResult& r) {
    for_each_instance([&](const Shape3& s, std::mt19937_64& rng) {
      const TTCores cores = TTCores::untied(random_tensor({s.vocab, s.rank}, rng), random_tensor({s.rank, s.vocab, s.rank}, rng),
                                            random_tensor({s.vocab, s.rank}, rng));
      const SequenceEncoding seq = random_sequence(s.length, s.vocab, rng);
      note(r, std::abs(score_bruteforce(cores, seq, options.entry_cap) - tt_element(cores, seq)));
    });
  }));

  out.push_back(run_suite(kSuiteElementVsRecursive, kRecursiveTol, [&](SuiteResult& r) {
    for_each_instance([&](const Shape3& s, std::mt19937_64& rng) {
      const TTCores cores = TTCores::untied(random_tensor({s.vocab, s.rank}, rng), random_tensor({s.rank, s.vocab, s.rank}, rng),
                                            random_tensor({s.vocab, s.rank}, rng));
      const SequenceEncoding seq = random_sequence(s.length, s.vocab, rng);
      const double dense = score_bruteforce(cores, seq, options.entry_cap);
      const double rec = score_recursive(cores, seq);
      note(r, std::max(std::abs(dense - rec), std::abs(tt_element(cores, seq) - rec)));
    });
  }));

  out.push_back(run_suite(kSuiteConditional, kConditionalTol, [&](SuiteResult& r) {
    for_each_instance([&](const Shape3& s, std::mt19937_64& rng) {
      // The prefix is t-1 words; the collapsed first core is the model's
      // initial hidden state.
      ModelConfig cfg;
      cfg.kind = {CellTag::Ttlm, Activation::None};
      cfg.vocab = s.vocab;
      cfg.hidden = s.rank;
      cfg.seed = rng();
      LanguageModel model = LanguageModel::create(cfg);
      const TTCores cores = model.to_tt_cores();
      const SequenceEncoding prefix = random_sequence(s.length - 1, s.vocab, rng);
      const Tensor dense = conditional_bruteforce(cores, prefix, options.entry_cap);
      HiddenState h = model.init_hidden();
      for (std::size_t w : prefix.indices) h = model.advance(h, w);
      const Tensor predicted = model.predict(h);
      double sum_err = 0.0;
      for (const Tensor* y : {&dense, &predicted}) {
        double sum = 0.0;
        for (double x : y->data()) sum += x;
        sum_err = std::max(sum_err, std::abs(sum - 1.0));
      }
      if (sum_err > 1e-12) throw NumericError(fmt::format("distribution sums to 1 only within {:.3g}", sum_err));
      note(r, std::max(max_abs(dense, predicted), max_abs(dense, conditional_recursive(cores, prefix))));
    });
  }));

  constexpr std::size_t kEquivVocab = 5;
  constexpr std::size_t kEquivHidden = 3;

  out.push_back(run_suite(kSuiteSecondOrder, kConstructionTol, [&](SuiteResult& r) {
    for (std::size_t k = 0; k < options.seeds_per_shape * 4; ++k) {
      for (Activation act : {Activation::None, Activation::Tanh}) {
        std::mt19937_64 rng(options.seed + 77 * k);
        CellParams so = init_params({CellTag::SecondOrder, act}, {kEquivVocab, kEquivHidden, 4}, rng());
        const CellParams tt = ttlm_cell(core_from_secondorder(secondorder_input_tensor(so)), act);
        for (std::size_t w = 0; w < kEquivVocab; ++w) {
          const HiddenState h{random_tensor({kEquivHidden}, rng)};
          note(r, max_abs(step(so, w, h).h, step(tt, w, h).h));
        }
      }
    }
  }));

  out.push_back(run_suite(kSuiteHadamard, kConstructionTol, [&](SuiteResult& r) {
    for (std::size_t k = 0; k < options.seeds_per_shape * 4; ++k) {
      for (CellTag tag : {CellTag::Rac, CellTag::MiRnn}) {
        std::mt19937_64 rng(options.seed + 131 * k);
        const CellKind kind = CellKind::with_default_activation(tag);
        const CellParams base = init_params(kind, {kEquivVocab, kEquivHidden, 4}, rng());
        const CellParams tt = ttlm_cell(cores_from_hadamard(rac_input_matrix(base), *base.w_hh), kind.activation);
        for (std::size_t w = 0; w < kEquivVocab; ++w) {
          const HiddenState h{random_tensor({kEquivHidden}, rng)};
          note(r, max_abs(step(base, w, h).h, step(tt, w, h).h));
        }
      }
    }
  }));

  out.push_back(run_suite(kSuiteGradient, kGradTol, [&](SuiteResult& r) {
    for (CellTag tag : kAllCellTags) {
      for (Activation act : {Activation::None, Activation::Tanh}) {
        for (bool tie : {true, false}) {
          ModelConfig cfg;
          cfg.kind = {tag, act};
          cfg.vocab = kEquivVocab;
          cfg.hidden = kEquivHidden;
          cfg.embed = is_tt_family(tag) ? 0 : 4;
          cfg.tie_weights = tie;
          cfg.seed = options.seed + static_cast<std::uint64_t>(tag) * 10 + (act == Activation::Tanh ? 1 : 0);
          if (tag == CellTag::Ttlm && !tie) continue;
          const LanguageModel model = LanguageModel::create(cfg);
          std::mt19937_64 rng(cfg.seed);
          note(r, gradient_check_max_rel_error(model, random_sequence(4, kEquivVocab, rng)));
        }
      }
    }
  }));

  return out;
}

std::string format_suite_result(const SuiteResult& r) {
  std::string line = fmt::format("{} {:<40} max_residual={:.3e} tol={:.0e} cases={}", r.passed ? "PASS" : "FAIL", r.name,
                                 r.max_residual, r.tolerance, r.cases);
  if (!r.error.empty()) line += " error: " + r.error;
  return line;
}

}  // namespace ttlm
