#pragma once

// Self-contained, seeded equivalence suites: dense tensor-train scoring vs
// the recursive hidden-state form, cell equivalence constructions, and
// finite-difference gradient checks.

#include <cstdint>
#include <string>
#include <vector>

#include "ttlm/model.hpp"
#include "ttlm/tt_oracle.hpp"

namespace ttlm {

enum class CheckScale {
  Default,  // |V| <= 4, N <= 5, R <= 3
  Large,    // |V| <= 6, N <= 6, R <= 3
};

struct CheckOptions {
  CheckScale scale = CheckScale::Default;
  std::uint64_t seed = 20240601;
  std::size_t seeds_per_shape = 3;
  std::size_t entry_cap = kDefaultEntryCap;
};

struct SuiteResult {
  std::string name;
  double max_residual = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  bool passed = false;
  std::string error;  // set when the suite aborted
};

// Suite names, in run order.
inline constexpr const char* kSuiteDenseVsElement = "dense-score == tt-element";
inline constexpr const char* kSuiteElementVsRecursive = "tt-element == recursive";
inline constexpr const char* kSuiteConditional = "dense-conditional == recursive-predict";
inline constexpr const char* kSuiteSecondOrder = "second-order == ttlm";
inline constexpr const char* kSuiteHadamard = "rac/mi == ttlm";
inline constexpr const char* kSuiteGradient = "grad-check";

std::vector<SuiteResult> run_checks(const CheckOptions& options = {});
std::string format_suite_result(const SuiteResult& r);

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
// parameter entry, for the NLL of `seq`, with central differences of step h.
double gradient_check_max_rel_error(const LanguageModel& model, const SequenceEncoding& seq, double h = 1e-5,
                                    double floor = 1e-6);

}  // namespace ttlm
