#pragma once

// The property battery behind `adrrl verify`: every invariant suite, one line
// per check, overall pass only if every check passes.

#include "adrrl/eval/checks.hpp"

namespace adrrl::eval {

enum class Suite { density, budget, envelope, cvar, grad, inequality, lowers };

inline constexpr Suite kAllSuites[] = {Suite::density, Suite::budget,     Suite::envelope, Suite::cvar,
                                       Suite::grad,    Suite::inequality, Suite::lowers};

inline std::string to_string(Suite s) {
  switch (s) {
    case Suite::density: return "density";
    case Suite::budget: return "budget";
    case Suite::envelope: return "envelope";
    case Suite::cvar: return "cvar";
    case Suite::grad: return "grad";
    case Suite::inequality: return "inequality";
    case Suite::lowers: return "lowers";
  }
  return "?";
}

inline std::vector<Suite> parse_suite(std::string_view name) {
  if (name == "all") return {std::begin(kAllSuites), std::end(kAllSuites)};
  for (auto s : kAllSuites)
    if (to_string(s) == name) return {s};
  throw UsageError("unknown suite '" + std::string(name) +
                   "' (all, density, budget, envelope, cvar, grad, inequality, lowers)");
}

struct BatteryReport {
  guidance::Mutation mutation = guidance::Mutation::none;
  std::vector<CheckResult> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const CheckResult* find(std::string_view id) const {
    for (const auto& c : checks)
      if (c.id == id) return &c;
    return nullptr;
  }
};

inline std::vector<CheckResult> run_suite(Suite s, const CheckOptions& opt) {
  switch (s) {
    case Suite::density: return {check_density_identity(opt)};
    case Suite::budget: return {check_budget_analytic(opt), check_budget_search(opt)};
    case Suite::envelope: return {check_chain_envelope(opt), check_unit_expectation(opt)};
    case Suite::cvar: return {check_cvar(opt)};
    case Suite::grad: return {check_gradients(opt)};
    case Suite::inequality: return {check_inf_norm_inequality(opt)};
    case Suite::lowers: return {check_guidance_lowers_returns(opt)};
  }
  return {};
}

inline BatteryReport property_battery(const std::vector<Suite>& suites, const CheckOptions& opt = {}) {
  BatteryReport report{opt.mutation, {}};
  for (auto s : suites)
    for (auto& c : run_suite(s, opt)) report.checks.push_back(std::move(c));
  return report;
}

inline std::string format_check(const CheckResult& c) {
  return fmt::format("{} [{}] {}: value {:.6g} bound {:.6g} ({:.1f}s) {}", c.passed ? "PASS" : "FAIL", c.id, c.name,
                     c.value, c.bound, c.seconds, c.detail);
}

inline std::string format_battery(const BatteryReport& r) {
  std::string out;
  if (r.mutation != guidance::Mutation::none) out += "mutation: " + guidance::to_string(r.mutation) + '\n';
  for (const auto& c : r.checks) out += format_check(c) + '\n';
  const auto passed = std::count_if(r.checks.begin(), r.checks.end(), [](const auto& c) { return c.passed; });
  out += fmt::format("{} of {} checks passed\n", passed, r.checks.size());
  return out;
}

}  // namespace adrrl::eval
