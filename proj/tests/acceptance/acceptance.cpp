// Acceptance runner: one PASS/FAIL line per criterion. `--only N` runs a
// single criterion (each is its own ctest entry). Runtime limits are part of
// the pass condition.

#include "adrrl/eval/agent_checks.hpp"
#include "adrrl/eval/battery.hpp"
#include "adrrl/eval/robustness.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

#ifndef ADRRL_SOURCE_DIR
#define ADRRL_SOURCE_DIR "."
#endif

using namespace adrrl;
using namespace adrrl::eval;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string summary;
  std::vector<std::string> notes;  // printed indented under the verdict
};

struct Env {
  std::string config_path;
  fs::path work;
};

std::string check_line(const CheckResult& c) {
  return fmt::format("[{}] {} {}: value {:.6g} vs {:.6g}; {}", c.id, c.passed ? "ok" : "violated", c.name, c.value,
                     c.bound, c.detail);
}

Outcome from_checks(const std::vector<CheckResult>& checks, double limit_s, double elapsed) {
  Outcome o;
  o.passed = elapsed < limit_s;
  for (const auto& c : checks) {
    o.passed = o.passed && c.passed;
    o.notes.push_back(check_line(c));
  }
  o.summary = fmt::format("{:.1f}s (limit {:.0f}s)", elapsed, limit_s);
  return o;
}

template <class Fn>
Outcome timed(double limit_s, Fn&& fn) {
  detail::Stopwatch sw;
  auto checks = fn();
  return from_checks(checks, limit_s, sw.seconds());
}

orchestrator::RunConfig desk_config(const Env& env) {
  return orchestrator::load_config(env.config_path, /*env_overrides=*/false);
}

Outcome criterion7(const Env& env) {
  detail::Stopwatch sw;
  auto cfg = desk_config(env);
  cfg.out_dir = (env.work / "c7_agent").string();
  spdlog::info("criterion 7: training alpha {:g} agent, {} iterations", cfg.guidance.alpha, cfg.iterations);
  const auto ck = orchestrator::adrrl_train(cfg).checkpoint;
  CheckOptions centered;
  centered.r_rule = guidance::RRule::three_sigma_centered;
  const auto eff = check_trained_guidance_effect(ck, 0.1, centered);
  CheckOptions literal;
  literal.r_rule = guidance::RRule::three_sigma;
  const auto lit = check_trained_guidance_effect(ck, 0.1, literal);
  auto o = from_checks({eff.lowers, eff.alpha_one}, 600.0, sw.seconds());
  o.notes.push_back("for reference, the literal box rule on the same agent: " + check_line(lit.lowers));
  return o;
}

Outcome criterion8(const Env& env) {
  detail::Stopwatch sw;
  RobustnessSpec spec;
  spec.base = desk_config(env);
  spec.alphas = {1.0, 0.1};
  spec.seeds = {0, 1, 2, 3, 4};
  spec.sweep = orchestrator::make_sweep(spec.base.env, "mass", {0.5, 0.75, 1.0, 1.5, 2.0});
  spec.episodes = spec.base.eval_episodes;
  spec.out_dir = (env.work / "c8_robustness").string();
  const auto report = robustness_experiment(spec);
  const auto& one = report.at(1.0);
  const auto& tenth = report.at(0.1);
  // "at least 85% of the alpha = 1 nominal return", read for returns of either sign
  const double nominal_floor = one.median_nominal - 0.15 * std::abs(one.median_nominal);
  const bool robust = tenth.median_worst >= one.median_worst;
  const bool nominal = tenth.median_nominal >= nominal_floor;
  const double elapsed = sw.seconds();
  Outcome o;
  o.passed = robust && nominal && elapsed < 3600.0;
  o.summary = fmt::format("{:.1f}s (limit 3600s)", elapsed);
  o.notes.push_back(fmt::format("median worst-cell return: alpha 0.1 {:.4f} vs alpha 1 {:.4f} ({})", tenth.median_worst,
                                one.median_worst, robust ? "ok" : "violated"));
  o.notes.push_back(fmt::format("median nominal return: alpha 0.1 {:.4f} vs floor {:.4f} from alpha 1 {:.4f} ({})",
                                tenth.median_nominal, nominal_floor, one.median_nominal, nominal ? "ok" : "violated"));
  for (const auto& ag : report.agents)
    o.notes.push_back(fmt::format("alpha {:g} seed {}: worst {:.4f} nominal {:.4f}", ag.alpha, ag.seed, ag.worst,
                                  ag.nominal));
  o.notes.push_back("report: " + (fs::path(spec.out_dir) / "report.md").string());
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome criterion9(const Env& env) {
  detail::Stopwatch sw;
  auto cfg = desk_config(env);
  cfg.iterations = 4;
  cfg.model_iterations = 5;
  cfg.seed = 7;
  Outcome o;
  const fs::path a = env.work / "c9_run_a", b = env.work / "c9_run_b";
  for (const auto& dir : {a, b}) {
    fs::remove_all(dir);
    cfg.out_dir = dir.string();
    orchestrator::adrrl_train(cfg);
  }
  const bool metrics_same = slurp(a / "metrics.csv") == slurp(b / "metrics.csv");
  const bool events_same = slurp(a / "events.csv") == slurp(b / "events.csv");
  // the stored config text differs only in out_dir, so compare every other tensor
  auto without_config = [](nn::TensorList list) {
    std::erase_if(list, [](const nn::Tensor& t) { return t.name == "meta.config"; });
    return list;
  };
  const auto ta = without_config(nn::load_tensors((a / "checkpoint.adrl").string()));
  const auto tb = without_config(nn::load_tensors((b / "checkpoint.adrl").string()));
  bool ck_same = ta.size() == tb.size();
  for (std::size_t k = 0; ck_same && k < ta.size(); ++k)
    ck_same = ta[k].name == tb[k].name && ta[k].dims == tb[k].dims && ta[k].data == tb[k].data;
  o.notes.push_back(fmt::format("metrics.csv byte-identical across runs: {}", metrics_same));
  o.notes.push_back(fmt::format("events.csv identical and checkpoint tensors identical across runs: {}", events_same && ck_same));

  const auto ck = orchestrator::load_checkpoint((a / "checkpoint.adrl").string());
  orchestrator::save_checkpoint((env.work / "c9_resaved.adrl").string(), ck);
  const bool resave_same = slurp(env.work / "c9_resaved.adrl") == slurp(a / "checkpoint.adrl");
  // reference probe from a checkpoint that never touched disk
  cfg.out_dir = (env.work / "c9_memory").string();
  const auto mem = orchestrator::adrrl_train(cfg, {false, {}}).checkpoint;
  const auto pa = orchestrator::forward_probe(mem, 99), pb = orchestrator::forward_probe(ck, 99);
  bool forward_same = pa.size() == pb.size();
  for (std::size_t k = 0; forward_same && k < pa.size(); ++k) forward_same = pa[k] == pb[k];
  o.notes.push_back(fmt::format("checkpoint round trip: forward outputs bit-identical {}, re-saved bytes identical {}",
                                forward_same, resave_same));
  o.passed = metrics_same && events_same && ck_same && resave_same && forward_same;
  o.summary = fmt::format("{:.1f}s", sw.seconds());
  return o;
}

Outcome criterion10() {
  detail::Stopwatch sw;
  CheckOptions flip, inflate;
  flip.mutation = guidance::Mutation::flip_sign;
  inflate.mutation = guidance::Mutation::inflate_10x;
  const auto f = property_battery({Suite::lowers}, flip);
  const auto i = property_battery({Suite::budget}, inflate);
  const auto* lowers = f.find("7s");
  const auto* analytic = i.find("2a");
  Outcome o;
  o.passed = lowers && !lowers->passed && analytic && !analytic->passed;
  o.notes.push_back("flip_sign, expected to fail: " + check_line(*lowers));
  o.notes.push_back("inflate_10x, expected to fail: " + check_line(*analytic));
  o.summary = fmt::format("{:.1f}s; both mutations detected: {}", sw.seconds(), o.passed);
  return o;
}

Outcome run_criterion(int n, const Env& env) {
  switch (n) {
    case 1: return timed(60, [] { return std::vector{check_density_identity()}; });
    case 2: return timed(120, [] { return std::vector{check_budget_analytic(), check_budget_search()}; });
    case 3: return timed(600, [] { return std::vector{check_chain_envelope(), check_unit_expectation()}; });
    case 4: return timed(60, [] { return std::vector{check_cvar()}; });
    case 5: return timed(120, [] { return std::vector{check_gradients()}; });
    case 6: return timed(10, [] { return std::vector{check_inf_norm_inequality()}; });
    case 7: return criterion7(env);
    case 8: return criterion8(env);
    case 9: return criterion9(env);
    case 10: return criterion10();
  }
  throw UsageError(fmt::format("no criterion {}", n));
}

constexpr const char* kTitles[] = {"",
                                   "guided-step density identity",
                                   "per-step budget",
                                   "chain envelope and unit expectation",
                                   "CVaR primal-dual equivalence",
                                   "gradient correctness",
                                   "infinity-norm inequality",
                                   "guidance effect on a trained agent",
                                   "desk-scale robustness",
                                   "determinism and persistence",
                                   "mutation sensitivity"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  Env env{std::string(ADRRL_SOURCE_DIR) + "/configs/point_mass_1d.ini", "acceptance_runs"};
  std::string work = env.work.string();
  app.add_option("--only", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--config", env.config_path, "desk-scale INI config");
  app.add_option("--work", work, "directory for training runs");
  CLI11_PARSE(app, argc, argv);
  env.work = work;
  fs::create_directories(env.work);
  spdlog::set_level(spdlog::level::warn);
  if (only.empty())
    for (int n = 1; n <= 10; ++n) only.push_back(n);

  bool all = true;
  for (int n : only) {
    Outcome o;
    try {
      o = run_criterion(n, env);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what(), {}};
    }
    all = all && o.passed;
    std::cout << fmt::format("{} criterion {} ({}): {}\n", o.passed ? "PASS" : "FAIL", n, kTitles[n], o.summary);
    for (const auto& note : o.notes) std::cout << "    " << note << '\n';
    std::cout.flush();
  }
  return all ? 0 : 1;
}
