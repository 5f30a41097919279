// adrrl command line: train, eval, sample, verify, report, version.

#include "adrrl/eval/battery.hpp"
#include "adrrl/eval/robustness.hpp"
#include "adrrl/orchestrator/evaluate.hpp"
#include "adrrl/orchestrator/train.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

using namespace adrrl;
using namespace adrrl::orchestrator;

namespace {

constexpr const char* kVersion = "0.1.0";

void apply_sets(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
    set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.guidance.n_steps = cfg.diffusion.n_steps;
  cfg.validate();
}

std::filesystem::path parent_dir(const std::string& file) {
  auto p = std::filesystem::path(file).parent_path();
  return p.empty() ? std::filesystem::path(".") : p;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out,
              const std::vector<std::string>& sets) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
  apply_sets(cfg, sets);
  const auto res = adrrl_train(cfg);
  const auto& last = res.metrics.empty() ? IterationMetrics{} : res.metrics.back();
  std::cout << fmt::format("trained {} iterations; last episode return {:.4f}; checkpoint {}/checkpoint.adrl\n",
                           res.checkpoint.iteration, last.episode_return, cfg.out_dir);
  return 0;
}

int run_eval(const std::string& ck_path, const std::string& sweep_text, int episodes, std::uint64_t seed,
             std::string out, bool stochastic) {
  const Checkpoint ck = load_checkpoint(ck_path);
  const Sweep sweep = parse_sweep(ck.config.env, sweep_text);
  EvalOptions opt;
  opt.episodes = episodes > 0 ? episodes : ck.config.eval_episodes;
  opt.alpha = ck.config.eval_alpha;
  opt.seed = seed;
  opt.deterministic = !stochastic;
  opt.workers = ck.config.workers;
  const auto results = evaluate_policy(ck, sweep.cells, opt);
  if (out.empty()) out = parent_dir(ck_path).string();
  std::filesystem::create_directories(out);
  {
    std::ofstream csv(std::filesystem::path(out) / "eval.csv");
    write_eval_csv(csv, results, opt.alpha);
    std::ofstream tsv(std::filesystem::path(out) / "eval_plot.tsv");
    write_plot_tsv(tsv, sweep.param, results);
  }
  std::cout << fmt::format("{:>10} {:>12} {:>10} {:>12}\n", sweep.param, "mean", "se", fmt::format("cvar_{:g}", opt.alpha));
  for (const auto& r : results)
    std::cout << fmt::format("{:>10.4g} {:>12.4f} {:>10.4f} {:>12.4f}\n", r.cell.x, r.mean, r.se, r.cvar);
  std::cout << "wrote " << (std::filesystem::path(out) / "eval.csv").string() << '\n';
  return 0;
}

int run_sample(const std::string& ck_path, double alpha, int count, const std::string& out, std::uint64_t seed,
               bool no_action_guide, const std::string& rule) {
  const Checkpoint ck = load_checkpoint(ck_path);
  SampleRequest req;
  req.guidance = ck.config.guidance;
  req.guidance.alpha = alpha;
  if (!rule.empty()) req.guidance.r_rule = guidance::parse_r_rule(rule);
  req.guidance.validate();
  req.count = count;
  req.seed = seed;
  req.s0 = reset_states(ck.config, count, derive_seed(seed, 99));
  req.action_guide = !no_action_guide;
  req.workers = ck.config.workers;
  req.chunk = ck.config.sample_chunk;
  const auto batch = generate_synthetic(ck, req);
  const auto layout = ck.layout();
  std::ofstream os(out);
  if (!os) throw Error("cannot write " + out);
  os << "# adrrl-samples v1 alpha=" << fmt::format("{:g}", alpha) << " L=" << layout.length
     << " d_s=" << layout.state_dim << " d_a=" << layout.action_dim << '\n';
  os << "chain,log_weight,xi_product,return";
  for (int t = 0; t <= layout.length; ++t)
    for (int j = 0; j < layout.state_dim; ++j) os << ",s" << t << '_' << j;
  for (int t = 0; t < layout.length; ++t)
    for (int j = 0; j < layout.action_dim; ++j) os << ",a" << t << '_' << j;
  for (int t = 0; t < layout.length; ++t) os << ",r" << t;
  os << '\n';
  for (int b = 0; b < count; ++b) {
    const auto& w = batch.windows[static_cast<std::size_t>(b)];
    os << fmt::format("{},{:.10g},{:.10g},{:.10g}", b, batch.log_weight[b], std::exp(batch.log_weight[b]),
                      batch.returns[b]);
    const Vector flat = envs::flatten(w);
    for (Eigen::Index k = 0; k < flat.size(); ++k) os << fmt::format(",{:.10g}", flat[k]);
    for (Eigen::Index t = 0; t < w.rewards.size(); ++t) os << fmt::format(",{:.10g}", w.rewards[t]);
    os << '\n';
  }
  std::vector<double> rets(batch.returns.data(), batch.returns.data() + batch.returns.size());
  const auto ms = stats::mean_se(rets);
  std::cout << fmt::format(
      "alpha {:g}: {} trajectories, mean return {:.6f} (se {:.6f}), max log prod xi {:.4f} (log 1/alpha {:.4f}), "
      "envelope violations {}\nwrote {}\n",
      alpha, count, ms.mean, ms.se, batch.log_weight.maxCoeff(), -std::log(alpha), batch.envelope_violations, out);
  return 0;
}

int run_verify(const std::string& suite, const std::string& mutation, const std::string& rule) {
  eval::CheckOptions opt;
  opt.mutation = guidance::parse_mutation(mutation);
  opt.r_rule = guidance::parse_r_rule(rule);
  const auto report = eval::property_battery(eval::parse_suite(suite), opt);
  std::cout << eval::format_battery(report);
  return report.all_passed() ? 0 : 1;
}

int run_report(const std::string& recipe, const std::string& config_path, const std::string& out,
               const std::vector<double>& alphas, int seeds, const std::string& sweep_text, int episodes,
               const std::vector<std::string>& sets) {
  if (recipe != "robustness") throw UsageError("unknown recipe '" + recipe + "' (robustness)");
  RunConfig cfg = load_config(config_path);
  apply_sets(cfg, sets);
  eval::RobustnessSpec spec;
  spec.base = cfg;
  spec.alphas = alphas;
  for (int s = 0; s < seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  spec.sweep = parse_sweep(cfg.env, sweep_text);
  spec.episodes = episodes > 0 ? episodes : cfg.eval_episodes;
  spec.out_dir = out;
  const auto report = eval::robustness_experiment(spec);
  std::cout << eval::format_summary(report);
  return 0;
}

void error_line(int code, std::string_view kind, std::string_view message) {
  std::string msg(message);
  for (auto& ch : msg)
    if (ch == '\n' || ch == '"') ch = '\'';
  std::cerr << fmt::format("adrrl-error code={} kind={} message=\"{}\"\n", code, kind, msg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially guided trajectory diffusion for robust RL"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  auto* train = app.add_subcommand("train", "run the training loop");
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  train->add_option("--config", config_path, "INI config file")->required();
  train->add_option("--seed", seed, "override run.seed");
  train->add_option("--out", out_dir, "override run.out_dir");
  train->add_option("--set", sets, "override section.key=value (repeatable)");

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint over a parameter sweep");
  std::string ck_path, sweep = "mass=0.5:2:5", eval_out;
  int episodes = 0;
  std::uint64_t eval_seed = 12345;
  bool stochastic = false;
  evalc->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  evalc->add_option("--sweep", sweep, "param=lo:hi:steps or param=v1,v2,...");
  evalc->add_option("--episodes", episodes, "episodes per grid cell (default eval.episodes)");
  evalc->add_option("--seed", eval_seed, "evaluation seed");
  evalc->add_option("--out", eval_out, "output directory (default: checkpoint directory)");
  evalc->add_flag("--stochastic", stochastic, "sample actions instead of using the policy mean");

  auto* sample = app.add_subcommand("sample", "dump guided trajectories and chain weights");
  double alpha = 0.1;
  int count = 100;
  std::string sample_out;
  std::uint64_t sample_seed = 1;
  bool no_action_guide = false;
  sample->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  sample->add_option("--alpha", alpha, "risk level in (0, 1]");
  sample->add_option("--count", count, "number of trajectories")->check(CLI::PositiveNumber);
  sample->add_option("--out", sample_out, "output CSV")->required();
  sample->add_option("--seed", sample_seed, "sampling seed");
  sample->add_flag("--no-action-guide", no_action_guide, "skip policy action consistency");
  std::string sample_rule;
  sample->add_option("--r-rule", sample_rule, "three_sigma|three_sigma_centered (default: from the checkpoint)");

  auto* verify = app.add_subcommand("verify", "run the property suites");
  std::string suite = "all";
  std::string mutation = "none", verify_rule = "three_sigma";
  verify->add_option("--suite", suite, "all|density|budget|envelope|cvar|grad|inequality|lowers");
  verify->add_option("--mutation", mutation, "none|flip_sign|inflate_10x (deliberate bug)");
  verify->add_option("--r-rule", verify_rule, "three_sigma|three_sigma_centered");

  auto* report = app.add_subcommand("report", "run an experiment recipe and write a report");
  std::string recipe = "robustness", report_config = "configs/point_mass_1d.ini", report_out = "runs/report";
  std::vector<double> alphas{1.0, 0.1};
  int n_seeds = 5, report_episodes = 0;
  std::string report_sweep = "mass=0.5,0.75,1,1.5,2";
  std::vector<std::string> report_sets;
  report->add_option("--recipe", recipe, "robustness");
  report->add_option("--config", report_config, "base INI config");
  report->add_option("--out", report_out, "output directory");
  report->add_option("--alphas", alphas, "risk levels, must include 1.0")->delimiter(',');
  report->add_option("--seeds", n_seeds, "number of seeds (0..n-1)")->check(CLI::PositiveNumber);
  report->add_option("--sweep", report_sweep, "test-time grid");
  report->add_option("--episodes", report_episodes, "episodes per grid cell");
  report->add_option("--set", report_sets, "override section.key=value (repeatable)");

  app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    error_line(2, "usage", e.what());
    return 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (*train) return run_train(config_path, seed, out_dir, sets);
    if (*evalc) return run_eval(ck_path, sweep, episodes, eval_seed, eval_out, stochastic);
    if (*sample) return run_sample(ck_path, alpha, count, sample_out, sample_seed, no_action_guide, sample_rule);
    if (*verify) return run_verify(suite, mutation, verify_rule);
    if (*report)
      return run_report(recipe, report_config, report_out, alphas, n_seeds, report_sweep, report_episodes,
                        report_sets);
    std::cout << "adrrl " << kVersion << '\n';
    return 0;
  } catch (const ConfigError& e) {
    error_line(2, "config", e.what());
    return 2;
  } catch (const UsageError& e) {
    error_line(2, "usage", e.what());
    return 2;
  } catch (const TrainingError& e) {
    error_line(1, "training", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line(1, "runtime", e.what());
    return 1;
  }
}
