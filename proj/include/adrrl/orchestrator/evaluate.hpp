#pragma once

// Test-time evaluation of a policy over a grid of physics parameters.

#include "adrrl/cvar/cvar.hpp"
#include "adrrl/envs/rollout.hpp"
#include "adrrl/orchestrator/checkpoint.hpp"
#include "adrrl/orchestrator/parallel.hpp"
#include "adrrl/stats.hpp"

#include <spdlog/fmt/fmt.h>

namespace adrrl::orchestrator {

struct GridCell {
  envs::EnvParams params;
  double x = 0.0;  // swept parameter value
};

struct Sweep {
  std::string param;  // mass | friction | gravity
  std::vector<GridCell> cells;
};

inline double& param_ref(envs::EnvParams& p, std::string_view name) {
  if (name == "mass") return p.mass;
  if (name == "friction") return p.friction;
  if (name == "gravity") return p.gravity;
  throw UsageError("unknown sweep parameter '" + std::string(name) + "' (mass, friction, gravity)");
}

inline Sweep make_sweep(const envs::EnvParams& base, std::string_view param, const std::vector<double>& values) {
  if (values.empty()) throw UsageError("sweep: grid must be nonempty");
  Sweep s{std::string(param), {}};
  for (double v : values) {
    GridCell c{base, v};
    param_ref(c.params, param) = v;
    s.cells.push_back(c);
  }
  return s;
}

// "mass=0.5:2:5" (lo:hi:steps, inclusive) or "mass=0.5,1,2".
inline Sweep parse_sweep(const envs::EnvParams& base, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw UsageError("sweep must look like param=lo:hi:steps");
  const std::string name = text.substr(0, eq), body = text.substr(eq + 1);
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("sweep: cannot parse number '" + s + "'");
    }
  };
  std::vector<double> values;
  if (std::count(body.begin(), body.end(), ':') == 2) {
    const auto a = body.find(':'), b = body.find(':', a + 1);
    const double lo = number(body.substr(0, a)), hi = number(body.substr(a + 1, b - a - 1));
    const double steps = number(body.substr(b + 1));
    if (steps < 1 || steps != std::floor(steps)) throw UsageError("sweep: steps must be a positive integer");
    const int n = static_cast<int>(steps);
    for (int k = 0; k < n; ++k) values.push_back(n == 1 ? lo : lo + (hi - lo) * k / (n - 1));
  } else {
    std::stringstream ss(body);
    for (std::string item; std::getline(ss, item, ',');) values.push_back(number(item));
  }
  return make_sweep(base, name, values);
}

struct CellResult {
  GridCell cell;
  double mean = 0.0;
  double se = 0.0;
  double cvar = 0.0;
  std::vector<double> returns;
};

struct EvalOptions {
  int episodes = 20;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  bool deterministic = true;  // act with the policy mean
  int workers = 1;
};

// Episode e of every cell starts from the same initial state draw (common random numbers).
inline std::vector<CellResult> evaluate_policy(const policy::GaussianPolicy& pi, envs::EnvKind kind,
                                               const std::vector<GridCell>& grid, const EvalOptions& opt) {
  if (grid.empty()) throw UsageError("evaluate_policy: grid must be nonempty");
  if (opt.episodes <= 0) throw UsageError("evaluate_policy: episodes must be positive");
  if (pi.state_dim() != envs::state_dim(kind) || pi.action_dim() != envs::action_dim(kind))
    throw ConfigError("evaluate_policy: policy dimensions do not match environment " + envs::to_string(kind));
  for (const auto& c : grid) c.params.validate();
  auto run_cell = [&](std::size_t k) {
    auto env = envs::make_env(kind, grid[k].params);
    CellResult r{grid[k], 0.0, 0.0, 0.0, {}};
    for (int e = 0; e < opt.episodes; ++e) {
      Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(e)));
      Rng act_rng(derive_seed(opt.seed ^ 0xac7ULL, static_cast<std::uint64_t>(e)));
      auto act = [&](const Vector& s) -> Vector {
        return opt.deterministic ? pi.mean(s) : pi.act(s, act_rng).action;
      };
      r.returns.push_back(envs::episode_return(env, act, rng));
    }
    const auto ms = stats::mean_se(r.returns);
    r.mean = ms.mean;
    r.se = ms.se;
    r.cvar = cvar::empirical_cvar(std::span<const double>(r.returns), opt.alpha);
    return r;
  };
  return parallel_map(grid.size(), opt.workers, run_cell);
}

inline std::vector<CellResult> evaluate_policy(const Checkpoint& ck, const std::vector<GridCell>& grid,
                                               const EvalOptions& opt) {
  return evaluate_policy(ck.policy, ck.config.env_kind, grid, opt);
}

inline void write_eval_csv(std::ostream& os, const std::vector<CellResult>& results, double alpha) {
  os << "mass,friction,gravity,episodes,mean,se,cvar_" << fmt::format("{:g}", alpha) << '\n';
  for (const auto& r : results)
    os << fmt::format("{:.10g},{:.10g},{:.10g},{},{:.10g},{:.10g},{:.10g}\n", r.cell.params.mass,
                      r.cell.params.friction, r.cell.params.gravity, r.returns.size(), r.mean, r.se, r.cvar);
}

// Gnuplot-style blocks, one two-column curve each: mean, mean - se, mean + se.
inline void write_plot_tsv(std::ostream& os, const std::string& param, const std::vector<CellResult>& results,
                           const std::string& label = "policy") {
  const std::pair<const char*, int> curves[] = {{"mean", 0}, {"mean_minus_se", -1}, {"mean_plus_se", 1}};
  bool first = true;
  for (const auto& [name, sign] : curves) {
    if (!first) os << "\n\n";
    first = false;
    os << "# curve: " << label << ' ' << name << "\n# " << param << "\treturn\n";
    for (const auto& r : results) os << fmt::format("{:.10g}\t{:.10g}\n", r.cell.x, r.mean + sign * r.se);
  }
}

}  // namespace adrrl::orchestrator
