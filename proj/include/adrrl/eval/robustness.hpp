#pragma once

// Robustness recipe: train one agent per (alpha, seed), evaluate each on a
// physics grid, and summarize by the median over seeds of the worst grid cell.
// The worst-cell median is a desk-scale proxy for return-versus-parameter curves.

#include "adrrl/orchestrator/evaluate.hpp"
#include "adrrl/orchestrator/train.hpp"

namespace adrrl::eval {

struct RobustnessSpec {
  orchestrator::RunConfig base;
  std::vector<double> alphas{1.0, 0.1};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  orchestrator::Sweep sweep;
  int episodes = 20;
  std::uint64_t eval_seed = 12345;
  std::string out_dir = "runs/report";  // empty: no files
};

struct AgentResult {
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::vector<orchestrator::CellResult> cells;
  double worst = 0.0;    // min over cells of the mean return
  double nominal = 0.0;  // mean return at the cell nearest the training parameter
  double final_train_return = 0.0;
};

struct AlphaSummary {
  double alpha = 1.0;
  double median_worst = 0.0;
  double median_nominal = 0.0;
};

struct RobustnessReport {
  std::string param;
  double nominal_x = 0.0;
  std::vector<AgentResult> agents;
  std::vector<AlphaSummary> summary;

  const AlphaSummary& at(double alpha) const {
    for (const auto& s : summary)
      if (s.alpha == alpha) return s;
    throw UsageError(fmt::format("robustness report has no alpha {:g}", alpha));
  }
};

inline std::size_t nominal_cell(const orchestrator::Sweep& sweep, double x) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < sweep.cells.size(); ++k)
    if (std::abs(sweep.cells[k].x - x) < std::abs(sweep.cells[best].x - x)) best = k;
  return best;
}

inline void validate(const RobustnessSpec& spec) {
  if (spec.alphas.size() < 2 || std::find(spec.alphas.begin(), spec.alphas.end(), 1.0) == spec.alphas.end())
    throw ConfigError("robustness: need at least two alphas including 1.0");
  if (spec.seeds.empty()) throw ConfigError("robustness: need at least one seed");
  if (spec.sweep.cells.empty()) throw ConfigError("robustness: empty grid");
  if (spec.episodes <= 0) throw ConfigError("robustness: episodes must be positive");
}

inline RobustnessReport summarize(RobustnessReport r, const std::vector<double>& alphas) {
  r.summary.clear();
  for (double a : alphas) {
    std::vector<double> worst, nominal;
    for (const auto& ag : r.agents)
      if (ag.alpha == a) {
        worst.push_back(ag.worst);
        nominal.push_back(ag.nominal);
      }
    if (!worst.empty()) r.summary.push_back({a, stats::median(worst), stats::median(nominal)});
  }
  return r;
}

inline void write_report_files(const RobustnessReport& r, const RobustnessSpec& spec) {
  namespace fs = std::filesystem;
  const fs::path dir(spec.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "cells.csv");
    os << "alpha,seed," << r.param << ",episodes,mean,se,cvar\n";
    for (const auto& ag : r.agents)
      for (const auto& c : ag.cells)
        os << fmt::format("{:g},{},{:.10g},{},{:.10g},{:.10g},{:.10g}\n", ag.alpha, ag.seed, c.cell.x,
                          c.returns.size(), c.mean, c.se, c.cvar);
  }
  {
    std::ofstream os(dir / "agents.csv");
    os << "alpha,seed,worst_cell_mean,nominal_cell_mean,final_train_return\n";
    for (const auto& ag : r.agents)
      os << fmt::format("{:g},{},{:.10g},{:.10g},{:.10g}\n", ag.alpha, ag.seed, ag.worst, ag.nominal,
                        ag.final_train_return);
  }
  {
    std::ofstream os(dir / "summary.csv");
    os << "alpha,median_worst_cell,median_nominal_cell\n";
    for (const auto& s : r.summary) os << fmt::format("{:g},{:.10g},{:.10g}\n", s.alpha, s.median_worst, s.median_nominal);
  }
  {
    // one curve per alpha: median over seeds of the cell mean
    std::ofstream os(dir / "plot.tsv");
    bool first = true;
    for (const auto& s : r.summary) {
      if (!first) os << "\n\n";
      first = false;
      os << fmt::format("# curve: alpha {:g} median over seeds\n# {}\treturn\n", s.alpha, r.param);
      for (std::size_t k = 0; k < spec.sweep.cells.size(); ++k) {
        std::vector<double> v;
        for (const auto& ag : r.agents)
          if (ag.alpha == s.alpha) v.push_back(ag.cells[k].mean);
        os << fmt::format("{:.10g}\t{:.10g}\n", spec.sweep.cells[k].x, stats::median(v));
      }
    }
  }
  std::ofstream md(dir / "report.md");
  md << "# Robustness report\n\n";
  md << fmt::format("Grid over `{}`: {} cells, {} evaluation episodes per cell, nominal {} = {:g}.\n", r.param,
                    spec.sweep.cells.size(), spec.episodes, r.param, r.nominal_x);
  md << fmt::format("Seeds: {}. Config hash of the base run: {:016x}.\n\n", spec.seeds.size(),
                    orchestrator::config_hash(spec.base));
  md << "| alpha | median worst-cell return | median nominal return |\n|---|---|---|\n";
  for (const auto& s : r.summary) md << fmt::format("| {:g} | {:.4f} | {:.4f} |\n", s.alpha, s.median_worst, s.median_nominal);
  md << "\nPer agent (worst cell, nominal cell):\n\n| alpha | seed | worst | nominal |\n|---|---|---|---|\n";
  for (const auto& ag : r.agents) md << fmt::format("| {:g} | {} | {:.4f} | {:.4f} |\n", ag.alpha, ag.seed, ag.worst, ag.nominal);
  md << "\nFiles: `cells.csv` (every cell), `agents.csv`, `summary.csv`, `plot.tsv` (gnuplot blocks).\n";
}

inline RobustnessReport robustness_experiment(const RobustnessSpec& spec) {
  validate(spec);
  RobustnessReport r;
  r.param = spec.sweep.param;
  {
    envs::EnvParams base = spec.base.env;
    r.nominal_x = orchestrator::param_ref(base, spec.sweep.param);
  }
  const std::size_t nominal = nominal_cell(spec.sweep, r.nominal_x);
  for (double alpha : spec.alphas)
    for (auto seed : spec.seeds) {
      orchestrator::RunConfig cfg = spec.base;
      cfg.guidance.alpha = alpha;
      cfg.seed = seed;
      const bool files = !spec.out_dir.empty();
      if (files) cfg.out_dir = (std::filesystem::path(spec.out_dir) / fmt::format("alpha_{:g}_seed_{}", alpha, seed)).string();
      cfg.validate();
      spdlog::info("robustness: training alpha {:g} seed {}", alpha, seed);
      const auto trained = orchestrator::adrrl_train(cfg, {files, {}});
      orchestrator::EvalOptions eo;
      eo.episodes = spec.episodes;
      eo.alpha = cfg.eval_alpha;
      eo.seed = spec.eval_seed;
      eo.workers = cfg.workers;
      AgentResult ag{alpha, seed, orchestrator::evaluate_policy(trained.checkpoint, spec.sweep.cells, eo), 0.0, 0.0, 0.0};
      ag.worst = INFINITY;
      for (const auto& c : ag.cells) ag.worst = std::min(ag.worst, c.mean);
      ag.nominal = ag.cells[nominal].mean;
      if (!trained.metrics.empty()) ag.final_train_return = trained.metrics.back().episode_return;
      spdlog::info("robustness: alpha {:g} seed {} worst {:.3f} nominal {:.3f}", alpha, seed, ag.worst, ag.nominal);
      r.agents.push_back(std::move(ag));
    }
  r = summarize(std::move(r), spec.alphas);
  if (!spec.out_dir.empty()) write_report_files(r, spec);
  return r;
}

inline std::string format_summary(const RobustnessReport& r) {
  std::string out = fmt::format("{:>8} {:>20} {:>22}\n", "alpha", "median worst cell", "median nominal cell");
  for (const auto& s : r.summary) out += fmt::format("{:>8g} {:>20.4f} {:>22.4f}\n", s.alpha, s.median_worst, s.median_nominal);
  return out;
}

}  // namespace adrrl::eval
