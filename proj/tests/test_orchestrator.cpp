#include "adrrl/orchestrator/evaluate.hpp"
#include "adrrl/orchestrator/train.hpp"
#include "tiny_config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace adrrl;
using namespace adrrl::orchestrator;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adrrl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ADRRL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DeskConfigParses) {
  const auto cfg = load_config(std::string(ADRRL_SOURCE_DIR) + "/configs/point_mass_1d.ini", false);
  EXPECT_EQ(cfg.env_kind, envs::EnvKind::point_mass_1d);
  EXPECT_EQ(cfg.diffusion.n_steps, 20);
  EXPECT_EQ(cfg.guidance.n_steps, 20);
  EXPECT_DOUBLE_EQ(cfg.guidance.alpha, 0.1);
  EXPECT_EQ(cfg.a2c.critic_epochs, 10);
  EXPECT_DOUBLE_EQ(cfg.diffusion.beta_max, 0.2);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  EXPECT_THROW(parse_config("[run]\nseed = 1\nbogus = 2\n", false), ConfigError);
  EXPECT_THROW(parse_config("[nosuch]\nkey = 1\n", false), ConfigError);
  EXPECT_THROW(parse_config("[run]\nseed = abc\n", false), ConfigError);
  EXPECT_THROW(parse_config("[guidance]\nalpha = 0\n", false), ConfigError);
  EXPECT_THROW(parse_config("[guidance]\nr_rule = five_sigma\n", false), ConfigError);
  EXPECT_THROW(parse_config("[run]\nenv = cartpole\n", false), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
  RunConfig cfg;
  EXPECT_THROW(set_key(cfg, "run.nope", "1"), ConfigError);
  EXPECT_THROW(set_key(cfg, "noseparator", "1"), ConfigError);
}

TEST(Config, EnvironmentDefaultsFollowRunEnv) {
  const auto cfg = parse_config("[run]\nenv = pendulum\n[env]\nmass = 2\n", false);
  EXPECT_EQ(cfg.env_kind, envs::EnvKind::pendulum);
  EXPECT_EQ(cfg.env.mass, 2.0);
  EXPECT_GT(cfg.env.gravity, 0.0);  // pendulum default kept
}

TEST(Config, EnvironmentVariablesOverrideFileValues) {
  ::setenv("ADRRL_GUIDANCE_ALPHA", "0.25", 1);
  ::setenv("ADRRL_RUN_SEED", "42", 1);
  const auto with = parse_config("[guidance]\nalpha = 0.5\n");
  const auto without = parse_config("[guidance]\nalpha = 0.5\n", false);
  ::unsetenv("ADRRL_GUIDANCE_ALPHA");
  ::unsetenv("ADRRL_RUN_SEED");
  EXPECT_DOUBLE_EQ(with.guidance.alpha, 0.25);
  EXPECT_EQ(with.seed, 42u);
  EXPECT_DOUBLE_EQ(without.guidance.alpha, 0.5);
}

TEST(Config, CanonicalTextRoundTripsAndHashIgnoresOutDir) {
  RunConfig cfg = tiny_config();
  cfg.diffusion.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  const std::string text = to_ini(cfg);
  const auto back = parse_config(text, false);
  EXPECT_EQ(to_ini(back), text);
  EXPECT_EQ(back.diffusion.lr, cfg.diffusion.lr);
  RunConfig moved = cfg;
  moved.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(cfg));
  moved.seed += 1;
  EXPECT_NE(config_hash(moved), config_hash(cfg));
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  auto fn = [](std::size_t k) {
    Rng rng(derive_seed(9, k));
    return normal_matrix(3, 3, rng).sum();
  };
  EXPECT_EQ(parallel_map(17, 1, fn), parallel_map(17, 4, fn));
  EXPECT_TRUE(parallel_map(0, 3, fn).empty());
}

TEST(Parallel, LowestFailingTaskIsRethrown) {
  auto fn = [](std::size_t k) -> int {
    if (k == 3 || k == 7) throw UsageError("task " + std::to_string(k));
    return static_cast<int>(k);
  };
  for (int w : {1, 4}) {
    try {
      parallel_map(10, w, fn);
      FAIL() << "no exception";
    } catch (const UsageError& e) {
      EXPECT_STREQ(e.what(), "task 3");
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch("ckpt");
  RunConfig cfg = tiny_config();
  cfg.out_dir = dir.string();
  const auto ck = adrrl_train(cfg).checkpoint;
  const auto loaded = load_checkpoint((dir / "checkpoint.adrl").string());
  EXPECT_EQ(loaded.iteration, cfg.iterations);
  EXPECT_EQ(to_ini(loaded.config), to_ini(ck.config));
  const auto a = forward_probe(ck, 5), b = forward_probe(loaded, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]) << k;
  EXPECT_EQ(rng_text(loaded.rng), rng_text(ck.rng));
  save_checkpoint((dir / "again.adrl").string(), loaded);
  EXPECT_EQ(slurp(dir / "again.adrl"), slurp(dir / "checkpoint.adrl"));
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto ck = initial_checkpoint(tiny_config());
  auto tensors = checkpoint_tensors(ck);
  for (auto& t : tensors)
    if (t.name == "meta.config_hash") t.data[0] += 1.0;
  EXPECT_THROW(checkpoint_from_tensors(tensors), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint.adrl"), Error);
}

TEST(Train, MetricsAreDeterministic) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  RunConfig cfg = tiny_config(11);
  cfg.out_dir = a.string();
  adrrl_train(cfg);
  cfg.out_dir = b.string();
  adrrl_train(cfg);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "events.csv"), slurp(b / "events.csv"));
}

TEST(Train, WorkerCountDoesNotChangeResults) {
  RunConfig cfg = tiny_config(12);
  std::vector<std::string> rows[2];
  for (int k = 0; k < 2; ++k) {
    cfg.workers = k == 0 ? 1 : 3;
    for (const auto& m : adrrl_train(cfg, {false, {}}).metrics) rows[k].push_back(m.row());
  }
  EXPECT_EQ(rows[0], rows[1]);
}

TEST(Train, ZeroIterationsReturnsTheInitialCheckpoint) {
  RunConfig cfg = tiny_config();
  cfg.iterations = 0;
  const auto res = adrrl_train(cfg, {false, {}});
  EXPECT_TRUE(res.metrics.empty());
  EXPECT_EQ(res.checkpoint.iteration, 0);
  const auto a = forward_probe(res.checkpoint, 1), b = forward_probe(initial_checkpoint(cfg), 1);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Train, LogFilesHaveVersionHeadersAndOrderedEvents) {
  const auto dir = scratch("logs");
  RunConfig cfg = tiny_config();
  cfg.out_dir = dir.string();
  int callbacks = 0;
  adrrl_train(cfg, {true, [&](const IterationMetrics&) { ++callbacks; }});
  EXPECT_EQ(callbacks, cfg.iterations);
  const auto metrics = lines(slurp(dir / "metrics.csv"));
  ASSERT_EQ(metrics.size(), static_cast<std::size_t>(cfg.iterations) + 2);
  EXPECT_EQ(metrics[0], kMetricsVersionLine);
  EXPECT_EQ(metrics[1], IterationMetrics::header());
  const auto events = lines(slurp(dir / "events.csv"));
  ASSERT_EQ(events.size(), 2u + 4u * cfg.iterations);
  EXPECT_EQ(events[0], kEventsVersionLine);
  const char* phases[] = {"collect", "model", "sample", "policy"};
  for (int k = 0; k < 4 * cfg.iterations; ++k)
    EXPECT_EQ(events[2 + k], fmt::format("{},{},{}", k + 1, k / 4 + 1, phases[k % 4]));
  EXPECT_EQ(parse_config(slurp(dir / "config.ini"), false).seed, cfg.seed);
}

TEST(Synthetic, InpaintedInitialStatesAndChunkInvariance) {
  RunConfig cfg = tiny_config();
  cfg.iterations = 2;
  const auto ck = adrrl_train(cfg, {false, {}}).checkpoint;
  SampleRequest req;
  req.guidance = cfg.guidance;
  req.count = 10;
  req.seed = 4;
  req.s0 = reset_states(cfg, 10, 8);
  req.chunk = 3;
  const auto a = generate_synthetic(ck, req);
  req.workers = 2;
  const auto b = generate_synthetic(ck, req);
  EXPECT_EQ(a.tau0, b.tau0);
  EXPECT_EQ(a.log_weight, b.log_weight);
  ASSERT_EQ(a.windows.size(), 10u);
  for (int k = 0; k < 10; ++k) {
    EXPECT_NEAR(a.windows[k].states(0, 0), req.s0(0, k), 1e-12);
    EXPECT_LE(a.windows[k].actions.cwiseAbs().maxCoeff(), envs::Environment::kActionBound);
  }
  req.s0 = Matrix::Zero(2, 4);
  EXPECT_THROW(generate_synthetic(ck, req), ConfigError);
}

TEST(Evaluate, SweepParsing) {
  const envs::EnvParams base;
  const auto s = parse_sweep(base, "mass=0.5:2:3");
  ASSERT_EQ(s.cells.size(), 3u);
  EXPECT_EQ(s.cells[1].x, 1.25);
  EXPECT_EQ(s.cells[2].params.mass, 2.0);
  EXPECT_EQ(parse_sweep(base, "friction=0.1,0.3").cells[1].params.friction, 0.3);
  EXPECT_THROW(parse_sweep(base, "mass"), UsageError);
  EXPECT_THROW(parse_sweep(base, "mass=a:b:c"), UsageError);
  EXPECT_THROW(parse_sweep(base, "mass=1:2:0"), UsageError);
  EXPECT_THROW(parse_sweep(base, "length=1,2"), UsageError);
}

TEST(Evaluate, MassSweepSmokeAndCommonRandomNumbers) {
  const RunConfig cfg = tiny_config();
  const auto ck = initial_checkpoint(cfg);
  const auto sweep = make_sweep(cfg.env, "mass", {0.5, 1.0, 1.0});
  EvalOptions opt;
  opt.episodes = 4;
  const auto res = evaluate_policy(ck, sweep.cells, opt);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_EQ(res[1].returns, res[2].returns);  // same params, same episode seeds
  for (const auto& r : res) {
    EXPECT_EQ(r.returns.size(), 4u);
    EXPECT_LE(r.cvar, r.mean + 1e-12);
  }
  std::ostringstream csv;
  write_eval_csv(csv, res, 0.1);
  const auto rows = lines(csv.str());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "mass,friction,gravity,episodes,mean,se,cvar_0.1");
  opt.workers = 3;
  const auto again = evaluate_policy(ck, sweep.cells, opt);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(again[k].returns, res[k].returns);
}

TEST(Evaluate, DimensionMismatchIsConfigError) {
  Rng rng(1);
  const auto pi = policy::GaussianPolicy::create(3, 1, 4, 1, -0.5, rng);  // point mass has 2 state entries
  const auto sweep = make_sweep(envs::EnvParams{}, "mass", {1.0});
  EXPECT_THROW(evaluate_policy(pi, envs::EnvKind::point_mass_1d, sweep.cells, {}), ConfigError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  std::ofstream(dir / "tiny.ini") << to_ini(tiny_config());
  const std::string cfg = (dir / "tiny.ini").string();
  EXPECT_EQ(run_cli("version"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("train --config /nonexistent.ini"), 2);
  EXPECT_EQ(run_cli("train --config " + cfg + " --set run.bogus=1"), 2);
  EXPECT_EQ(run_cli("verify --suite bogus"), 2);
  EXPECT_EQ(run_cli("eval --checkpoint /nonexistent.adrl"), 2);
  EXPECT_EQ(run_cli("train --config " + cfg + " --out " + (dir / "run").string()), 0);
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "run/checkpoint.adrl").string() + " --sweep mass=0.5:2:3 --episodes 2"),
            0);
  EXPECT_EQ(lines(slurp(dir / "run/eval.csv")).size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "run/eval_plot.tsv"));
  EXPECT_EQ(run_cli("sample --checkpoint " + (dir / "run/checkpoint.adrl").string() + " --count 5 --out " +
                    (dir / "samples.csv").string()),
            0);
  EXPECT_EQ(lines(slurp(dir / "samples.csv")).size(), 7u);
  EXPECT_EQ(run_cli("verify --suite inequality"), 0);
}
