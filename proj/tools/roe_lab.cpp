// roe_lab: train, sweep, verify-dp and eval entry points.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "roe/harness.hpp"
#include "roe/sweep.hpp"
#include "roe/verify.hpp"

namespace fs = std::filesystem;

namespace {

roe::NamedPolicy pick_policy(const roe::ExperimentConfig& cfg, const std::string& name) {
  if (name.empty()) return cfg.policy;
  for (const auto& p : cfg.policy_grid())
    if (p.name == name) return p;
  if (cfg.policy.name == name) return cfg.policy;
  throw roe::ConfigError("no policy named '" + name + "' in the config");
}

int cmd_train(const std::string& config, std::uint64_t seed, const std::string& out,
              const std::string& policy, bool trajectory, bool wall_clock) {
  const auto cfg = roe::load_config(config);
  const auto pol = pick_policy(cfg, policy);
  const auto res = roe::train_to_dir(cfg, pol, seed, out, {trajectory, wall_clock});
  const auto fin = roe::final_stats(res.rows, cfg.total_steps, roe::final_window_steps(cfg));
  std::cout << roe::json{{"policy", pol.name},
                         {"seed", seed},
                         {"steps", res.t},
                         {"episodes", res.rows.size()},
                         {"final_mean_return", fin.mean_return},
                         {"out", out}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& out, unsigned jobs, bool trajectory) {
  const auto cfg = roe::load_config(config);
  roe::SweepOptions opt{out, jobs, {trajectory, false}};
  const auto res = roe::run_sweep(cfg, opt);
  for (const auto& r : res.runs) {
    if (r.ok) {
      const auto fin = roe::final_stats(r.rows, cfg.total_steps, res.final_window);
      std::cout << r.policy << " seed=" << r.seed << " final_mean_return=" << fin.mean_return << '\n';
    } else {
      std::cout << r.policy << " seed=" << r.seed << " FAILED: " << r.error << '\n';
    }
  }
  std::cout << "summary: " << (fs::path(out) / "summary.csv").string() << '\n';
  return res.failures() == 0 ? 0 : 1;
}

int cmd_verify(std::uint64_t seed, std::size_t trials, const std::string& out) {
  roe::VerifyOptions opt;
  opt.seed = seed;
  opt.trials = trials;
  const auto rep = roe::run_dp_battery(opt);
  fs::create_directories(out);
  {
    std::ofstream os(fs::path(out) / "report.txt", std::ios::binary);
    roe::write_report_text(os, rep);
  }
  {
    std::ofstream os(fs::path(out) / "verify_dp.ndjson", std::ios::binary);
    roe::write_report_ndjson(os, rep);
  }
  roe::write_report_text(std::cout, rep);
  return rep.pass() ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint, std::size_t episodes, std::uint64_t seed,
             std::optional<double> alpha, std::optional<double> beta) {
  const auto cp = roe::load_checkpoint(checkpoint);
  roe::RiskInterval r = roe::scheduled_interval(cp.config, cp.t);
  if (alpha || beta) r = roe::RiskInterval(alpha.value_or(0.0), beta.value_or(1.0));
  const auto at = roe::evaluate(cp.tables, cp.config.env, episodes, r, seed);
  const auto neutral = roe::evaluate(cp.tables, cp.config.env, episodes, roe::RiskInterval::neutral(), seed);
  const bool matrix = cp.config.is_matrix();
  auto block = [&](const roe::EvalResult& e) {
    roe::json b{{"mean", e.mean}, {"sd", e.sd}, {"episodes", e.returns.size()}};
    if (!matrix) b["captures"] = roe::to_json(e.captures);
    return b;
  };
  std::cout << roe::json{{"checkpoint", checkpoint},
                         {"t", cp.t},
                         {"alpha", r.alpha()},
                         {"beta", r.beta()},
                         {"interval", block(at)},
                         {"neutral", block(neutral)}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-scheduled exploration lab for tabular quantile learners"};
  app.require_subcommand(1);

  std::string config, out, policy, checkpoint;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t trials = 200, episodes = 10;
  bool trajectory = false, wall_clock = false;
  std::optional<double> alpha, beta;

  auto* train = app.add_subcommand("train", "Train one policy for one seed");
  train->add_option("--config", config, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Master seed")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--policy", policy, "Policy name from the sweep grid");
  train->add_flag("--trajectory", trajectory, "Also write trajectory.ndjson");
  train->add_flag("--wall-clock", wall_clock, "Add wall_clock_ms to episode rows");

  auto* sweep = app.add_subcommand("sweep", "Run every (policy, seed) pair and aggregate");
  sweep->add_option("--config", config, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_flag("--trajectory", trajectory, "Also write per-run trajectory.ndjson");

  auto* verify = app.add_subcommand("verify-dp", "Run the DP property battery");
  verify->add_option("--seed", seed, "Master seed");
  verify->add_option("--trials", trials, "Table pairs per MDP")->check(CLI::PositiveNumber);
  verify->add_option("--out", out, "Report directory")->required();

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.ndjson")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Episodes")->required()->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Evaluation seed");
  eval->add_option("--alpha", alpha, "Override interval lower end");
  eval->add_option("--beta", beta, "Override interval upper end");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, seed, out, policy, trajectory, wall_clock);
    if (*sweep) return cmd_sweep(config, out, jobs, trajectory);
    if (*verify) return cmd_verify(seed, trials, out);
    if (*eval) return cmd_eval(checkpoint, episodes, seed, alpha, beta);
  } catch (const roe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
