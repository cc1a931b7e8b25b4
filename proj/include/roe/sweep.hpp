#pragma once

// Multi-run sweeps over (policy, seed) with per-policy curve aggregation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "roe/harness.hpp"

namespace roe {

/// Linear-interpolation percentile (numpy's default), p in [0, 100].
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw UsageError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

struct SweepRun {
  std::string policy;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<MetricRow> rows;
  std::vector<EvalRecord> evals;
};

struct CurvePoint {
  std::string policy;
  std::string metric;  // train_return | eval_scheduled | eval_neutral
  std::uint64_t t = 0;
  std::size_t n_runs = 0;
  double mean = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

namespace detail {

inline CurvePoint summarize(std::string policy, std::string metric, std::uint64_t t,
                            const std::vector<double>& v) {
  CurvePoint c{std::move(policy), std::move(metric), t, v.size()};
  if (v.empty()) return c;
  double s = 0.0;
  for (double x : v) s += x;
  c.mean = s / static_cast<double>(v.size());
  c.p25 = percentile(v, 25.0);
  c.p75 = percentile(v, 75.0);
  return c;
}

}  // namespace detail

/// Per-policy curves at t = every, 2*every, ..., total. The training curve
/// uses each run's mean return over episodes finishing in (t - every, t];
/// runs without such an episode are left out of that point.
inline std::vector<CurvePoint> aggregate_curves(const std::vector<SweepRun>& runs,
                                                const std::vector<std::string>& policies,
                                                std::uint64_t every, std::uint64_t total) {
  std::vector<CurvePoint> out;
  for (const auto& policy : policies) {
    for (std::uint64_t t = every; t <= total; t += every) {
      std::vector<double> train, sched, neutral;
      for (const auto& r : runs) {
        if (!r.ok || r.policy != policy) continue;
        const auto w = window_stats(r.rows, t - every, t);
        if (w.episodes) train.push_back(w.mean_return);
        for (const auto& e : r.evals) {
          if (e.t != t) continue;
          sched.push_back(e.scheduled.mean);
          neutral.push_back(e.neutral.mean);
        }
      }
      out.push_back(detail::summarize(policy, "train_return", t, train));
      out.push_back(detail::summarize(policy, "eval_scheduled", t, sched));
      out.push_back(detail::summarize(policy, "eval_neutral", t, neutral));
    }
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<CurvePoint>& pts) {
  os << "policy,metric,t,n_runs,mean,p25,p75\n";
  for (const auto& p : pts) {
    os << p.policy << ',' << p.metric << ',' << p.t << ',' << p.n_runs << ',';
    if (p.n_runs) os << json(p.mean).dump() << ',' << json(p.p25).dump() << ',' << json(p.p75).dump();
    else os << ",,";
    os << '\n';
  }
}

struct SweepOptions {
  std::filesystem::path out_dir;
  unsigned jobs = 1;
  TrainFiles files;
};

struct SweepResult {
  std::vector<SweepRun> runs;  // policy-major, seed-minor
  std::vector<CurvePoint> curves;
  std::uint64_t final_window = 0;
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return !r.ok; }));
  }
};

/// Final window used in final.csv: the last 10% of training.
inline std::uint64_t final_window_steps(const ExperimentConfig& cfg) {
  return std::max<std::uint64_t>(cfg.total_steps / 10, 1);
}

inline void write_final_csv(std::ostream& os, const SweepResult& res, std::uint64_t total) {
  os << "policy,seed,status,final_mean_return,final_episodes,pair_per_episode,solo_per_episode,"
        "hare_per_episode,error\n";
  for (const auto& r : res.runs) {
    os << r.policy << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      const auto w = final_stats(r.rows, total, res.final_window);
      const double n = std::max<double>(static_cast<double>(w.episodes), 1.0);
      os << json(w.mean_return).dump() << ',' << w.episodes << ',' << json(w.captures.pair / n).dump() << ','
         << json(w.captures.solo / n).dump() << ',' << json(w.captures.hare / n).dump() << ',';
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      os << ",,,,," << msg;
    }
    os << '\n';
  }
}

/// Runs every (policy, seed) pair, `jobs` at a time. Each run owns
/// <out>/<policy>/seed_<seed>/; failures are recorded and skipped.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opt) {
  const auto grid = cfg.policy_grid();
  SweepResult res;
  res.final_window = final_window_steps(cfg);
  for (const auto& p : grid)
    for (auto s : cfg.seeds) {
      SweepRun run;
      run.policy = p.name;
      run.seed = s;
      res.runs.push_back(std::move(run));
    }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < res.runs.size();) {
      SweepRun& run = res.runs[i];
      const NamedPolicy& policy = grid[i / cfg.seeds.size()];
      try {
        const auto dir = opt.out_dir / run.policy / ("seed_" + std::to_string(run.seed));
        auto r = train_to_dir(cfg, policy, run.seed, dir, opt.files);
        run.rows = std::move(r.rows);
        run.evals = std::move(r.evals);
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(res.runs.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<std::string> names;
  for (const auto& p : grid) names.push_back(p.name);
  res.curves = aggregate_curves(res.runs, names, cfg.eval_every, cfg.total_steps);

  std::filesystem::create_directories(opt.out_dir);
  {
    auto os = open_output(opt.out_dir / "resolved_config.json");
    os << config_to_json(cfg).dump(2) << '\n';
  }
  {
    auto os = open_output(opt.out_dir / "summary.csv");
    write_summary_csv(os, res.curves);
  }
  {
    auto os = open_output(opt.out_dir / "final.csv");
    write_final_csv(os, res, cfg.total_steps);
  }
  return res;
}

}  // namespace roe
