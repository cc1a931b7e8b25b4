#pragma once

// Single-run orchestration: training loop, NDJSON metrics, periodic greedy
// evaluation, optional per-step trajectory dump, and checkpoint files.

#include <boost/beast/core/detail/base64.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "roe/config.hpp"
#include "roe/train.hpp"

namespace roe {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

struct MetricRow {
  std::uint64_t run_seed = 0;
  std::uint64_t t = 0;
  std::uint64_t episode_index = 0;
  double episode_return = 0.0;
  bool warmup = false;
  std::optional<double> epsilon;       // epsilon-greedy
  std::optional<RiskInterval> interval;  // everything else
  std::optional<double> dltv_coef;
  std::size_t buffer_size = 0;
  std::optional<double> mean_loss;     // absent when the episode made no updates
  std::optional<env::CaptureInfo> captures;
  std::optional<double> wall_clock_ms;
};

inline json to_json(const env::CaptureInfo& c) {
  return json{{"pair", c.pair}, {"solo", c.solo}, {"hare", c.hare}, {"hare_pair", c.hare_pair}};
}

inline json to_json(const MetricRow& r) {
  json j{{"record", "episode"},
         {"schema_version", kMetricsSchemaVersion},
         {"run_seed", r.run_seed},
         {"t", r.t},
         {"episode", r.episode_index},
         {"return", r.episode_return},
         {"warmup", r.warmup}};
  if (r.epsilon) j["epsilon"] = *r.epsilon;
  if (r.interval) {
    j["alpha"] = r.interval->alpha();
    j["beta"] = r.interval->beta();
  }
  if (r.dltv_coef) j["dltv_coef"] = *r.dltv_coef;
  j["buffer_size"] = r.buffer_size;
  j["mean_loss"] = r.mean_loss ? json(*r.mean_loss) : json(nullptr);
  if (r.captures) j["captures"] = to_json(*r.captures);
  if (r.wall_clock_ms) j["wall_clock_ms"] = *r.wall_clock_ms;
  return j;
}

struct EvalRecord {
  std::uint64_t t = 0;
  RiskInterval interval;
  EvalResult scheduled;
  EvalResult neutral;
};

inline json to_json(const EvalRecord& e, bool with_captures) {
  auto block = [&](const EvalResult& r) {
    json b{{"mean", r.mean}, {"sd", r.sd}, {"episodes", r.returns.size()}};
    if (with_captures) b["captures"] = to_json(r.captures);
    return b;
  };
  return json{{"record", "eval"},
              {"schema_version", kMetricsSchemaVersion},
              {"t", e.t},
              {"alpha", e.interval.alpha()},
              {"beta", e.interval.beta()},
              {"scheduled", block(e.scheduled)},
              {"neutral", block(e.neutral)}};
}

/// Config as it applies to one run: a single policy and a single seed.
inline ExperimentConfig run_config(const ExperimentConfig& cfg, const NamedPolicy& policy,
                                   std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.policy = policy;
  c.sweep_policies.clear();
  c.seeds = {seed};
  return c;
}

inline json run_header(const ExperimentConfig& cfg, const NamedPolicy& policy, std::uint64_t seed) {
  return json{{"record", "header"},
              {"schema_version", kMetricsSchemaVersion},
              {"run_seed", seed},
              {"policy", policy.name},
              {"config", config_to_json(run_config(cfg, policy, seed))}};
}

struct RunSinks {
  std::ostream* metrics = nullptr;
  std::ostream* trajectory = nullptr;
  bool wall_clock = false;  // off by default so metric files stay byte-stable
};

struct RunResult {
  std::vector<MetricRow> rows;
  std::vector<EvalRecord> evals;
  std::vector<QTable> tables;
  std::uint64_t t = 0;
};

inline void write_line(std::ostream* os, const json& j) {
  if (os) *os << j.dump() << '\n';
}

inline RunResult run_training(const ExperimentConfig& cfg, const NamedPolicy& policy,
                              std::uint64_t seed, const RunSinks& sinks = {}) {
  const bool matrix = cfg.is_matrix();
  write_line(sinks.metrics, run_header(cfg, policy, seed));

  Trainer trainer(cfg.env, cfg.trainer_options(policy.spec), seed);
  const auto start = std::chrono::steady_clock::now();
  RunResult out;

  double ep_return = 0.0, ep_loss = 0.0;
  std::size_t ep_updates = 0;
  env::CaptureInfo ep_captures;
  std::uint64_t episode = 0;

  for (std::uint64_t step = 0; step < cfg.total_steps; ++step) {
    const StepReport rep = trainer.train_step();
    ep_return += rep.reward;
    ep_loss += rep.loss_sum;
    ep_updates += rep.updates;
    ep_captures += rep.captures;

    if (sinks.trajectory) {
      json j{{"t", rep.t}, {"actions", rep.actions}, {"reward", rep.reward}};
      if (!matrix) j["captures"] = to_json(rep.captures);
      j["rng_draws_consumed"] = rep.env_draws;
      write_line(sinks.trajectory, j);
    }

    if (rep.episode_done) {
      MetricRow row;
      row.run_seed = seed;
      row.t = rep.t;
      row.episode_index = episode++;
      row.episode_return = ep_return;
      row.warmup = rep.warmup;
      if (rep.ctx.uses_epsilon) row.epsilon = rep.ctx.epsilon;
      else row.interval = rep.ctx.interval;
      if (std::holds_alternative<DltvPolicy>(policy.spec)) row.dltv_coef = rep.ctx.dltv_coef;
      row.buffer_size = trainer.buffer().size();
      if (ep_updates > 0) row.mean_loss = ep_loss / static_cast<double>(ep_updates);
      if (!matrix) row.captures = ep_captures;
      if (sinks.wall_clock) {
        row.wall_clock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      write_line(sinks.metrics, to_json(row));
      out.rows.push_back(std::move(row));
      ep_return = ep_loss = 0.0;
      ep_updates = 0;
      ep_captures = {};
    }

    if (rep.t % cfg.eval_every == 0) {
      EvalRecord e;
      e.t = rep.t;
      e.interval = step_context(policy.spec, trainer.policy_time()).interval;
      const auto eval_seed = derive_seed(seed, "eval", rep.t);
      e.scheduled = evaluate(trainer.tables(), cfg.env, cfg.eval_episodes, e.interval, eval_seed);
      e.neutral = evaluate(trainer.tables(), cfg.env, cfg.eval_episodes, RiskInterval::neutral(), eval_seed);
      write_line(sinks.metrics, to_json(e, !matrix));
      out.evals.push_back(std::move(e));
    }
  }
  out.t = trainer.t();
  out.tables = trainer.tables();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: a header line with the run config, then one line per
// (table, observation, action) sorted by table, key bytes, action.

inline std::string base64_encode(const std::string& raw) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(raw.size()), '\0');
  out.resize(b64::encode(out.data(), raw.data(), raw.size()));
  return out;
}

inline std::string base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::decoded_size(text.size()), '\0');
  // The decoder stops at the first '=', so only padding may follow what it read.
  const auto body = text.find_last_not_of('=') + 1;
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (text.size() % 4 != 0 || text.size() - body > 2 || read != body)
    throw ConfigError("checkpoint: invalid base64 key");
  out.resize(written);
  return out;
}

struct Checkpoint {
  ExperimentConfig config;  // single-policy, single-seed
  std::uint64_t seed = 0;
  std::uint64_t t = 0;
  std::vector<QTable> tables;
};

inline void write_checkpoint(std::ostream& os, const ExperimentConfig& cfg, const NamedPolicy& policy,
                             std::uint64_t seed, std::uint64_t t, const std::vector<QTable>& tables) {
  if (tables.empty()) throw UsageError("write_checkpoint: no tables");
  write_line(&os, json{{"record", "checkpoint"},
                       {"format_version", kCheckpointFormatVersion},
                       {"run_seed", seed},
                       {"t", t},
                       {"n_tables", tables.size()},
                       {"n_actions", tables.front().n_actions()},
                       {"n_quantiles", tables.front().n_quantiles()},
                       {"config", config_to_json(run_config(cfg, policy, seed))}});
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const QTable& table = tables[k];
    std::vector<std::pair<const std::string*, ObsId>> keyed;
    for (ObsId id : table.ids()) keyed.emplace_back(&table.index()->key(id), id);
    std::sort(keyed.begin(), keyed.end(), [](const auto& l, const auto& r) { return *l.first < *r.first; });
    for (const auto& [key, id] : keyed) {
      const std::string encoded = base64_encode(*key);
      for (std::size_t a = 0; a < table.n_actions(); ++a) {
        const auto q = table.dist(id, a);
        write_line(&os, json{{"table", k},
                             {"obs_key", encoded},
                             {"action", a},
                             {"quantiles", std::vector<double>(q.begin(), q.end())},
                             {"visits", table.visits(id, a)}});
      }
    }
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("checkpoint: empty file");
  const json head = json::parse(line);
  if (head.value("record", "") != "checkpoint" ||
      head.value("format_version", 0) != kCheckpointFormatVersion)
    throw ConfigError("checkpoint: unsupported header");

  Checkpoint cp;
  cp.config = parse_config(head.at("config").dump());
  cp.seed = head.at("run_seed").get<std::uint64_t>();
  cp.t = head.at("t").get<std::uint64_t>();
  const auto n_tables = head.at("n_tables").get<std::size_t>();
  const auto n_actions = head.at("n_actions").get<std::size_t>();
  const auto n_quantiles = head.at("n_quantiles").get<std::size_t>();
  auto index = std::make_shared<KeyIndex>();
  for (std::size_t k = 0; k < n_tables; ++k) cp.tables.emplace_back(n_actions, n_quantiles, index);

  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json e = json::parse(line);
    const auto k = e.at("table").get<std::size_t>();
    const auto a = e.at("action").get<std::size_t>();
    if (k >= n_tables || a >= n_actions)
      throw ConfigError("checkpoint line " + std::to_string(lineno) + ": index out of range");
    QTable& table = cp.tables[k];
    const ObsId id = table.intern(base64_decode(e.at("obs_key").get<std::string>()));
    const auto q = e.at("quantiles").get<std::vector<double>>();
    if (q.size() != n_quantiles)
      throw ConfigError("checkpoint line " + std::to_string(lineno) + ": wrong quantile count");
    auto dst = table.mutable_dist(id, a);
    std::copy(q.begin(), q.end(), dst.begin());
    table.set_visits(id, a, e.value("visits", std::uint32_t{0}));
  }
  return cp;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

/// Interval the run's policy had scheduled at step t.
inline RiskInterval scheduled_interval(const ExperimentConfig& cfg, std::uint64_t t) {
  const std::uint64_t pt = t >= cfg.warmup_steps ? t - cfg.warmup_steps : 0;
  return step_context(cfg.policy.spec, pt).interval;
}

// ---------------------------------------------------------------------------
// Files for one run.

struct TrainFiles {
  bool trajectory = false;
  bool wall_clock = false;
};

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

/// Writes resolved_config.json, metrics.ndjson, checkpoint.ndjson and
/// optionally trajectory.ndjson under `dir`.
inline RunResult train_to_dir(const ExperimentConfig& cfg, const NamedPolicy& policy,
                              std::uint64_t seed, const std::filesystem::path& dir,
                              TrainFiles files = {}) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_output(dir / "resolved_config.json");
    os << config_to_json(run_config(cfg, policy, seed)).dump(2) << '\n';
  }
  auto metrics = open_output(dir / "metrics.ndjson");
  std::optional<std::ofstream> traj;
  if (files.trajectory) traj.emplace(open_output(dir / "trajectory.ndjson"));
  RunSinks sinks{&metrics, traj ? &*traj : nullptr, files.wall_clock};
  RunResult res = run_training(cfg, policy, seed, sinks);
  auto ck = open_output(dir / "checkpoint.ndjson");
  write_checkpoint(ck, cfg, policy, seed, res.t, res.tables);
  return res;
}

// ---------------------------------------------------------------------------
// Summaries over a run's episode rows.

struct WindowStats {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  env::CaptureInfo captures;
};

/// Episodes that finished at a step t with from < t <= to.
inline WindowStats window_stats(const std::vector<MetricRow>& rows, std::uint64_t from, std::uint64_t to) {
  WindowStats w;
  double sum = 0.0;
  for (const auto& r : rows) {
    if (r.t <= from || r.t > to) continue;
    ++w.episodes;
    sum += r.episode_return;
    if (r.captures) w.captures += *r.captures;
  }
  if (w.episodes) w.mean_return = sum / static_cast<double>(w.episodes);
  return w;
}

/// Final-window statistics: the last `window` steps of a run of `total` steps.
inline WindowStats final_stats(const std::vector<MetricRow>& rows, std::uint64_t total, std::uint64_t window) {
  return window_stats(rows, total > window ? total - window : 0, total);
}

}  // namespace roe
