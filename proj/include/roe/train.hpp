#pragma once

// Training loop plumbing: one Trainer owns a run's tables, replay buffer and
// RNG streams, and advances the environment one step per train_step().

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "roe/environment.hpp"
#include "roe/explore.hpp"
#include "roe/learner.hpp"
#include "roe/rng.hpp"

namespace roe {

enum class WarmupSource { random, epsilon };

struct TrainerOptions {
  LearnerConfig learner;
  PolicySpec policy = RoeScalarPolicy{};
  std::uint64_t warmup_steps = 0;
  WarmupSource warmup_source = WarmupSource::random;
};

/// What one environment step produced.
struct StepReport {
  std::uint64_t t = 0;  // environment steps taken, including this one
  bool warmup = false;
  StepContext ctx;
  std::vector<std::size_t> actions;
  double reward = 0.0;
  bool episode_done = false;
  env::CaptureInfo captures;
  std::uint64_t env_draws = 0;
  std::size_t updates = 0;
  double loss_sum = 0.0;
};

/// Id used for lookups of keys a table has never seen; always reads as zeros.
inline constexpr ObsId kUnseenObs = std::numeric_limits<ObsId>::max();

class Trainer {
 public:
  Trainer(const env::EnvSpec& env_spec, TrainerOptions opt, std::uint64_t seed)
      : opt_(std::move(opt)),
        env_(env_spec),
        buffer_(env_.n_agents(), opt_.learner.buffer_capacity),
        env_seed_(derive_seed(seed, "env")),
        policy_rng_(derive_seed(seed, "policy")),
        learner_rng_(derive_seed(seed, "learner")) {
    opt_.learner.validate();
    validate_policy(opt_.policy);
    auto index = std::make_shared<KeyIndex>();
    const std::size_t n_tables = opt_.learner.shared_table ? 1 : env_.n_agents();
    for (std::size_t i = 0; i < n_tables; ++i)
      tables_.emplace_back(env_.n_actions(), opt_.learner.n_quantiles, index);
    targets_ = tables_;
    begin_episode();
  }

  std::size_t n_agents() const { return env_.n_agents(); }
  std::size_t n_actions() const { return env_.n_actions(); }
  std::uint64_t t() const noexcept { return t_; }
  std::uint64_t episodes_started() const noexcept { return episode_index_; }
  const ReplayBuffer& buffer() const noexcept { return buffer_; }
  const std::vector<QTable>& tables() const noexcept { return tables_; }
  std::vector<QTable>& tables() noexcept { return tables_; }
  const QTable& table_for(std::size_t agent) const { return tables_[table_slot(agent)]; }
  const TrainerOptions& options() const noexcept { return opt_; }

  /// Policy clock: steps since the end of warmup.
  std::uint64_t policy_time() const {
    return t_ >= opt_.warmup_steps ? t_ - opt_.warmup_steps : 0;
  }

  StepReport train_step() {
    StepReport rep;
    rep.warmup = t_ < opt_.warmup_steps;
    rep.ctx = step_context(opt_.policy, policy_time());

    const std::size_t n = env_.n_agents();
    rep.actions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive_[i]) {
        rep.actions[i] = static_cast<std::size_t>(env::PpAction::stay);
        continue;
      }
      const QTable& table = table_for(i);
      if (rep.warmup) {
        rep.actions[i] = opt_.warmup_source == WarmupSource::random
                             ? uniform_action(table.n_actions(), policy_rng_)
                             : select_epsilon_greedy_at(table, obs_[i], warmup_epsilon(), policy_rng_);
      } else {
        rep.actions[i] = select_action(opt_.policy, rep.ctx, table, obs_[i], policy_rng_);
      }
    }

    const std::uint64_t draws_before = env_.rng_draws();
    auto res = env_.step(rep.actions);
    rep.env_draws = env_.rng_draws() - draws_before;
    ++t_;

    Transition tr;
    tr.obs = obs_;
    tr.reward = res.team_reward;
    tr.done = res.done;
    tr.actions.resize(n);
    tr.next_obs.resize(n);
    tr.active.resize(n);
    tr.agent_done.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      tr.actions[i] = static_cast<std::uint8_t>(rep.actions[i]);
      tr.next_obs[i] = tables_.front().intern(res.observations[i]);
      tr.active[i] = alive_[i] ? 1 : 0;
      tr.agent_done[i] = alive_[i] && !res.alive[i] ? 1 : 0;
      if (alive_[i]) tables_[table_slot(i)].count_visit(obs_[i], rep.actions[i]);
    }
    buffer_.push(tr);

    rep.reward = res.team_reward;
    rep.captures = res.info;
    rep.episode_done = res.done;
    rep.t = t_;

    if (!rep.warmup) learn(rep);

    if (res.done) {
      begin_episode();
    } else {
      obs_ = tr.next_obs;
      for (std::size_t i = 0; i < n; ++i) alive_[i] = res.alive[i];
    }
    return rep;
  }

 private:
  std::size_t table_slot(std::size_t agent) const {
    return opt_.learner.shared_table ? 0 : agent;
  }

  double warmup_epsilon() const {
    EpsilonSchedule s{1.0, 0.05, std::max<std::uint64_t>(opt_.warmup_steps, 1)};
    return epsilon_at(s, t_);
  }

  void begin_episode() {
    const auto keys = env_.reset(derive_seed(env_seed_, "episode", episode_index_++));
    obs_.resize(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) obs_[i] = tables_.front().intern(keys[i]);
    alive_.assign(keys.size(), true);
  }

  void learn(StepReport& rep) {
    const auto& cfg = opt_.learner;
    const auto batch = cfg.episode_sampling ? buffer_.sample_by_episode(cfg.batch_size, learner_rng_)
                                            : buffer_.sample(cfg.batch_size, learner_rng_);
    for (std::size_t i = 0; i < env_.n_agents(); ++i) {
      QTable& table = tables_[table_slot(i)];
      const QTable& target = targets_[table_slot(i)];
      for (const auto& tr : batch) {
        if (!tr.active[i]) continue;
        const auto y = td_target(tr, i, target, rep.ctx.interval, cfg, learner_rng_);
        rep.loss_sum += qr_update(table, tr.obs[i], tr.actions[i], y, cfg);
        ++rep.updates;
      }
    }
    if (++train_steps_ % cfg.target_update_period == 0) {
      for (std::size_t k = 0; k < tables_.size(); ++k) targets_[k] = sync_target(tables_[k]);
    }
  }

  TrainerOptions opt_;
  env::Environment env_;
  ReplayBuffer buffer_;
  std::uint64_t env_seed_;
  std::mt19937_64 policy_rng_;
  std::mt19937_64 learner_rng_;
  std::vector<QTable> tables_;
  std::vector<QTable> targets_;
  std::vector<ObsId> obs_;
  std::vector<bool> alive_;
  std::uint64_t t_ = 0;
  std::uint64_t episode_index_ = 0;
  std::uint64_t train_steps_ = 0;
};

struct EvalResult {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> returns;
  env::CaptureInfo captures;
};

/// Greedy rollouts at interval r. Tables are read-only; unseen keys read as zeros.
/// `tables` holds either one shared table or one per agent.
inline EvalResult evaluate(const std::vector<QTable>& tables, const env::EnvSpec& env_spec,
                           std::size_t episodes, const RiskInterval& r, std::uint64_t seed) {
  env::Environment env(env_spec);
  std::mt19937_64 tie_rng(derive_seed(seed, "eval-ties"));
  const std::size_t n = env.n_agents();
  if (tables.size() != 1 && tables.size() != n)
    throw UsageError("evaluate: need one shared table or one table per agent");
  auto table_for = [&](std::size_t i) -> const QTable& { return tables[tables.size() == 1 ? 0 : i]; };
  auto lookup = [&](std::size_t i, const env::ObservationKey& key) {
    return table_for(i).find(key).value_or(kUnseenObs);
  };

  EvalResult out;
  std::vector<std::size_t> actions(n);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    auto keys = env.reset(derive_seed(seed, "eval-episode", ep));
    std::vector<bool> alive(n, true);
    double ret = 0.0;
    for (;;) {
      for (std::size_t i = 0; i < n; ++i) {
        actions[i] = alive[i] ? greedy_action(table_for(i), lookup(i, keys[i]), r, tie_rng)
                              : static_cast<std::size_t>(env::PpAction::stay);
      }
      auto res = env.step(actions);
      ret += res.team_reward;
      out.captures += res.info;
      if (res.done) break;
      keys = std::move(res.observations);
      alive = res.alive;
    }
    out.returns.push_back(ret);
  }
  if (!out.returns.empty()) {
    double s = 0.0;
    for (double v : out.returns) s += v;
    out.mean = s / static_cast<double>(out.returns.size());
    if (out.returns.size() > 1) {
      double ss = 0.0;
      for (double v : out.returns) ss += (v - out.mean) * (v - out.mean);
      out.sd = std::sqrt(ss / static_cast<double>(out.returns.size() - 1));
    }
  }
  return out;
}

}  // namespace roe
