#pragma once

// Tabular quantile-regression TD learning. Observation keys are interned into
// dense ids by a KeyIndex that a table shares with its snapshots; each table
// stores one N-quantile distribution per (id, action).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "roe/quantile.hpp"

namespace roe {

using ObsId = std::uint32_t;

/// Append-only interner for observation keys. Ids are dense and never reused.
class KeyIndex {
 public:
  ObsId intern(const std::string& key) {
    auto [it, inserted] = ids_.try_emplace(key, static_cast<ObsId>(keys_.size()));
    if (inserted) keys_.push_back(key);
    return it->second;
  }
  std::optional<ObsId> find(const std::string& key) const {
    auto it = ids_.find(key);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& key(ObsId id) const { return keys_.at(id); }
  std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::unordered_map<std::string, ObsId> ids_;
  std::vector<std::string> keys_;
};

struct LearnerConfig {
  double gamma = 0.99;
  double learning_rate = 0.05;
  std::size_t n_quantiles = 32;
  double huber_k = 1.0;
  std::size_t target_update_period = 200;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 5000;  // episodes
  bool shared_table = false;
  bool episode_sampling = false;
  bool stochastic_tau = false;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("learner.gamma must lie in [0, 1)");
    if (!(learning_rate >= 0.0)) throw DomainError("learner.learning_rate must be >= 0");
    if (n_quantiles == 0 || n_quantiles % 2 != 0)
      throw UsageError("learner.n_quantiles must be positive and even");
    if (!(huber_k > 0.0)) throw DomainError("learner.huber_k must be positive");
    if (target_update_period == 0) throw UsageError("learner.target_update_period must be positive");
    if (batch_size == 0) throw UsageError("learner.batch_size must be positive");
    if (buffer_capacity == 0) throw UsageError("learner.buffer_capacity must be positive");
  }
};

/// Per-(observation, action) quantile distributions. Unseen entries read as all-zero.
class QTable {
 public:
  QTable(std::size_t n_actions, std::size_t n_quantiles,
         std::shared_ptr<KeyIndex> index = std::make_shared<KeyIndex>())
      : n_actions_(n_actions), n_quantiles_(n_quantiles), index_(std::move(index)),
        zeros_(n_quantiles, 0.0) {
    if (n_actions == 0 || n_quantiles == 0) throw UsageError("QTable needs actions and quantiles");
  }

  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t n_quantiles() const noexcept { return n_quantiles_; }
  const std::shared_ptr<KeyIndex>& index() const noexcept { return index_; }

  ObsId intern(const std::string& key) { return index_->intern(key); }
  std::optional<ObsId> find(const std::string& key) const { return index_->find(key); }

  bool contains(ObsId id) const { return id < present_.size() && present_[id] != 0; }

  /// Number of materialized observations.
  std::size_t size() const noexcept { return n_present_; }

  std::span<const double> dist(ObsId id, std::size_t action) const {
    if (!contains(id)) return zeros_;
    return std::span<const double>(values_).subspan(offset(id, action), n_quantiles_);
  }
  std::span<const double> dist(const std::string& key, std::size_t action) const {
    const auto id = find(key);
    return id ? dist(*id, action) : std::span<const double>(zeros_);
  }

  std::span<double> mutable_dist(ObsId id, std::size_t action) {
    materialize(id);
    return std::span<double>(values_).subspan(offset(id, action), n_quantiles_);
  }

  void set(const std::string& key, std::size_t action, const QuantileDistribution& d) {
    if (d.size() != n_quantiles_) throw UsageError("distribution size does not match table N");
    auto out = mutable_dist(intern(key), action);
    std::copy(d.values().begin(), d.values().end(), out.begin());
  }

  std::uint32_t visits(ObsId id, std::size_t action) const {
    return contains(id) ? visits_[id * n_actions_ + action] : 0;
  }
  void count_visit(ObsId id, std::size_t action) {
    materialize(id);
    ++visits_[id * n_actions_ + action];
  }
  void set_visits(ObsId id, std::size_t action, std::uint32_t n) {
    materialize(id);
    visits_[id * n_actions_ + action] = n;
  }

  /// Materialized ids in ascending order.
  std::vector<ObsId> ids() const {
    std::vector<ObsId> out;
    out.reserve(n_present_);
    for (ObsId id = 0; id < present_.size(); ++id)
      if (present_[id]) out.push_back(id);
    return out;
  }

  /// Deep copy of the values. The key index is append-only and stays shared.
  QTable snapshot() const { return *this; }

  friend bool operator==(const QTable& l, const QTable& r) {
    if (l.n_actions_ != r.n_actions_ || l.n_quantiles_ != r.n_quantiles_) return false;
    const std::size_t ids = std::max(l.present_.size(), r.present_.size());
    for (ObsId id = 0; id < ids; ++id) {
      for (std::size_t a = 0; a < l.n_actions_; ++a) {
        const auto x = l.dist(id, a);
        const auto y = r.dist(id, a);
        if (!std::equal(x.begin(), x.end(), y.begin())) return false;
      }
    }
    return true;
  }

 private:
  std::size_t offset(ObsId id, std::size_t action) const {
    return (static_cast<std::size_t>(id) * n_actions_ + action) * n_quantiles_;
  }

  void materialize(ObsId id) {
    if (id >= present_.size()) {
      const std::size_t slots = static_cast<std::size_t>(id) + 1;
      present_.resize(slots, 0);
      visits_.resize(slots * n_actions_, 0);
      values_.resize(slots * n_actions_ * n_quantiles_, 0.0);
    }
    if (!present_[id]) {
      present_[id] = 1;
      ++n_present_;
    }
  }

  std::size_t n_actions_;
  std::size_t n_quantiles_;
  std::shared_ptr<KeyIndex> index_;
  std::vector<double> zeros_;
  std::vector<double> values_;
  std::vector<std::uint32_t> visits_;
  std::vector<std::uint8_t> present_;
  std::size_t n_present_ = 0;
};

inline QTable sync_target(const QTable& table) { return table.snapshot(); }

/// One multi-agent transition. `active[i]` is false for agents that were
/// already eliminated; `agent_done[i]` marks the last transition an agent takes part in.
struct Transition {
  std::vector<ObsId> obs;
  std::vector<std::uint8_t> actions;
  double reward = 0.0;
  std::vector<ObsId> next_obs;
  bool done = false;
  std::vector<std::uint8_t> active;
  std::vector<std::uint8_t> agent_done;

  std::size_t n_agents() const noexcept { return obs.size(); }
  bool terminal_for(std::size_t agent) const { return done || agent_done[agent] != 0; }
};

/// FIFO ring of whole episodes, stored as flat per-agent columns.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t n_agents, std::size_t capacity_episodes)
      : n_agents_(n_agents), capacity_(capacity_episodes) {
    if (capacity_episodes == 0) throw UsageError("replay capacity must be positive");
  }

  std::size_t size() const noexcept { return rewards_.size(); }
  std::size_t episodes() const noexcept { return starts_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return rewards_.empty(); }

  void push(const Transition& t) {
    if (t.n_agents() != n_agents_ || t.actions.size() != n_agents_ ||
        t.next_obs.size() != n_agents_ || t.active.size() != n_agents_ ||
        t.agent_done.size() != n_agents_)
      throw UsageError("transition arity does not match the buffer");
    if (!std::isfinite(t.reward)) throw DomainError("transition reward is not finite");
    if (episode_open_ == false) {
      if (starts_.size() == capacity_) evict_oldest();
      starts_.push_back(base_ + rewards_.size());
      episode_open_ = true;
    }
    for (std::size_t i = 0; i < n_agents_; ++i) {
      obs_.push_back(t.obs[i]);
      next_obs_.push_back(t.next_obs[i]);
      actions_.push_back(t.actions[i]);
      flags_.push_back(static_cast<std::uint8_t>((t.active[i] ? 1 : 0) | (t.agent_done[i] ? 2 : 0)));
    }
    rewards_.push_back(t.reward);
    done_.push_back(t.done ? 1 : 0);
    if (t.done) episode_open_ = false;
  }

  Transition at(std::size_t i) const {
    Transition t;
    t.reward = rewards_.at(i);
    t.done = done_[i] != 0;
    const std::size_t o = i * n_agents_;
    t.obs.assign(obs_.begin() + static_cast<std::ptrdiff_t>(o),
                 obs_.begin() + static_cast<std::ptrdiff_t>(o + n_agents_));
    t.next_obs.assign(next_obs_.begin() + static_cast<std::ptrdiff_t>(o),
                      next_obs_.begin() + static_cast<std::ptrdiff_t>(o + n_agents_));
    t.actions.assign(actions_.begin() + static_cast<std::ptrdiff_t>(o),
                     actions_.begin() + static_cast<std::ptrdiff_t>(o + n_agents_));
    t.active.resize(n_agents_);
    t.agent_done.resize(n_agents_);
    for (std::size_t a = 0; a < n_agents_; ++a) {
      t.active[a] = flags_[o + a] & 1;
      t.agent_done[a] = (flags_[o + a] >> 1) & 1;
    }
    return t;
  }

  /// Uniform over stored transitions.
  template <class Rng>
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const {
    if (empty()) throw UsageError("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, size() - 1);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) out.push_back(at(pick(rng)));
    return out;
  }

  /// Uniform episode, then a uniform transition inside it.
  template <class Rng>
  std::vector<Transition> sample_by_episode(std::size_t batch, Rng& rng) const {
    if (empty()) throw UsageError("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick_ep(0, starts_.size() - 1);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t e = pick_ep(rng);
      const std::size_t begin = starts_[e] - base_;
      const std::size_t end = e + 1 < starts_.size() ? starts_[e + 1] - base_ : size();
      std::uniform_int_distribution<std::size_t> pick(begin, end - 1);
      out.push_back(at(pick(rng)));
    }
    return out;
  }

 private:
  void evict_oldest() {
    const std::size_t len = (starts_.size() > 1 ? starts_[1] : base_ + size()) - starts_[0];
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t a = 0; a < n_agents_; ++a) {
        obs_.pop_front();
        next_obs_.pop_front();
        actions_.pop_front();
        flags_.pop_front();
      }
      rewards_.pop_front();
      done_.pop_front();
    }
    base_ += len;
    starts_.pop_front();
  }

  std::size_t n_agents_;
  std::size_t capacity_;
  std::deque<ObsId> obs_;
  std::deque<ObsId> next_obs_;
  std::deque<std::uint8_t> actions_;
  std::deque<std::uint8_t> flags_;
  std::deque<double> rewards_;
  std::deque<std::uint8_t> done_;
  std::deque<std::size_t> starts_;  // absolute index of each episode's first transition
  std::size_t base_ = 0;            // absolute index of rewards_.front()
  bool episode_open_ = false;
};

/// Index of the maximum score; exact ties are broken uniformly with `rng`.
template <class Rng>
std::size_t argmax_random_tie(std::span<const double> scores, Rng& rng) {
  const double best = *std::max_element(scores.begin(), scores.end());
  std::size_t n_best = 0;
  for (double s : scores) n_best += s == best ? 1 : 0;
  if (n_best == 1)
    return static_cast<std::size_t>(std::find(scores.begin(), scores.end(), best) - scores.begin());
  std::uniform_int_distribution<std::size_t> pick(0, n_best - 1);
  std::size_t k = pick(rng);
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (scores[a] != best) continue;
    if (k-- == 0) return a;
  }
  return 0;
}

/// argmax_a of the interval mean of Z(obs, a).
template <class Rng>
std::size_t greedy_action(const QTable& table, ObsId obs, const RiskInterval& r, Rng& rng) {
  std::vector<double> scores(table.n_actions());
  for (std::size_t a = 0; a < scores.size(); ++a) scores[a] = range_mean(table.dist(obs, a), r);
  return argmax_random_tie(scores, rng);
}

/// Target quantiles reward + gamma * Pi_r Z_target(next, a'), a' greedy under r.
/// With stochastic_tau the next-state quantiles are read at fractions drawn from U[alpha, beta].
template <class Rng>
std::vector<double> td_target(double reward, bool terminal, ObsId next, const QTable& target,
                              const RiskInterval& r, const LearnerConfig& cfg, Rng& rng) {
  const std::size_t n = target.n_quantiles();
  std::vector<double> out(n, reward);
  if (terminal) return out;
  const std::size_t next_action = greedy_action(target, next, r, rng);
  const auto next_dist = target.dist(next, next_action);
  if (cfg.stochastic_tau) {
    std::uniform_real_distribution<double> u(r.alpha(), r.beta());
    for (std::size_t j = 0; j < n; ++j) {
      const double tau = r.width() > 0.0 ? u(rng) : r.alpha();
      out[j] = reward + cfg.gamma * inverse_cdf(next_dist, std::min(tau, 1.0));
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<double> projected(n);
  project_into(next_dist, r, projected);
  for (std::size_t j = 0; j < n; ++j) out[j] = reward + cfg.gamma * projected[j];
  return out;
}

template <class Rng>
std::vector<double> td_target(const Transition& t, std::size_t agent, const QTable& target,
                              const RiskInterval& r, const LearnerConfig& cfg, Rng& rng) {
  return td_target(t.reward, t.terminal_for(agent), t.next_obs[agent], target, r, cfg, rng);
}

/// Pairwise quantile Huber loss (1/N) sum_i sum_j rho_{tau_i}(target_j - theta_i) / N.
inline double quantile_pair_loss(std::span<const double> theta, std::span<const double> targets,
                                 double k) {
  const std::size_t n = theta.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = quantile_midpoint(i, n);
    for (double tj : targets) loss += huber_quantile_loss(tj - theta[i], tau, k);
  }
  return loss / static_cast<double>(n) / static_cast<double>(targets.size());
}

/// One gradient step of the pairwise quantile loss on Z(obs, action); returns the pre-update loss.
inline double qr_update(QTable& table, ObsId obs, std::size_t action,
                        std::span<const double> targets, const LearnerConfig& cfg) {
  const std::size_t n = table.n_quantiles();
  if (targets.size() != n) throw UsageError("qr_update: target length does not match N");
  auto theta = table.mutable_dist(obs, action);
  const double loss = quantile_pair_loss(theta, targets, cfg.huber_k);
  if (cfg.learning_rate == 0.0) return loss;
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  std::vector<double> step(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = quantile_midpoint(i, n);
    double g = 0.0;
    for (double tj : targets) g += huber_quantile_grad(tj - theta[i], tau, cfg.huber_k);
    step[i] = cfg.learning_rate * g * inv_n;
  }
  for (std::size_t i = 0; i < n; ++i) theta[i] -= step[i];
  std::sort(theta.begin(), theta.end());
  return loss;
}

}  // namespace roe
