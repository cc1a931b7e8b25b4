#pragma once

// Exact distributional dynamic programming on finite MDPs. Used to check the
// operator-level properties of interval projection: non-expansiveness, the
// gamma-contraction of T o Pi under a fixed policy, and the drift bound of the
// scheduled iteration Z_t = T o Pi_t (Z_{t-1}).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "roe/quantile.hpp"

namespace roe::dp {

struct RewardAtom {
  double value = 0.0;
  double prob = 0.0;
};

using RewardSupport = std::vector<RewardAtom>;

class FiniteMDP {
 public:
  FiniteMDP(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
            std::vector<RewardSupport> rewards, double gamma)
      : n_states_(n_states),
        n_actions_(n_actions),
        transition_(std::move(transition)),
        rewards_(std::move(rewards)),
        gamma_(gamma) {
    validate();
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double gamma() const noexcept { return gamma_; }

  double transition(std::size_t x, std::size_t a, std::size_t next) const {
    return transition_[(x * n_actions_ + a) * n_states_ + next];
  }
  std::span<const double> transition_row(std::size_t x, std::size_t a) const {
    return std::span<const double>(transition_).subspan((x * n_actions_ + a) * n_states_,
                                                        n_states_);
  }
  const RewardSupport& reward(std::size_t x, std::size_t a) const {
    return rewards_[x * n_actions_ + a];
  }

 private:
  void validate() const {
    if (n_states_ == 0 || n_actions_ == 0) throw UsageError("MDP needs states and actions");
    if (transition_.size() != n_states_ * n_actions_ * n_states_)
      throw UsageError("transition tensor has the wrong shape");
    if (rewards_.size() != n_states_ * n_actions_)
      throw UsageError("reward supports must cover every (state, action)");
    if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw DomainError("gamma must lie in [0, 1)");
    for (std::size_t x = 0; x < n_states_; ++x) {
      for (std::size_t a = 0; a < n_actions_; ++a) {
        double total = 0.0;
        for (double p : transition_row(x, a)) {
          if (p < 0.0) throw DomainError("negative transition probability");
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("transition row does not sum to 1");
        const auto& support = reward(x, a);
        if (support.empty()) throw UsageError("empty reward support");
        double mass = 0.0;
        for (const auto& atom : support) {
          if (atom.prob < 0.0 || !std::isfinite(atom.value))
            throw DomainError("invalid reward atom");
          mass += atom.prob;
        }
        if (std::abs(mass - 1.0) > 1e-12) throw DomainError("reward support does not sum to 1");
      }
    }
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<RewardSupport> rewards_;
  double gamma_;
};

/// Return-distribution function Z: one N-quantile distribution per (state, action).
class QuantileTable {
 public:
  QuantileTable(std::size_t n_states, std::size_t n_actions, std::size_t n_quantiles,
                double fill = 0.0)
      : n_states_(n_states),
        n_actions_(n_actions),
        n_quantiles_(n_quantiles),
        values_(n_states * n_actions * n_quantiles, fill) {
    if (n_quantiles == 0) throw UsageError("quantile table needs N >= 1");
  }

  static QuantileTable zeros(const FiniteMDP& mdp, std::size_t n_quantiles) {
    return QuantileTable(mdp.n_states(), mdp.n_actions(), n_quantiles);
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t n_quantiles() const noexcept { return n_quantiles_; }

  std::span<const double> at(std::size_t x, std::size_t a) const {
    return std::span<const double>(values_).subspan(offset(x, a), n_quantiles_);
  }
  QuantileDistribution distribution(std::size_t x, std::size_t a) const {
    const auto v = at(x, a);
    return QuantileDistribution(std::vector<double>(v.begin(), v.end()));
  }
  void set(std::size_t x, std::size_t a, const QuantileDistribution& d) {
    if (d.size() != n_quantiles_) throw UsageError("distribution size does not match table N");
    std::copy(d.values().begin(), d.values().end(), values_.begin() + offset(x, a));
  }

  bool same_shape(const QuantileTable& o) const {
    return n_states_ == o.n_states_ && n_actions_ == o.n_actions_ &&
           n_quantiles_ == o.n_quantiles_;
  }

  friend bool operator==(const QuantileTable&, const QuantileTable&) = default;

 private:
  std::size_t offset(std::size_t x, std::size_t a) const {
    return (x * n_actions_ + a) * n_quantiles_;
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  std::size_t n_quantiles_;
  std::vector<double> values_;
};

/// Next-action rule used inside a backup: greedy under the risk interval, or a fixed map.
class BackupPolicy {
 public:
  static BackupPolicy greedy() { return BackupPolicy(); }
  static BackupPolicy fixed(std::vector<std::size_t> action_for_state) {
    BackupPolicy p;
    p.fixed_ = std::move(action_for_state);
    return p;
  }

  bool is_fixed() const noexcept { return fixed_.has_value(); }

  std::size_t action(const QuantileTable& z, std::size_t state, const RiskInterval& r) const {
    if (fixed_) return (*fixed_).at(state);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < z.n_actions(); ++a) {
      const double score = range_mean(z.at(state, a), r);
      if (score > best_score) {
        best_score = score;
        best = a;
      }
    }
    return best;
  }

 private:
  std::optional<std::vector<std::size_t>> fixed_;
};

/// W1-optimal N-quantile compression: theta_i = F^{-1}((2i-1)/(2N)).
inline QuantileDistribution quantile_projection(std::vector<RewardAtom> support, std::size_t n) {
  if (support.empty()) throw UsageError("quantile_projection: empty support");
  if (n == 0) throw UsageError("quantile_projection: N must be positive");
  double mass = 0.0;
  for (const auto& atom : support) mass += atom.prob;
  if (std::abs(mass - 1.0) > 1e-9) throw DomainError("quantile_projection: probabilities must sum to 1");
  std::sort(support.begin(), support.end(),
            [](const RewardAtom& l, const RewardAtom& r) { return l.value < r.value; });
  std::vector<double> out(n);
  std::size_t j = 0;
  double cum = support[0].prob;
  for (std::size_t i = 0; i < n; ++i) {
    // inf{y : tau <= F(y)}; the slack absorbs rounding in the running sum.
    const double tau = quantile_midpoint(i, n) - 1e-12;
    while (cum < tau && j + 1 < support.size()) cum += support[++j].prob;
    out[i] = support[j].value;
  }
  return QuantileDistribution(std::move(out));
}

/// One backup of T o Pi_r at (x, a), compressed back to N quantiles.
inline QuantileDistribution bellman_backup(const FiniteMDP& mdp, const QuantileTable& z,
                                           std::size_t x, std::size_t a,
                                           const BackupPolicy& policy, const RiskInterval& r) {
  const std::size_t n = z.n_quantiles();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& reward = mdp.reward(x, a);
  const auto row = mdp.transition_row(x, a);
  std::vector<RewardAtom> atoms;
  atoms.reserve(n * reward.size() * mdp.n_states());
  std::vector<double> projected(n);
  for (std::size_t next = 0; next < mdp.n_states(); ++next) {
    const double p_next = row[next];
    if (p_next <= 0.0) continue;
    const std::size_t next_action = policy.action(z, next, r);
    project_into(z.at(next, next_action), r, projected);
    for (const auto& ra : reward) {
      if (ra.prob <= 0.0) continue;
      const double w = p_next * ra.prob * inv_n;
      for (double theta : projected) atoms.push_back({ra.value + mdp.gamma() * theta, w});
    }
  }
  return quantile_projection(std::move(atoms), n);
}

inline QuantileTable apply_operator(const FiniteMDP& mdp, const QuantileTable& z,
                                    const BackupPolicy& policy, const RiskInterval& r) {
  QuantileTable out(z.n_states(), z.n_actions(), z.n_quantiles());
  for (std::size_t x = 0; x < z.n_states(); ++x)
    for (std::size_t a = 0; a < z.n_actions(); ++a)
      out.set(x, a, bellman_backup(mdp, z, x, a, policy, r));
  return out;
}

/// d-bar-infinity: sup over (x, a) of W_inf between compressed entries.
inline double table_distance(const QuantileTable& z1, const QuantileTable& z2) {
  if (!z1.same_shape(z2)) throw UsageError("table_distance: shape mismatch");
  double worst = 0.0;
  for (std::size_t x = 0; x < z1.n_states(); ++x)
    for (std::size_t a = 0; a < z1.n_actions(); ++a)
      worst = std::max(worst, wasserstein_inf(z1.at(x, a), z2.at(x, a)));
  return worst;
}

struct NonConvergence : std::runtime_error {
  NonConvergence(double last, std::size_t iters)
      : std::runtime_error("fixed point did not converge within " + std::to_string(iters) +
                           " iterations (last change " + std::to_string(last) + ")"),
        last_distance(last),
        iterations(iters) {}
  double last_distance;
  std::size_t iterations;
};

struct FixedPointOptions {
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  std::size_t n_quantiles = 32;
};

struct FixedPointResult {
  QuantileTable table;
  std::size_t iterations;
};

inline FixedPointResult fixed_point(const FiniteMDP& mdp, const BackupPolicy& policy,
                                    const RiskInterval& r, const FixedPointOptions& opt,
                                    std::optional<QuantileTable> start = std::nullopt) {
  if (!(opt.tol > 0.0)) throw DomainError("fixed_point: tol must be positive");
  QuantileTable z = start ? std::move(*start) : QuantileTable::zeros(mdp, opt.n_quantiles);
  double change = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    QuantileTable next = apply_operator(mdp, z, policy, r);
    change = table_distance(next, z);
    z = std::move(next);
    if (change < opt.tol) return {std::move(z), it};
  }
  throw NonConvergence(change, opt.max_iter);
}

// ---------------------------------------------------------------------------
// Random instances for the property battery.

inline std::vector<double> dirichlet_ones(std::size_t k, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& v : w) total += (v = g(rng));
  for (auto& v : w) v /= total;
  // Push the rounding residue onto the largest entry so rows sum to 1 tightly.
  const auto largest = std::max_element(w.begin(), w.end());
  double sum = 0.0;
  for (double v : w) sum += v;
  *largest += 1.0 - sum;
  return w;
}

inline FiniteMDP random_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions,
                            double gamma) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> reward_value(-1.0, 1.0);
  std::uniform_int_distribution<int> support_size(1, 3);
  std::vector<double> transition;
  transition.reserve(n_states * n_actions * n_states);
  std::vector<RewardSupport> rewards;
  for (std::size_t x = 0; x < n_states; ++x) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      auto row = dirichlet_ones(n_states, rng);
      transition.insert(transition.end(), row.begin(), row.end());
      const auto k = static_cast<std::size_t>(support_size(rng));
      auto probs = dirichlet_ones(k, rng);
      RewardSupport support;
      for (std::size_t i = 0; i < k; ++i) support.push_back({reward_value(rng), probs[i]});
      rewards.push_back(std::move(support));
    }
  }
  return FiniteMDP(n_states, n_actions, std::move(transition), std::move(rewards), gamma);
}

/// Seeded MDP with 2-5 states, 1-3 actions and gamma drawn from {0.5, 0.9, 0.99}.
inline FiniteMDP random_mdp(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  constexpr double gammas[] = {0.5, 0.9, 0.99};
  const auto n_states = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
  const auto n_actions = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  const double gamma = gammas[std::uniform_int_distribution<int>(0, 2)(rng)];
  return random_mdp(seed, n_states, n_actions, gamma);
}

inline QuantileTable random_table(std::size_t n_states, std::size_t n_actions,
                                  std::size_t n_quantiles, std::mt19937_64& rng,
                                  double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  QuantileTable z(n_states, n_actions, n_quantiles);
  std::vector<double> v(n_quantiles);
  for (std::size_t x = 0; x < n_states; ++x) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      for (auto& e : v) e = u(rng);
      z.set(x, a, QuantileDistribution::from_unsorted(v));
    }
  }
  return z;
}

inline BackupPolicy random_fixed_policy(const FiniteMDP& mdp, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, mdp.n_actions() - 1);
  std::vector<std::size_t> act(mdp.n_states());
  for (auto& a : act) a = pick(rng);
  return BackupPolicy::fixed(std::move(act));
}

inline RiskInterval random_interval(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double a = u(rng), b = u(rng);
  if (a > b) std::swap(a, b);
  return {a, b};
}

// ---------------------------------------------------------------------------
// Checks. Violations are reported, never thrown.

struct NonexpansiveReport {
  std::size_t trials = 0;
  double max_ratio = 0.0;
  double max_slack = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  bool pass() const { return violations == 0; }
};

/// Random quantile pairs and intervals: W_inf(Pi d1, Pi d2) <= W_inf(d1, d2).
inline NonexpansiveReport check_nonexpansive(std::size_t trials, std::uint64_t seed,
                                             std::size_t n_quantiles, double slack_tol = 1e-12) {
  std::mt19937_64 rng(seed);
  NonexpansiveReport rep;
  std::vector<double> v1(n_quantiles), v2(n_quantiles);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (std::size_t t = 0; t < trials; ++t) {
    for (auto& e : v1) e = u(rng);
    for (auto& e : v2) e = u(rng);
    const auto d1 = QuantileDistribution::from_unsorted(v1);
    const auto d2 = QuantileDistribution::from_unsorted(v2);
    const auto r = random_interval(rng);
    const double before = wasserstein_inf(d1, d2);
    const double after = wasserstein_inf(project(d1, r), project(d2, r));
    const double slack = after - before;
    rep.max_slack = std::max(rep.max_slack, slack);
    if (before > 0.0) rep.max_ratio = std::max(rep.max_ratio, after / before);
    if (slack > slack_tol) ++rep.violations;
    ++rep.trials;
  }
  return rep;
}

struct ContractionReport {
  std::size_t trials = 0;
  double gamma = 0.0;
  double max_ratio = 0.0;
  double max_slack = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  bool pass() const { return violations == 0; }
};

/// For random table pairs: d(TZ1, TZ2) <= gamma d(Z1, Z2) + 1e-9, T = T o Pi_r under a fixed policy.
inline ContractionReport check_contraction(const FiniteMDP& mdp, const BackupPolicy& policy,
                                           std::size_t trials, std::uint64_t seed,
                                           const RiskInterval& r = RiskInterval::neutral(),
                                           std::size_t n_quantiles = 32) {
  if (!policy.is_fixed()) throw UsageError("check_contraction requires a fixed policy");
  std::mt19937_64 rng(seed);
  ContractionReport rep;
  rep.gamma = mdp.gamma();
  for (std::size_t t = 0; t < trials; ++t) {
    const auto z1 = random_table(mdp.n_states(), mdp.n_actions(), n_quantiles, rng);
    const auto z2 = random_table(mdp.n_states(), mdp.n_actions(), n_quantiles, rng);
    const double before = table_distance(z1, z2);
    const double after = table_distance(apply_operator(mdp, z1, policy, r),
                                        apply_operator(mdp, z2, policy, r));
    const double slack = after - mdp.gamma() * before;
    rep.max_slack = std::max(rep.max_slack, slack);
    if (before > 0.0) rep.max_ratio = std::max(rep.max_ratio, after / before);
    if (slack > 1e-9) ++rep.violations;
    ++rep.trials;
  }
  return rep;
}

using RiskSchedulePlan = std::vector<RiskInterval>;

struct ScheduleBoundStep {
  std::size_t t = 0;
  double lhs = 0.0;  // d(Z_t, Z*_t)
  double rhs = 0.0;  // weighted neighbour distances plus gamma^t d(Z_0, Z*_1)
};

struct ScheduleBoundReport {
  std::vector<ScheduleBoundStep> steps;
  double allowed_slack = 0.0;
  double max_slack = -std::numeric_limits<double>::infinity();
  std::size_t fixed_points_solved = 0;
  bool pass() const { return max_slack <= allowed_slack; }
};

/// Runs the scheduled iteration from z0 and checks the drift bound against
/// the per-interval fixed points at every step.
inline ScheduleBoundReport check_schedule_bound(const FiniteMDP& mdp, const RiskSchedulePlan& plan,
                                                 const QuantileTable& z0,
                                                 const BackupPolicy& policy, double tol,
                                                 FixedPointOptions fp = {}) {
  if (plan.empty()) throw UsageError("check_schedule_bound: empty schedule");
  if (!policy.is_fixed()) throw UsageError("check_schedule_bound requires a fixed policy");
  fp.n_quantiles = z0.n_quantiles();
  const double gamma = mdp.gamma();

  // Fixed points are shared between repeated intervals.
  std::map<std::pair<double, double>, QuantileTable> cache;
  std::vector<const QuantileTable*> star(plan.size());
  ScheduleBoundReport rep;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto key = std::make_pair(plan[i].alpha(), plan[i].beta());
    auto it = cache.find(key);
    if (it == cache.end()) {
      // Warm start from the previous interval's solution; neighbours are close.
      std::optional<QuantileTable> start;
      if (i > 0) start = *star[i - 1];
      it = cache.emplace(key, fixed_point(mdp, policy, plan[i], fp, std::move(start)).table).first;
      ++rep.fixed_points_solved;
    }
    star[i] = &it->second;
  }

  // A solve stopped at change < tol sits within tol * gamma / (1 - gamma) of the
  // true fixed point; every term of the bound can inherit that error.
  const double solver_err = fp.tol * gamma / (1.0 - gamma);
  rep.allowed_slack = tol + solver_err * (2.0 + 2.0 / (1.0 - gamma));

  std::vector<double> neighbour(plan.size(), 0.0);  // d(Z*_i, Z*_{i+1}), zero-based i
  for (std::size_t i = 0; i + 1 < plan.size(); ++i)
    neighbour[i] = table_distance(*star[i], *star[i + 1]);
  const double d0 = table_distance(z0, *star[0]);

  QuantileTable z = z0;
  for (std::size_t t = 1; t <= plan.size(); ++t) {
    z = apply_operator(mdp, z, policy, plan[t - 1]);
    ScheduleBoundStep step;
    step.t = t;
    step.lhs = table_distance(z, *star[t - 1]);
    double rhs = std::pow(gamma, static_cast<double>(t)) * d0;
    for (std::size_t i = 1; i < t; ++i)
      rhs += std::pow(gamma, static_cast<double>(t - i)) * neighbour[i - 1];
    step.rhs = rhs;
    rep.max_slack = std::max(rep.max_slack, step.lhs - step.rhs);
    rep.steps.push_back(step);
  }
  return rep;
}

}  // namespace roe::dp
