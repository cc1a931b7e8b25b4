#pragma once

// Exploration policies: epsilon-greedy, DLTV, static risk intervals, and risk
// scheduling (scalar risk level, or the two-phase alpha-then-beta schedule).
//
// A policy is evaluated once per environment step into a StepContext; every
// agent selects its action from that same context, so under a risk schedule
// all agents share one interval at every step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "roe/learner.hpp"
#include "roe/quantile.hpp"

namespace roe {

struct EpsilonSchedule {
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::uint64_t anneal_steps = 50000;

  void validate() const {
    if (!(0.0 <= eps_end && eps_end <= eps_start && eps_start <= 1.0))
      throw DomainError("epsilon schedule requires 0 <= eps_end <= eps_start <= 1");
    if (anneal_steps < 1) throw UsageError("epsilon anneal_steps must be >= 1");
  }
};

inline double epsilon_at(const EpsilonSchedule& s, std::uint64_t t) {
  if (t >= s.anneal_steps) return s.eps_end;
  const double frac = static_cast<double>(t) / static_cast<double>(s.anneal_steps);
  return s.eps_start + (s.eps_end - s.eps_start) * frac;
}

/// Linear risk-level schedule from omega_0 to omega_k over k steps.
struct RoeSchedule {
  double omega_0 = 1.0;
  double omega_k = 0.0;
  std::uint64_t k = 10000;

  void validate() const {
    RiskLevel{omega_0};
    RiskLevel{omega_k};
    if (k < 1) throw UsageError("risk schedule needs k >= 1");
  }
  double step_size() const { return (omega_0 - omega_k) / static_cast<double>(k); }
};

inline double roe_level_at(const RoeSchedule& s, std::uint64_t t) {
  if (t >= s.k) return s.omega_k;
  if (t == 0) return s.omega_0;
  const double w = s.omega_0 + (s.omega_k - s.omega_0) * (static_cast<double>(t) / static_cast<double>(s.k));
  return std::clamp(w, -1.0, 1.0);
}

inline RiskInterval roe_interval_at(const RoeSchedule& s, std::uint64_t t) {
  return risk_level_to_interval(roe_level_at(s, t));
}

/// (alpha0, 1) -> (0, 1) -> (0, beta_final). The k steps are split between the
/// two phases in proportion to how far each parameter travels.
struct TwoPhaseSchedule {
  double alpha_start = 0.99;
  double beta_final = 1.0;  // 0.25 for the averse target, 1.0 leaves phase 2 empty
  std::uint64_t k = 100000;

  void validate() const {
    RiskInterval{alpha_start, 1.0};
    RiskInterval{0.0, beta_final};
    if (k < 1) throw UsageError("two-phase schedule needs k >= 1");
  }

  std::uint64_t phase1_steps() const {
    const double d1 = alpha_start;
    const double d2 = 1.0 - beta_final;
    if (d1 + d2 == 0.0) return k;
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(k) * d1 / (d1 + d2)));
  }
};

inline RiskInterval two_phase_interval_at(const TwoPhaseSchedule& s, std::uint64_t t) {
  if (t >= s.k) return {0.0, s.beta_final};
  const std::uint64_t p1 = s.phase1_steps();
  if (t < p1) {
    const double frac = static_cast<double>(p1 - t) / static_cast<double>(p1);
    return {s.alpha_start * frac, 1.0};
  }
  const std::uint64_t p2 = s.k - p1;
  const double frac = static_cast<double>(t - p1) / static_cast<double>(p2);
  return {0.0, 1.0 - (1.0 - s.beta_final) * frac};
}

struct DltvConfig {
  double c = 50.0;
  void validate() const {
    if (!(c >= 0.0)) throw DomainError("dltv.c must be >= 0");
  }
};

/// Decaying bonus coefficient c * sqrt(log t / t), with t floored at 2.
inline double dltv_coefficient(const DltvConfig& cfg, std::uint64_t t) {
  const double tt = static_cast<double>(std::max<std::uint64_t>(t, 2));
  return cfg.c * std::sqrt(std::log(tt) / tt);
}

// ---------------------------------------------------------------------------
// Selectors.

template <class Rng>
std::size_t uniform_action(std::size_t n_actions, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n_actions - 1);
  return pick(rng);
}

template <class Rng>
std::size_t select_epsilon_greedy_at(const QTable& table, ObsId obs, double eps, Rng& rng) {
  std::bernoulli_distribution explore(eps);
  if (explore(rng)) return uniform_action(table.n_actions(), rng);
  return greedy_action(table, obs, RiskInterval::neutral(), rng);
}

template <class Rng>
std::size_t select_epsilon_greedy(const QTable& table, ObsId obs, std::uint64_t t,
                                  const EpsilonSchedule& s, Rng& rng) {
  return select_epsilon_greedy_at(table, obs, epsilon_at(s, t), rng);
}

template <class Rng>
std::size_t select_dltv_with(const QTable& table, ObsId obs, double coefficient, Rng& rng) {
  std::vector<double> scores(table.n_actions());
  for (std::size_t a = 0; a < scores.size(); ++a) {
    const auto d = table.dist(obs, a);
    scores[a] = mean(d) + coefficient * std::sqrt(left_truncated_variance(d));
  }
  return argmax_random_tie(scores, rng);
}

template <class Rng>
std::size_t select_dltv(const QTable& table, ObsId obs, std::uint64_t t, const DltvConfig& cfg,
                        Rng& rng) {
  return select_dltv_with(table, obs, dltv_coefficient(cfg, t), rng);
}

template <class Rng>
std::size_t select_static_risk(const QTable& table, ObsId obs, const RiskInterval& r, Rng& rng) {
  return greedy_action(table, obs, r, rng);
}

template <class Rng>
std::size_t select_roe(const QTable& table, ObsId obs, std::uint64_t t, const RoeSchedule& s,
                       Rng& rng) {
  return greedy_action(table, obs, roe_interval_at(s, t), rng);
}

template <class Rng>
std::size_t select_roe(const QTable& table, ObsId obs, std::uint64_t t, const TwoPhaseSchedule& s,
                       Rng& rng) {
  return greedy_action(table, obs, two_phase_interval_at(s, t), rng);
}

// ---------------------------------------------------------------------------
// Policy value type used by the training loop.

struct EpsilonGreedyPolicy {
  EpsilonSchedule schedule;
};
struct DltvPolicy {
  DltvConfig config;
};
struct StaticRiskPolicy {
  RiskInterval interval = presets::neutral();
};
struct RoeScalarPolicy {
  RoeSchedule schedule;
};
struct RoeTwoPhasePolicy {
  TwoPhaseSchedule schedule;
};

using PolicySpec =
    std::variant<EpsilonGreedyPolicy, DltvPolicy, StaticRiskPolicy, RoeScalarPolicy, RoeTwoPhasePolicy>;

inline const char* policy_type_name(const PolicySpec& p) {
  constexpr const char* names[] = {"epsilon_greedy", "dltv", "static_risk", "roe_scalar",
                                   "roe_two_phase"};
  return names[p.index()];
}

/// Everything agents need to act at step t.
struct StepContext {
  std::uint64_t t = 0;
  RiskInterval interval;     // scoring interval; also the TD projection interval
  double epsilon = 0.0;      // epsilon-greedy only
  double dltv_coef = 0.0;    // DLTV only
  bool uses_epsilon = false;
};

inline StepContext step_context(const PolicySpec& policy, std::uint64_t t) {
  StepContext ctx;
  ctx.t = t;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, EpsilonGreedyPolicy>) {
          ctx.epsilon = epsilon_at(p.schedule, t);
          ctx.uses_epsilon = true;
        } else if constexpr (std::is_same_v<P, DltvPolicy>) {
          ctx.dltv_coef = dltv_coefficient(p.config, t);
        } else if constexpr (std::is_same_v<P, StaticRiskPolicy>) {
          ctx.interval = p.interval;
        } else if constexpr (std::is_same_v<P, RoeScalarPolicy>) {
          ctx.interval = roe_interval_at(p.schedule, t);
        } else {
          ctx.interval = two_phase_interval_at(p.schedule, t);
        }
      },
      policy);
  return ctx;
}

template <class Rng>
std::size_t select_action(const PolicySpec& policy, const StepContext& ctx, const QTable& table,
                          ObsId obs, Rng& rng) {
  if (std::holds_alternative<EpsilonGreedyPolicy>(policy))
    return select_epsilon_greedy_at(table, obs, ctx.epsilon, rng);
  if (std::holds_alternative<DltvPolicy>(policy)) return select_dltv_with(table, obs, ctx.dltv_coef, rng);
  return greedy_action(table, obs, ctx.interval, rng);
}

inline void validate_policy(const PolicySpec& policy) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, EpsilonGreedyPolicy>) p.schedule.validate();
        else if constexpr (std::is_same_v<P, DltvPolicy>) p.config.validate();
        else if constexpr (std::is_same_v<P, RoeScalarPolicy>) p.schedule.validate();
        else if constexpr (std::is_same_v<P, RoeTwoPhasePolicy>) p.schedule.validate();
      },
      policy);
}

}  // namespace roe
