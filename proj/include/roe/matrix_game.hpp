#pragma once

// One-step cooperative payoff game. Every agent sees the same (single)
// observation and the episode ends after one joint action.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "roe/quantile.hpp"

namespace roe::env {

struct MatrixGameSpec {
  std::size_t n_agents = 2;
  std::size_t n_actions = 3;
  std::vector<double> payoff;  // row-major over the joint action, agent 0 most significant

  std::size_t joint_index(std::span<const std::size_t> joint) const {
    if (joint.size() != n_agents) throw UsageError("joint action has the wrong arity");
    std::size_t idx = 0;
    for (std::size_t a : joint) {
      if (a >= n_actions) throw UsageError("action index out of range");
      idx = idx * n_actions + a;
    }
    return idx;
  }

  void validate() const {
    if (n_agents == 0 || n_actions == 0) throw UsageError("matrix game needs agents and actions");
    std::size_t cells = 1;
    for (std::size_t i = 0; i < n_agents; ++i) cells *= n_actions;
    if (payoff.size() != cells) throw UsageError("payoff tensor is not fully populated");
    for (double v : payoff)
      if (!std::isfinite(v)) throw DomainError("payoff entries must be finite");
  }

  friend bool operator==(const MatrixGameSpec&, const MatrixGameSpec&) = default;
};

/// Symmetric 2-agent, 3-action game: optimum 8 at (a1, a1); per-agent
/// marginal means under a uniform co-player are (-56, -30, -26), so
/// individually greedy agents settle on (a3, a3) for 5.
inline MatrixGameSpec matrix_default_spec() {
  return MatrixGameSpec{2, 3,
                        {8.0, -88.0, -88.0,  //
                         -88.0, -7.0, 5.0,   //
                         -88.0, 5.0, 5.0}};
}

struct MatrixStep {
  double team_reward = 0.0;
  bool done = true;
};

inline MatrixStep matrix_step(const MatrixGameSpec& spec, std::span<const std::size_t> joint) {
  return {spec.payoff[spec.joint_index(joint)], true};
}

/// Mean team reward of each of `agent`'s actions when every other agent plays uniformly.
inline std::vector<double> marginal_means(const MatrixGameSpec& spec, std::size_t agent) {
  std::vector<double> sums(spec.n_actions, 0.0);
  std::vector<std::size_t> counts(spec.n_actions, 0);
  std::vector<std::size_t> joint(spec.n_agents, 0);
  for (std::size_t cell = 0; cell < spec.payoff.size(); ++cell) {
    std::size_t rest = cell;
    for (std::size_t i = spec.n_agents; i-- > 0;) {
      joint[i] = rest % spec.n_actions;
      rest /= spec.n_actions;
    }
    sums[joint[agent]] += spec.payoff[cell];
    ++counts[joint[agent]];
  }
  for (std::size_t a = 0; a < spec.n_actions; ++a) sums[a] /= static_cast<double>(counts[a]);
  return sums;
}

}  // namespace roe::env
