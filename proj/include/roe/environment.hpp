#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "roe/matrix_game.hpp"
#include "roe/predator_prey.hpp"

namespace roe::env {

/// Matrix game as an episodic environment: one shared observation, one step per episode.
class MatrixEnv {
 public:
  explicit MatrixEnv(MatrixGameSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  std::size_t n_agents() const noexcept { return spec_.n_agents; }
  std::size_t n_actions() const noexcept { return spec_.n_actions; }
  const MatrixGameSpec& spec() const noexcept { return spec_; }

  std::vector<ObservationKey> reset(std::uint64_t /*episode_seed*/) {
    done_ = false;
    return std::vector<ObservationKey>(spec_.n_agents, kObservation);
  }

  StepResult step(std::span<const std::size_t> actions) {
    if (done_) throw UsageError("step called on a finished episode");
    StepResult res;
    res.team_reward = matrix_step(spec_, actions).team_reward;
    res.done = done_ = true;
    res.observations.assign(spec_.n_agents, kObservation);
    res.alive.assign(spec_.n_agents, true);
    return res;
  }

  std::uint64_t rng_draws() const noexcept { return 0; }

 private:
  inline static const ObservationKey kObservation = "M";
  MatrixGameSpec spec_;
  bool done_ = true;
};

using EnvSpec = std::variant<MatrixGameSpec, PredatorPreyConfig>;

class Environment {
 public:
  explicit Environment(const EnvSpec& spec) : impl_(make(spec)) {}

  std::size_t n_agents() const {
    return std::visit([](const auto& e) { return e.n_agents(); }, impl_);
  }
  std::size_t n_actions() const {
    if (const auto* m = std::get_if<MatrixEnv>(&impl_)) return m->n_actions();
    return kPpActions;
  }
  std::vector<ObservationKey> reset(std::uint64_t episode_seed) {
    return std::visit([&](auto& e) { return e.reset(episode_seed); }, impl_);
  }
  StepResult step(std::span<const std::size_t> actions) {
    return std::visit([&](auto& e) { return e.step(actions); }, impl_);
  }
  std::uint64_t rng_draws() const {
    return std::visit([](const auto& e) { return e.rng_draws(); }, impl_);
  }

 private:
  static std::variant<MatrixEnv, PredatorPrey> make(const EnvSpec& spec) {
    if (const auto* m = std::get_if<MatrixGameSpec>(&spec)) return MatrixEnv(*m);
    return PredatorPrey(std::get<PredatorPreyConfig>(spec));
  }

  std::variant<MatrixEnv, PredatorPrey> impl_;
};

}  // namespace roe::env
