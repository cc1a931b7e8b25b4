#pragma once

// Predator & Prey grid world with the Hare variant.
//
// Step order: predator moves (agent-index order, "up" slips to "stay" with
// slip_prob), then prey and hares take random legal moves, then captures are
// resolved on the resulting positions. Two predators capturing the same prey
// earn pair_capture_reward and are removed together with the prey; a lone
// captor earns solo_capture_penalty and the prey survives. With three or more
// captors the two lowest-indexed predators make the pair capture and the
// rest are penalised. A capture with no adjacent prey takes an adjacent hare
// for hare_reward.
//
// Observation symbols (one byte per cell, row-major window):
//   '.' empty   '#' wall / outside the grid   'P' predator
//   'Y' prey    'H' hare                      '@' the observing predator

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "roe/quantile.hpp"
#include "roe/rng.hpp"

namespace roe::env {

enum class PpAction : std::uint8_t { up = 0, down, left, right, stay, capture };
inline constexpr std::size_t kPpActions = 6;

enum class Cell : char {
  empty = '.',
  wall = '#',
  predator = 'P',
  prey = 'Y',
  hare = 'H',
  self = '@',
};

struct PredatorPreyConfig {
  int width = 10;
  int height = 10;
  std::size_t n_predators = 8;
  std::size_t n_prey = 8;
  std::size_t n_hares = 0;
  double pair_capture_reward = 10.0;
  double solo_capture_penalty = -2.0;
  double hare_reward = 1.0;
  double slip_prob = 0.1;
  int obs_radius = 2;
  int max_steps = 200;
  bool solo_capture_removes_prey = false;
  bool hare_pair_capture = false;  // two captors on a hare earn 2 * hare_reward

  void validate() const {
    if (width <= 0 || height <= 0) throw UsageError("grid dimensions must be positive");
    if (!(slip_prob >= 0.0 && slip_prob <= 1.0)) throw DomainError("slip_prob must lie in [0, 1]");
    if (obs_radius < 1) throw UsageError("obs_radius must be at least 1");
    if (max_steps < 1) throw UsageError("max_steps must be at least 1");
    if (n_predators == 0) throw UsageError("at least one predator is required");
    const auto cells = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (n_predators + n_prey + n_hares > cells)
      throw UsageError("grid too small to place all entities");
  }

  friend bool operator==(const PredatorPreyConfig&, const PredatorPreyConfig&) = default;
};

struct GridPos {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct Observation {
  int radius = 2;
  std::vector<Cell> cells;  // (2r+1)^2, row-major
  friend bool operator==(const Observation&, const Observation&) = default;
};

using ObservationKey = std::string;

inline ObservationKey encode_observation(const Observation& w) {
  const auto side = static_cast<std::size_t>(2 * w.radius + 1);
  if (w.cells.size() != side * side) throw UsageError("observation window has the wrong size");
  ObservationKey key(w.cells.size(), '\0');
  for (std::size_t i = 0; i < w.cells.size(); ++i) key[i] = static_cast<char>(w.cells[i]);
  return key;
}

inline Observation decode_observation(const ObservationKey& key, int radius) {
  const auto side = static_cast<std::size_t>(2 * radius + 1);
  if (key.size() != side * side) throw UsageError("observation key has the wrong size");
  Observation w{radius, {}};
  w.cells.reserve(key.size());
  for (char c : key) {
    switch (c) {
      case '.': case '#': case 'P': case 'Y': case 'H': case '@':
        w.cells.push_back(static_cast<Cell>(c));
        break;
      default:
        throw UsageError("observation key contains an unknown symbol");
    }
  }
  return w;
}

struct CaptureInfo {
  int pair = 0;
  int solo = 0;
  int hare = 0;
  int hare_pair = 0;

  CaptureInfo& operator+=(const CaptureInfo& o) {
    pair += o.pair;
    solo += o.solo;
    hare += o.hare;
    hare_pair += o.hare_pair;
    return *this;
  }
  friend bool operator==(const CaptureInfo&, const CaptureInfo&) = default;
};

struct PpState {
  std::vector<GridPos> predators;
  std::vector<bool> predator_alive;
  std::vector<GridPos> prey;
  std::vector<bool> prey_alive;
  std::vector<GridPos> hares;
  std::vector<bool> hare_alive;
  int step = 0;
  bool done = false;

  friend bool operator==(const PpState&, const PpState&) = default;
};

struct StepResult {
  std::vector<ObservationKey> observations;
  double team_reward = 0.0;
  bool done = false;
  CaptureInfo info;
  std::vector<bool> alive;  // predators still on the grid after this step
};

class PredatorPrey {
 public:
  explicit PredatorPrey(PredatorPreyConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    occupancy_.assign(static_cast<std::size_t>(cfg_.width * cfg_.height), Cell::empty);
  }

  const PredatorPreyConfig& config() const noexcept { return cfg_; }
  const PpState& state() const noexcept { return state_; }
  std::uint64_t rng_draws() const noexcept { return rng_.draws(); }
  std::size_t n_agents() const noexcept { return cfg_.n_predators; }

  /// Places all entities on distinct uniformly random cells.
  std::vector<ObservationKey> reset(std::uint64_t episode_seed) {
    rng_.seed(episode_seed);
    const std::size_t cells = occupancy_.size();
    const std::size_t total = cfg_.n_predators + cfg_.n_prey + cfg_.n_hares;
    std::vector<int> order(cells);
    for (std::size_t i = 0; i < cells; ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < total; ++i) {  // partial Fisher-Yates
      std::uniform_int_distribution<std::size_t> pick(i, cells - 1);
      std::swap(order[i], order[pick(rng_)]);
    }
    auto to_pos = [&](int idx) { return GridPos{idx % cfg_.width, idx / cfg_.width}; };
    PpState s;
    std::size_t next = 0;
    for (std::size_t i = 0; i < cfg_.n_predators; ++i) s.predators.push_back(to_pos(order[next++]));
    for (std::size_t i = 0; i < cfg_.n_prey; ++i) s.prey.push_back(to_pos(order[next++]));
    for (std::size_t i = 0; i < cfg_.n_hares; ++i) s.hares.push_back(to_pos(order[next++]));
    s.predator_alive.assign(cfg_.n_predators, true);
    s.prey_alive.assign(cfg_.n_prey, true);
    s.hare_alive.assign(cfg_.n_hares, true);
    set_state(std::move(s));
    return observations();
  }

  /// Replaces the state wholesale (tests and replays); frozen windows are refreshed.
  void set_state(PpState s) {
    if (s.predators.size() != cfg_.n_predators || s.prey.size() != cfg_.n_prey ||
        s.hares.size() != cfg_.n_hares)
      throw UsageError("state does not match the configured entity counts");
    state_ = std::move(s);
    rebuild_occupancy();
    frozen_.assign(cfg_.n_predators, {});
    for (std::size_t i = 0; i < cfg_.n_predators; ++i)
      if (state_.predator_alive[i]) frozen_[i] = window_key(state_.predators[i]);
  }

  std::vector<ObservationKey> observations() const {
    std::vector<ObservationKey> out(cfg_.n_predators);
    for (std::size_t i = 0; i < cfg_.n_predators; ++i)
      out[i] = state_.predator_alive[i] ? window_key(state_.predators[i]) : frozen_[i];
    return out;
  }

  Observation window(GridPos center) const {
    const int r = cfg_.obs_radius;
    Observation w{r, {}};
    w.cells.reserve(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const GridPos p{center.x + dx, center.y + dy};
        if (dx == 0 && dy == 0) w.cells.push_back(Cell::self);
        else if (!inside(p)) w.cells.push_back(Cell::wall);
        else w.cells.push_back(occupancy_[index(p)]);
      }
    }
    return w;
  }

  StepResult step(std::span<const std::size_t> actions) {
    if (state_.done) throw UsageError("step called on a finished episode");
    if (actions.size() != cfg_.n_predators) throw UsageError("joint action has the wrong arity");
    for (std::size_t a : actions)
      if (a >= kPpActions) throw UsageError("predator action index out of range");

    move_predators(actions);
    move_critters(state_.prey, state_.prey_alive);
    move_critters(state_.hares, state_.hare_alive);

    StepResult res;
    res.team_reward = resolve_captures(actions, res.info);

    ++state_.step;
    std::size_t prey_left = 0;
    for (bool b : state_.prey_alive) prey_left += b ? 1 : 0;
    state_.done = prey_left == 0 || state_.step >= cfg_.max_steps;

    res.done = state_.done;
    res.observations = observations();
    res.alive = state_.predator_alive;
    return res;
  }

 private:
  static constexpr std::array<GridPos, 4> kMoves{{{0, -1}, {0, 1}, {-1, 0}, {1, 0}}};

  bool inside(GridPos p) const {
    return p.x >= 0 && p.y >= 0 && p.x < cfg_.width && p.y < cfg_.height;
  }
  std::size_t index(GridPos p) const {
    return static_cast<std::size_t>(p.y * cfg_.width + p.x);
  }

  ObservationKey window_key(GridPos p) const { return encode_observation(window(p)); }

  void rebuild_occupancy() {
    std::fill(occupancy_.begin(), occupancy_.end(), Cell::empty);
    auto mark = [&](const std::vector<GridPos>& ps, const std::vector<bool>& alive, Cell c) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!alive[i]) continue;
        if (!inside(ps[i]) || occupancy_[index(ps[i])] != Cell::empty)
          throw UsageError("entities must occupy distinct cells inside the grid");
        occupancy_[index(ps[i])] = c;
      }
    };
    mark(state_.predators, state_.predator_alive, Cell::predator);
    mark(state_.prey, state_.prey_alive, Cell::prey);
    mark(state_.hares, state_.hare_alive, Cell::hare);
  }

  void move_predators(std::span<const std::size_t> actions) {
    std::bernoulli_distribution slip(cfg_.slip_prob);
    for (std::size_t i = 0; i < cfg_.n_predators; ++i) {
      if (!state_.predator_alive[i]) continue;
      auto act = static_cast<PpAction>(actions[i]);
      if (act == PpAction::up && slip(rng_)) act = PpAction::stay;
      if (act == PpAction::stay || act == PpAction::capture) continue;
      const GridPos d = kMoves[static_cast<std::size_t>(act)];
      const GridPos from = state_.predators[i];
      const GridPos to{from.x + d.x, from.y + d.y};
      if (!inside(to) || occupancy_[index(to)] != Cell::empty) continue;
      occupancy_[index(from)] = Cell::empty;
      occupancy_[index(to)] = Cell::predator;
      state_.predators[i] = to;
    }
  }

  void move_critters(std::vector<GridPos>& pos, const std::vector<bool>& alive) {
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (!alive[i]) continue;
      const GridPos from = pos[i];
      std::array<GridPos, 5> options{};
      std::size_t n = 0;
      options[n++] = from;
      for (const auto& d : kMoves) {
        const GridPos to{from.x + d.x, from.y + d.y};
        if (inside(to) && occupancy_[index(to)] == Cell::empty) options[n++] = to;
      }
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      const GridPos to = options[pick(rng_)];
      if (to == from) continue;
      const Cell kind = occupancy_[index(from)];
      occupancy_[index(from)] = Cell::empty;
      occupancy_[index(to)] = kind;
      pos[i] = to;
    }
  }

  // Lowest-cell-index entity of `kind` adjacent to p, or -1.
  int adjacent_target(GridPos p, const std::vector<GridPos>& pos, const std::vector<bool>& alive) const {
    int best = -1;
    std::size_t best_cell = 0;
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (!alive[j]) continue;
      const int dist = std::abs(pos[j].x - p.x) + std::abs(pos[j].y - p.y);
      if (dist != 1) continue;
      const std::size_t cell = index(pos[j]);
      if (best < 0 || cell < best_cell) {
        best = static_cast<int>(j);
        best_cell = cell;
      }
    }
    return best;
  }

  double resolve_captures(std::span<const std::size_t> actions, CaptureInfo& info) {
    std::vector<std::vector<std::size_t>> prey_captors(state_.prey.size());
    std::vector<std::vector<std::size_t>> hare_captors(state_.hares.size());
    for (std::size_t i = 0; i < cfg_.n_predators; ++i) {
      if (!state_.predator_alive[i] || static_cast<PpAction>(actions[i]) != PpAction::capture)
        continue;
      const GridPos p = state_.predators[i];
      if (int t = adjacent_target(p, state_.prey, state_.prey_alive); t >= 0)
        prey_captors[static_cast<std::size_t>(t)].push_back(i);
      else if (int h = adjacent_target(p, state_.hares, state_.hare_alive); h >= 0)
        hare_captors[static_cast<std::size_t>(h)].push_back(i);
    }

    double reward = 0.0;
    for (std::size_t j = 0; j < prey_captors.size(); ++j) {
      const auto& captors = prey_captors[j];  // already in ascending agent order
      if (captors.empty()) continue;
      if (captors.size() == 1) {
        reward += cfg_.solo_capture_penalty;
        ++info.solo;
        if (cfg_.solo_capture_removes_prey) remove_prey(j);
        continue;
      }
      reward += cfg_.pair_capture_reward;
      ++info.pair;
      remove_prey(j);
      remove_predator(captors[0]);
      remove_predator(captors[1]);
      for (std::size_t extra = 2; extra < captors.size(); ++extra) {
        reward += cfg_.solo_capture_penalty;
        ++info.solo;
      }
    }
    for (std::size_t h = 0; h < hare_captors.size(); ++h) {
      if (hare_captors[h].empty()) continue;
      if (cfg_.hare_pair_capture && hare_captors[h].size() >= 2) {
        reward += 2.0 * cfg_.hare_reward;
        ++info.hare_pair;
      } else {
        reward += cfg_.hare_reward;
        ++info.hare;
      }
      state_.hare_alive[h] = false;
      occupancy_[index(state_.hares[h])] = Cell::empty;
    }
    return reward;
  }

  void remove_prey(std::size_t j) {
    state_.prey_alive[j] = false;
    occupancy_[index(state_.prey[j])] = Cell::empty;
  }

  void remove_predator(std::size_t i) {
    // The window seen at the moment of elimination stays the agent's observation.
    frozen_[i] = window_key(state_.predators[i]);
    state_.predator_alive[i] = false;
    occupancy_[index(state_.predators[i])] = Cell::empty;
  }

  PredatorPreyConfig cfg_;
  PpState state_;
  std::vector<Cell> occupancy_;
  std::vector<ObservationKey> frozen_;
  CountingRng rng_;
};

}  // namespace roe::env
