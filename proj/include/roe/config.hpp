#pragma once

// Experiment configuration: JSON in, fully resolved ExperimentConfig out.
// Unknown keys are rejected; every default is written back by config_to_json
// so a resolved file reloads to the same configuration.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "roe/environment.hpp"
#include "roe/explore.hpp"
#include "roe/learner.hpp"
#include "roe/train.hpp"

namespace roe {

using json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedPolicy {
  std::string name;
  PolicySpec spec;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  env::EnvSpec env = env::matrix_default_spec();
  LearnerConfig learner;
  NamedPolicy policy{"roe_scalar", RoeScalarPolicy{}};
  std::vector<NamedPolicy> sweep_policies;  // empty: sweep runs `policy` alone
  std::uint64_t total_steps = 20000;
  std::uint64_t warmup_steps = 500;
  WarmupSource warmup_source = WarmupSource::random;
  std::uint64_t eval_every = 1000;
  std::uint64_t eval_episodes = 10;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";

  bool is_matrix() const { return std::holds_alternative<env::MatrixGameSpec>(env); }

  TrainerOptions trainer_options(const PolicySpec& p) const {
    return TrainerOptions{learner, p, warmup_steps, warmup_source};
  }
  std::vector<NamedPolicy> policy_grid() const {
    return sweep_policies.empty() ? std::vector<NamedPolicy>{policy} : sweep_policies;
  }
};

namespace detail {

/// Reads keys from one JSON object, remembering which were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& child(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = child(key);
    if (!v.is_number()) throw ConfigError(key_path(key) + " must be a number");
    return v.get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const auto& v = child(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) throw ConfigError(key_path(key) + " must be a non-negative integer");
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d)))
        return static_cast<std::uint64_t>(d);
    }
    throw ConfigError(key_path(key) + " must be a non-negative integer");
  }

  int integer(const std::string& key, int def) {
    if (!has(key)) return def;
    const auto& v = child(key);
    if (!v.is_number_integer()) throw ConfigError(key_path(key) + " must be an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = child(key);
    if (!v.is_boolean()) throw ConfigError(key_path(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const auto& v = child(key);
    if (!v.is_string()) throw ConfigError(key_path(key) + " must be a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) throw ConfigError("unknown key '" + key_path(item.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void flatten_numbers(const json& j, const std::string& path, std::vector<double>& out) {
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array()) {
    for (const auto& e : j) flatten_numbers(e, path, out);
  } else {
    throw ConfigError(path + " must contain only numbers");
  }
}

// Validation failures from domain types surface as ConfigError naming the section.
template <class F>
void checked(const std::string& section, F&& f) {
  try {
    f();
  } catch (const std::logic_error& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

inline env::EnvSpec parse_env(const json& j) {
  ObjectReader r(j, "env");
  const std::string type = r.string("type", "matrix");
  if (type == "matrix") {
    env::MatrixGameSpec spec;
    spec.n_agents = r.count("n_agents", 2);
    spec.n_actions = r.count("n_actions", 3);
    if (r.has("payoff")) {
      flatten_numbers(r.child("payoff"), "env.payoff", spec.payoff);
    } else if (spec.n_agents == 2 && spec.n_actions == 3) {
      spec.payoff = env::matrix_default_spec().payoff;
    } else {
      throw ConfigError("env.payoff is required unless the game is 2 agents x 3 actions");
    }
    r.finish();
    checked("env", [&] { spec.validate(); });
    return spec;
  }
  if (type == "predator_prey") {
    env::PredatorPreyConfig c;
    c.width = r.integer("width", c.width);
    c.height = r.integer("height", c.height);
    c.n_predators = r.count("n_predators", c.n_predators);
    c.n_prey = r.count("n_prey", c.n_prey);
    c.n_hares = r.count("n_hares", c.n_hares);
    c.pair_capture_reward = r.number("pair_capture_reward", c.pair_capture_reward);
    c.solo_capture_penalty = r.number("solo_capture_penalty", c.solo_capture_penalty);
    c.hare_reward = r.number("hare_reward", c.hare_reward);
    c.slip_prob = r.number("slip_prob", c.slip_prob);
    c.obs_radius = r.integer("obs_radius", c.obs_radius);
    c.max_steps = r.integer("max_steps", c.max_steps);
    c.solo_capture_removes_prey = r.boolean("solo_capture_removes_prey", c.solo_capture_removes_prey);
    c.hare_pair_capture = r.boolean("hare_pair_capture", c.hare_pair_capture);
    r.finish();
    checked("env", [&] { c.validate(); });
    return c;
  }
  throw ConfigError("env.type must be 'matrix' or 'predator_prey' (got '" + type + "')");
}

inline LearnerConfig parse_learner(const json* j, bool matrix) {
  LearnerConfig c;
  c.shared_table = !matrix;
  if (j) {
    ObjectReader r(*j, "learner");
    c.gamma = r.number("gamma", c.gamma);
    c.learning_rate = r.number("learning_rate", c.learning_rate);
    c.n_quantiles = r.count("n_quantiles", c.n_quantiles);
    c.huber_k = r.number("huber_k", c.huber_k);
    c.target_update_period = r.count("target_update_period", c.target_update_period);
    c.batch_size = r.count("batch_size", c.batch_size);
    c.buffer_capacity = r.count("buffer_capacity", c.buffer_capacity);
    c.shared_table = r.boolean("shared_table", c.shared_table);
    c.episode_sampling = r.boolean("episode_sampling", c.episode_sampling);
    c.stochastic_tau = r.boolean("stochastic_tau", c.stochastic_tau);
    r.finish();
  }
  checked("learner", [&] { c.validate(); });
  return c;
}

inline RiskInterval preset_interval(const std::string& name, const std::string& path) {
  if (name == "averse") return presets::averse();
  if (name == "neutral") return presets::neutral();
  if (name == "seeking") return presets::seeking();
  if (name == "drima_averse") return presets::drima_averse();
  if (name == "drima_neutral") return presets::drima_neutral();
  if (name == "drima_seeking") return presets::drima_seeking();
  throw ConfigError(path + " names an unknown preset '" + name + "'");
}

struct EnvDefaults {
  std::uint64_t schedule_k;
  std::uint64_t epsilon_anneal;
};

inline NamedPolicy parse_policy(const json& j, const std::string& path, const EnvDefaults& d) {
  ObjectReader r(j, path);
  const std::string type = r.string("type", "roe_scalar");
  NamedPolicy out;
  out.name = r.string("name", type);
  if (type == "epsilon_greedy") {
    EpsilonSchedule s;
    s.anneal_steps = d.epsilon_anneal;
    s.eps_start = r.number("eps_start", s.eps_start);
    s.eps_end = r.number("eps_end", s.eps_end);
    s.anneal_steps = r.count("anneal_steps", s.anneal_steps);
    out.spec = EpsilonGreedyPolicy{s};
  } else if (type == "dltv") {
    DltvConfig c;
    c.c = r.number("c", c.c);
    out.spec = DltvPolicy{c};
  } else if (type == "static_risk") {
    RiskInterval iv = presets::neutral();
    if (r.has("preset")) {
      if (r.has("alpha") || r.has("beta"))
        throw ConfigError(path + ": give either preset or alpha/beta, not both");
      iv = preset_interval(r.string("preset", ""), r.key_path("preset"));
    } else {
      const double a = r.number("alpha", 0.0);
      const double b = r.number("beta", 1.0);
      checked(path, [&] { iv = RiskInterval(a, b); });
    }
    out.spec = StaticRiskPolicy{iv};
  } else if (type == "roe_scalar") {
    RoeSchedule s;
    s.omega_0 = r.number("omega_0", s.omega_0);
    s.omega_k = r.number("omega_k", s.omega_k);
    s.k = r.count("k", d.schedule_k);
    out.spec = RoeScalarPolicy{s};
  } else if (type == "roe_two_phase") {
    TwoPhaseSchedule s;
    s.alpha_start = r.number("alpha_start", s.alpha_start);
    const std::string target = r.string("target", "neutral");
    if (target == "neutral") s.beta_final = 1.0;
    else if (target == "averse") s.beta_final = 0.25;
    else throw ConfigError(r.key_path("target") + " must be 'neutral' or 'averse'");
    s.k = r.count("k", d.schedule_k);
    out.spec = RoeTwoPhasePolicy{s};
  } else {
    throw ConfigError(path + ".type '" + type + "' is not a known policy");
  }
  r.finish();
  checked(path, [&] { validate_policy(out.spec); });
  return out;
}

}  // namespace detail

/// Parses config text; syntax errors report line and column.
inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }

  detail::ObjectReader r(j, "");
  ExperimentConfig c;
  c.schema_version = r.integer("schema_version", kConfigSchemaVersion);
  if (c.schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(c.schema_version) + " is not supported");
  c.env = r.has("env") ? detail::parse_env(r.child("env")) : env::EnvSpec(env::matrix_default_spec());
  const bool matrix = c.is_matrix();
  const detail::EnvDefaults defaults{matrix ? 10000u : 100000u, matrix ? 10000u : 50000u};

  c.learner = detail::parse_learner(r.has("learner") ? &r.child("learner") : nullptr, matrix);
  c.policy = r.has("policy") ? detail::parse_policy(r.child("policy"), "policy", defaults)
                             : NamedPolicy{"roe_scalar", RoeScalarPolicy{{1.0, 0.0, defaults.schedule_k}}};
  if (r.has("sweep")) {
    detail::ObjectReader sw(r.child("sweep"), "sweep");
    if (sw.has("policies")) {
      const auto& list = sw.child("policies");
      if (!list.is_array() || list.empty())
        throw ConfigError("sweep.policies must be a non-empty array");
      std::set<std::string> names;
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto p = detail::parse_policy(list[i], "sweep.policies[" + std::to_string(i) + "]", defaults);
        if (!names.insert(p.name).second)
          throw ConfigError("sweep.policies has a duplicate name '" + p.name + "'");
        c.sweep_policies.push_back(std::move(p));
      }
    }
    sw.finish();
  }

  c.total_steps = r.count("total_steps", matrix ? 20000 : 200000);
  c.warmup_steps = r.count("warmup_steps", matrix ? 500 : 50000);
  const std::string ws = r.string("warmup_source", "random");
  if (ws == "random") c.warmup_source = WarmupSource::random;
  else if (ws == "epsilon") c.warmup_source = WarmupSource::epsilon;
  else throw ConfigError("warmup_source must be 'random' or 'epsilon'");
  c.eval_every = r.count("eval_every", matrix ? 1000 : 10000);
  c.eval_episodes = r.count("eval_episodes", matrix ? 10 : 5);
  if (c.eval_every == 0) throw ConfigError("eval_every must be positive");
  if (r.has("seeds")) {
    const auto& s = r.child("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds must be a non-empty array");
    c.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_unsigned()) throw ConfigError("seeds must hold non-negative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  c.output_dir = r.string("output_dir", c.output_dir);
  r.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline json env_to_json(const env::EnvSpec& e) {
  if (const auto* m = std::get_if<env::MatrixGameSpec>(&e)) {
    return json{{"type", "matrix"},
                {"n_agents", m->n_agents},
                {"n_actions", m->n_actions},
                {"payoff", m->payoff}};
  }
  const auto& c = std::get<env::PredatorPreyConfig>(e);
  return json{{"type", "predator_prey"},
              {"width", c.width},
              {"height", c.height},
              {"n_predators", c.n_predators},
              {"n_prey", c.n_prey},
              {"n_hares", c.n_hares},
              {"pair_capture_reward", c.pair_capture_reward},
              {"solo_capture_penalty", c.solo_capture_penalty},
              {"hare_reward", c.hare_reward},
              {"slip_prob", c.slip_prob},
              {"obs_radius", c.obs_radius},
              {"max_steps", c.max_steps},
              {"solo_capture_removes_prey", c.solo_capture_removes_prey},
              {"hare_pair_capture", c.hare_pair_capture}};
}

inline json policy_to_json(const NamedPolicy& p) {
  json j{{"name", p.name}, {"type", policy_type_name(p.spec)}};
  std::visit(
      [&](const auto& v) {
        using P = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<P, EpsilonGreedyPolicy>) {
          j["eps_start"] = v.schedule.eps_start;
          j["eps_end"] = v.schedule.eps_end;
          j["anneal_steps"] = v.schedule.anneal_steps;
        } else if constexpr (std::is_same_v<P, DltvPolicy>) {
          j["c"] = v.config.c;
        } else if constexpr (std::is_same_v<P, StaticRiskPolicy>) {
          j["alpha"] = v.interval.alpha();
          j["beta"] = v.interval.beta();
        } else if constexpr (std::is_same_v<P, RoeScalarPolicy>) {
          j["omega_0"] = v.schedule.omega_0;
          j["omega_k"] = v.schedule.omega_k;
          j["k"] = v.schedule.k;
        } else {
          j["alpha_start"] = v.schedule.alpha_start;
          j["target"] = v.schedule.beta_final == 1.0 ? "neutral" : "averse";
          j["k"] = v.schedule.k;
        }
      },
      p.spec);
  return j;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["env"] = env_to_json(c.env);
  const auto& l = c.learner;
  j["learner"] = json{{"gamma", l.gamma},
                      {"learning_rate", l.learning_rate},
                      {"n_quantiles", l.n_quantiles},
                      {"huber_k", l.huber_k},
                      {"target_update_period", l.target_update_period},
                      {"batch_size", l.batch_size},
                      {"buffer_capacity", l.buffer_capacity},
                      {"shared_table", l.shared_table},
                      {"episode_sampling", l.episode_sampling},
                      {"stochastic_tau", l.stochastic_tau}};
  j["policy"] = policy_to_json(c.policy);
  if (!c.sweep_policies.empty()) {
    json list = json::array();
    for (const auto& p : c.sweep_policies) list.push_back(policy_to_json(p));
    j["sweep"] = json{{"policies", list}};
  }
  j["total_steps"] = c.total_steps;
  j["warmup_steps"] = c.warmup_steps;
  j["warmup_source"] = c.warmup_source == WarmupSource::random ? "random" : "epsilon";
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace roe
