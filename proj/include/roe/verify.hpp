#pragma once

// The DP property battery behind `verify-dp`: projection non-expansiveness,
// fixed-policy contraction (plain, under a random interval, and at gamma = 0),
// the schedule drift bound, and an informational greedy-mode measurement.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "roe/dp.hpp"
#include "roe/explore.hpp"
#include "roe/rng.hpp"

namespace roe {

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 200;       // table pairs per MDP
  std::size_t n_mdps = 20;
  std::size_t n_triples = 12;
  std::size_t n_quantiles = 32;
  std::size_t schedule_len = 20;  // steps per scheduled run
  double bound_tol = 1e-9;
  bool contraction_suite = true;  // non-expansiveness and fixed-policy contraction
  bool schedule_suite = true;     // drift bound along risk schedules
  bool greedy_demo = true;        // informational greedy-backup ratios
};

struct DpCheck {
  std::string check;
  std::uint64_t mdp_seed = 0;
  std::size_t trials = 0;
  double gamma = 0.0;
  double max_ratio = 0.0;
  double max_slack = 0.0;
  double allowed_slack = 0.0;
  bool pass = true;
  bool informational = false;
  std::string detail;

  friend bool operator==(const DpCheck&, const DpCheck&) = default;
};

inline nlohmann::ordered_json to_json(const DpCheck& c) {
  return {{"check", c.check},         {"mdp_seed", c.mdp_seed},
          {"trials", c.trials},       {"gamma", c.gamma},
          {"max_ratio", c.max_ratio}, {"max_slack", c.max_slack},
          {"allowed_slack", c.allowed_slack}, {"pass", c.pass},
          {"informational", c.informational}, {"detail", c.detail}};
}

inline DpCheck dp_check_from_json(const nlohmann::ordered_json& j) {
  DpCheck c;
  c.check = j.at("check").get<std::string>();
  c.mdp_seed = j.at("mdp_seed").get<std::uint64_t>();
  c.trials = j.at("trials").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  c.max_ratio = j.at("max_ratio").get<double>();
  c.max_slack = j.at("max_slack").get<double>();
  c.allowed_slack = j.at("allowed_slack").get<double>();
  c.pass = j.at("pass").get<bool>();
  c.informational = j.at("informational").get<bool>();
  c.detail = j.at("detail").get<std::string>();
  return c;
}

struct VerifyReport {
  std::vector<DpCheck> checks;
  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline DpCheck from_contraction(std::string name, std::uint64_t seed, const dp::ContractionReport& r,
                                std::string detail = {}) {
  DpCheck c;
  c.check = std::move(name);
  c.mdp_seed = seed;
  c.trials = r.trials;
  c.gamma = r.gamma;
  c.max_ratio = r.max_ratio;
  c.max_slack = r.max_slack;
  c.allowed_slack = 1e-9;
  c.pass = r.pass();
  c.detail = std::move(detail);
  return c;
}

inline std::string interval_text(const RiskInterval& r) {
  std::ostringstream os;
  os << '[' << r.alpha() << ',' << r.beta() << ']';
  return os.str();
}

}  // namespace detail

/// Schedules exercised by the drift-bound suite, indexed 0..3.
inline dp::RiskSchedulePlan schedule_plan(std::size_t kind, std::size_t len, std::mt19937_64& rng) {
  dp::RiskSchedulePlan plan;
  plan.reserve(len);
  const RiskInterval fixed = dp::random_interval(rng);
  const TwoPhaseSchedule to_neutral{0.99, 1.0, len - 1};
  const TwoPhaseSchedule to_averse{0.99, 0.25, len - 1};
  const RoeSchedule scalar{1.0, 0.0, len - 1};
  for (std::size_t t = 0; t < len; ++t) {
    switch (kind % 4) {
      case 0: plan.push_back(fixed); break;
      case 1: plan.push_back(two_phase_interval_at(to_neutral, t)); break;
      case 2: plan.push_back(roe_interval_at(scalar, t)); break;
      default: plan.push_back(two_phase_interval_at(to_averse, t)); break;
    }
  }
  return plan;
}

inline const char* schedule_name(std::size_t kind) {
  constexpr const char* names[] = {"constant", "two_phase_neutral", "roe_scalar", "two_phase_averse"};
  return names[kind % 4];
}

inline VerifyReport run_dp_battery(const VerifyOptions& opt) {
  if (opt.schedule_len < 2) throw UsageError("verify: schedule_len must be >= 2");
  VerifyReport rep;
  const std::size_t n = opt.n_quantiles;

  if (opt.contraction_suite) {
    const auto r = dp::check_nonexpansive(opt.trials * opt.n_mdps, derive_seed(opt.seed, "nonexpansive"), n);
    DpCheck c;
    c.check = "nonexpansive";
    c.mdp_seed = derive_seed(opt.seed, "nonexpansive");
    c.trials = r.trials;
    c.gamma = 1.0;
    c.max_ratio = r.max_ratio;
    c.max_slack = r.max_slack;
    c.allowed_slack = 1e-12;
    c.pass = r.pass();
    rep.checks.push_back(c);
  }

  for (std::size_t i = 0; opt.contraction_suite && i < opt.n_mdps; ++i) {
    const auto mdp_seed = derive_seed(opt.seed, "mdp", i);
    const auto mdp = dp::random_mdp(mdp_seed);
    std::mt19937_64 rng(derive_seed(mdp_seed, "battery"));
    const auto policy = dp::random_fixed_policy(mdp, rng);
    rep.checks.push_back(detail::from_contraction(
        "contraction", mdp_seed, dp::check_contraction(mdp, policy, opt.trials, rng(), RiskInterval::neutral(), n)));
    const auto r = dp::random_interval(rng);
    rep.checks.push_back(detail::from_contraction(
        "contraction_interval", mdp_seed, dp::check_contraction(mdp, policy, opt.trials, rng(), r, n),
        "r=" + detail::interval_text(r)));
  }

  if (opt.contraction_suite) {
    const auto mdp_seed = derive_seed(opt.seed, "gamma0");
    const auto mdp = dp::random_mdp(mdp_seed, 3, 2, 0.0);
    std::mt19937_64 rng(mdp_seed);
    const auto policy = dp::random_fixed_policy(mdp, rng);
    rep.checks.push_back(detail::from_contraction(
        "contraction_gamma0", mdp_seed, dp::check_contraction(mdp, policy, opt.trials, rng(), RiskInterval::neutral(), n)));
  }

  for (std::size_t i = 0; opt.schedule_suite && i < opt.n_triples; ++i) {
    const auto mdp_seed = derive_seed(opt.seed, "triple", i);
    const auto mdp = dp::random_mdp(mdp_seed);
    std::mt19937_64 rng(derive_seed(mdp_seed, "triple-rng"));
    const auto policy = dp::random_fixed_policy(mdp, rng);
    const std::size_t kind = i % 4;
    const auto plan = schedule_plan(kind, opt.schedule_len, rng);

    const std::size_t z0_kind = (i / 4) % 3;
    dp::FixedPointOptions fp;
    fp.n_quantiles = n;
    dp::QuantileTable z0(mdp.n_states(), mdp.n_actions(), n);
    const char* z0_name = "zero";
    if (z0_kind == 0) {
      z0 = dp::random_table(mdp.n_states(), mdp.n_actions(), n, rng);
      z0_name = "random";
    } else if (z0_kind == 2) {
      z0 = dp::fixed_point(mdp, policy, plan.front(), fp).table;
      z0_name = "fixed_point";
    }

    DpCheck c;
    c.check = "schedule_bound";
    c.mdp_seed = mdp_seed;
    c.trials = plan.size();
    c.gamma = mdp.gamma();
    try {
      const auto r = dp::check_schedule_bound(mdp, plan, z0, policy, opt.bound_tol, fp);
      c.max_slack = r.max_slack;
      c.allowed_slack = r.allowed_slack;
      c.pass = r.pass();
      double worst = 0.0;
      for (const auto& s : r.steps)
        if (s.rhs > 0.0) worst = std::max(worst, s.lhs / s.rhs);
      c.max_ratio = worst;
      c.detail = std::string("schedule=") + schedule_name(kind) + " z0=" + z0_name +
                 " fixed_points=" + std::to_string(r.fixed_points_solved);
    } catch (const dp::NonConvergence& e) {
      c.pass = false;
      c.detail = e.what();
    }
    rep.checks.push_back(c);
  }

  // Greedy backups are not covered by the contraction claim; record the
  // observed ratio only.
  for (std::size_t i = 0; opt.greedy_demo && i < 3; ++i) {
    const auto mdp_seed = derive_seed(opt.seed, "greedy", i);
    const auto mdp = dp::random_mdp(mdp_seed);
    std::mt19937_64 rng(mdp_seed);
    const RiskInterval r = i == 0 ? RiskInterval::neutral() : dp::random_interval(rng);
    DpCheck c;
    c.check = "greedy_demo";
    c.mdp_seed = mdp_seed;
    c.gamma = mdp.gamma();
    c.informational = true;
    c.max_slack = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < opt.trials; ++t) {
      const auto z1 = dp::random_table(mdp.n_states(), mdp.n_actions(), n, rng);
      const auto z2 = dp::random_table(mdp.n_states(), mdp.n_actions(), n, rng);
      const double before = dp::table_distance(z1, z2);
      const double after = dp::table_distance(dp::apply_operator(mdp, z1, dp::BackupPolicy::greedy(), r),
                                              dp::apply_operator(mdp, z2, dp::BackupPolicy::greedy(), r));
      c.max_slack = std::max(c.max_slack, after - mdp.gamma() * before);
      if (before > 0.0) c.max_ratio = std::max(c.max_ratio, after / before);
      ++c.trials;
    }
    c.detail = "r=" + detail::interval_text(r);
    rep.checks.push_back(c);
  }
  return rep;
}

inline void write_report_text(std::ostream& os, const VerifyReport& rep) {
  os << std::setprecision(6);
  std::size_t failed = 0;
  for (const auto& c : rep.checks) {
    const char* status = c.informational ? "INFO" : (c.pass ? "PASS" : "FAIL");
    if (!c.pass) ++failed;
    os << status << "  " << std::left << std::setw(20) << c.check << " mdp_seed=" << c.mdp_seed
       << " gamma=" << c.gamma << " trials=" << c.trials << " max_ratio=" << c.max_ratio
       << " max_slack=" << c.max_slack;
    if (!c.informational) os << " allowed=" << c.allowed_slack;
    if (!c.detail.empty()) os << "  " << c.detail;
    os << '\n';
  }
  os << (failed ? "FAILED: " + std::to_string(failed) + " check(s)" : std::string("all checks passed")) << '\n';
}

inline void write_report_ndjson(std::ostream& os, const VerifyReport& rep) {
  for (const auto& c : rep.checks) os << to_json(c).dump() << '\n';
}

}  // namespace roe
