#pragma once

// Quantile-distribution value type and the distributional primitives built on
// it: step inverse CDF, interval means, interval projection, Wasserstein
// distances and the Huber quantile loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace roe {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Midpoint quantile fraction (2i+1)/(2N) for zero-based index i.
inline double quantile_midpoint(std::size_t i, std::size_t n) {
  return (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
}

/// Equal-weight mixture of N Dirac atoms, stored as sorted quantile values.
class QuantileDistribution {
 public:
  QuantileDistribution() = default;

  explicit QuantileDistribution(std::vector<double> values) : values_(std::move(values)) {
    validate();
  }
  QuantileDistribution(std::initializer_list<double> values)
      : QuantileDistribution(std::vector<double>(values)) {}

  static QuantileDistribution constant(std::size_t n, double value) {
    return QuantileDistribution(std::vector<double>(n, value));
  }

  /// Builds from arbitrary finite values, sorting them first.
  static QuantileDistribution from_unsorted(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return QuantileDistribution(std::move(values));
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double front() const { return values_.front(); }
  double back() const { return values_.back(); }

  friend bool operator==(const QuantileDistribution&, const QuantileDistribution&) = default;

 private:
  void validate() const {
    if (values_.empty()) throw UsageError("quantile distribution needs at least one atom");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) throw DomainError("quantile value is not finite");
      if (i > 0 && values_[i - 1] > values_[i])
        throw DomainError("quantile values must be nondecreasing");
    }
  }

  std::vector<double> values_;
};

/// Sub-range [alpha, beta] of quantile fractions used to score actions.
class RiskInterval {
 public:
  constexpr RiskInterval() = default;
  RiskInterval(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    if (!(0.0 <= alpha && alpha <= beta && beta <= 1.0))
      throw DomainError("risk interval requires 0 <= alpha <= beta <= 1");
  }

  constexpr double alpha() const noexcept { return alpha_; }
  constexpr double beta() const noexcept { return beta_; }
  constexpr double width() const noexcept { return beta_ - alpha_; }

  static RiskInterval neutral() { return {0.0, 1.0}; }

  friend bool operator==(const RiskInterval&, const RiskInterval&) = default;

 private:
  double alpha_ = 0.0;
  double beta_ = 1.0;
};

/// Scalar risk level in [-1, 1]: 1 extreme seeking, 0 neutral, -1 extreme averse.
class RiskLevel {
 public:
  explicit RiskLevel(double w) : w_(w) {
    if (!(w >= -1.0 && w <= 1.0)) throw DomainError("risk level must lie in [-1, 1]");
  }
  double value() const noexcept { return w_; }

 private:
  double w_;
};

namespace detail {

// One-based index ceil(tau * n) clamped to [1, n]. Products that land within
// a few ulps of an integer are snapped to it so that exact fractions such as
// 0.3 * 10 select atom 3 rather than 4.
inline std::size_t step_index(double tau, std::size_t n) {
  const double scaled = tau * static_cast<double>(n);
  const double nearest = std::round(scaled);
  double k = std::abs(scaled - nearest) <= 1e-12 * static_cast<double>(n) ? nearest
                                                                           : std::ceil(scaled);
  if (k < 1.0) k = 1.0;
  if (k > static_cast<double>(n)) k = static_cast<double>(n);
  return static_cast<std::size_t>(k);
}

}  // namespace detail

/// Right-continuous empirical inverse CDF: theta at ceil(tau N), tau = 0 maps to theta_1.
inline double inverse_cdf(std::span<const double> values, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("quantile fraction outside [0, 1]");
  return values[detail::step_index(tau, values.size()) - 1];
}

inline double inverse_cdf(const QuantileDistribution& d, double tau) {
  return inverse_cdf(d.values(), tau);
}

inline double mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline double mean(const QuantileDistribution& d) { return mean(d.values()); }

/// Exact average of the step inverse CDF over [alpha, beta].
inline double range_mean(std::span<const double> values, const RiskInterval& r) {
  const double a = r.alpha();
  const double b = r.beta();
  if (a == b) return inverse_cdf(values, a);
  if (a == 0.0 && b == 1.0) return mean(values);
  const std::size_t n = values.size();
  const double dn = static_cast<double>(n);
  // theta_i covers ((i-1)/N, i/N]; only atoms overlapping [a, b] contribute.
  const std::size_t first = detail::step_index(a, n);
  const std::size_t last = detail::step_index(b, n);
  if (b == 1.0) {
    // Upper tails are written as mean + excess so that rounding can never put
    // the result below mean(values); the excess is nonnegative in exact arithmetic.
    const double m = mean(values);
    double excess = 0.0;
    for (std::size_t i = first; i <= n; ++i) {
      const double lo = std::max(static_cast<double>(i - 1) / dn, a);
      const double hi = static_cast<double>(i) / dn;
      if (hi > lo) excess += (values[i - 1] - m) * (hi - lo);
    }
    return m + std::max(excess / (b - a), 0.0);
  }
  double acc = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    const double lo = std::max(static_cast<double>(i - 1) / dn, a);
    const double hi = std::min(static_cast<double>(i) / dn, b);
    if (hi > lo) acc += values[i - 1] * (hi - lo);
  }
  return acc / (b - a);
}

inline double range_mean(const QuantileDistribution& d, const RiskInterval& r) {
  return range_mean(d.values(), r);
}

/// Writes the interval projection of `values` into `out` (same length).
inline void project_into(std::span<const double> values, const RiskInterval& r,
                         std::span<double> out) {
  const std::size_t n = values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = r.width() * quantile_midpoint(i, n) + r.alpha();
    out[i] = values[detail::step_index(std::min(tau, 1.0), n) - 1];
  }
}

/// Restricts d to its [alpha, beta] quantile range and re-reads it at the N midpoints.
inline QuantileDistribution project(const QuantileDistribution& d, const RiskInterval& r) {
  std::vector<double> out(d.size());
  project_into(d.values(), r, out);
  return QuantileDistribution(std::move(out));
}

inline double wasserstein_inf(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("wasserstein_inf: distributions differ in N");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double wasserstein_inf(const QuantileDistribution& a, const QuantileDistribution& b) {
  return wasserstein_inf(a.values(), b.values());
}

inline double wasserstein_p(std::span<const double> a, std::span<const double> b, double p) {
  if (!(p >= 1.0)) throw DomainError("wasserstein_p requires p >= 1");
  if (a.size() != b.size()) throw UsageError("wasserstein_p: distributions differ in N");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(acc / static_cast<double>(a.size()), 1.0 / p);
}

inline double wasserstein_p(const QuantileDistribution& a, const QuantileDistribution& b,
                            double p) {
  return wasserstein_p(a.values(), b.values(), p);
}

inline double huber(double delta, double k) {
  const double mag = std::abs(delta);
  return mag <= k ? delta * delta / (2.0 * k) : mag - 0.5 * k;
}

/// Asymmetric Huber quantile loss rho^k_tau(delta).
inline double huber_quantile_loss(double delta, double tau, double k) {
  const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  return weight * huber(delta, k);
}

/// Derivative of the loss w.r.t. the predicted quantile, where delta = target - prediction.
inline double huber_quantile_grad(double delta, double tau, double k) {
  if (delta == 0.0) return 0.0;
  const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  return -weight * std::clamp(delta / k, -1.0, 1.0);
}

/// Variance of the upper half of the quantile set about the median atom theta_{N/2}.
inline double left_truncated_variance(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n % 2 != 0) throw UsageError("left truncated variance requires an even number of quantiles");
  const double median = values[n / 2 - 1];
  double acc = 0.0;
  for (std::size_t j = n / 2 - 1; j < n; ++j) {
    const double dv = values[j] - median;
    acc += dv * dv;
  }
  return acc / (2.0 * static_cast<double>(n));
}

inline double left_truncated_variance(const QuantileDistribution& d) {
  return left_truncated_variance(d.values());
}

inline RiskInterval risk_level_to_interval(const RiskLevel& w) {
  const double v = w.value();
  return v >= 0.0 ? RiskInterval(v, 1.0) : RiskInterval(0.0, 1.0 + v);
}

inline RiskInterval risk_level_to_interval(double w) { return risk_level_to_interval(RiskLevel(w)); }

namespace presets {
inline RiskInterval averse() { return {0.0, 0.25}; }
inline RiskInterval neutral() { return {0.0, 1.0}; }
inline RiskInterval seeking() { return {0.75, 1.0}; }

// Anchor triple used by DRIMA-style agents.
inline RiskInterval drima_averse() { return {0.0, 0.1}; }
inline RiskInterval drima_neutral() { return {0.4, 0.5}; }
inline RiskInterval drima_seeking() { return {0.9, 1.0}; }
}  // namespace presets

}  // namespace roe
