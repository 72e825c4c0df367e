#pragma once

// Power-mean operators over fulfillment vectors, their analytic gradients,
// and the minimum-fulfillment guarantee computations built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpl {

/// Power-mean exponent. Finite reals plus both infinities; values with
/// |p| below `geometric_band` use the geometric branch and values beyond
/// `extreme_band` use min/max.
class Exponent {
public:
  static constexpr double geometric_band = 1e-8;
  static constexpr double extreme_band = 1e6;

  constexpr Exponent() = default;
  constexpr explicit Exponent(double value) : value_(value) {}

  static constexpr Exponent neg_inf() { return Exponent(-std::numeric_limits<double>::infinity()); }
  static constexpr Exponent pos_inf() { return Exponent(std::numeric_limits<double>::infinity()); }

  constexpr double value() const { return value_; }
  bool is_finite() const { return std::isfinite(value_); }
  bool is_geometric() const { return std::fabs(value_) < geometric_band; }
  bool is_min() const { return value_ < -extreme_band; }
  bool is_max() const { return value_ > extreme_band; }

  friend constexpr bool operator==(Exponent a, Exponent b) { return a.value_ == b.value_; }

private:
  double value_ = 0.0;
};

/// Inputs to power_mean_grad below this are raised to it when p < 1.
inline constexpr double grad_epsilon = 1e-6;

namespace detail {

inline void check_nonempty_nonnegative(std::span<const double> xs, const char* who) {
  if (xs.empty())
    throw std::invalid_argument(std::string(who) + ": empty input");
  for (double x : xs) {
    if (!(x >= 0.0))
      throw std::invalid_argument(std::string(who) + ": elements must be non-negative");
  }
}

inline void check_finite_nonzero(Exponent p, const char* who) {
  if (!p.is_finite() || p.is_geometric())
    throw std::domain_error(std::string(who) + ": exponent must be finite and nonzero");
}

} // namespace detail

/// M_p(xs). Computed as m * M_p(xs / m) with m the max (p > 0) or min
/// (p < 0) so that no power overflows; the result is clamped to
/// [min(xs), max(xs)].
inline double power_mean(Exponent p, std::span<const double> xs) {
  detail::check_nonempty_nonnegative(xs, "power_mean");
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double n = static_cast<double>(xs.size());

  if (p.is_min()) return lo;
  if (p.is_max()) return hi;

  if (p.is_geometric()) {
    if (lo == 0.0) return 0.0;
    double log_sum = 0.0;
    for (double x : xs) log_sum += std::log(x);
    return std::clamp(std::exp(log_sum / n), lo, hi);
  }

  const double e = p.value();
  if (e < 0.0 && lo == 0.0) return 0.0;
  const double scale = e > 0.0 ? hi : lo;
  if (scale == 0.0) return 0.0;

  double acc = 0.0;
  for (double x : xs) acc += std::pow(x / scale, e);
  return std::clamp(scale * std::pow(acc / n, 1.0 / e), lo, hi);
}

inline double power_mean(Exponent p, std::initializer_list<double> xs) {
  return power_mean(p, std::span<const double>(xs.begin(), xs.size()));
}

/// dM_p/dx_i = (1/n) (x_i / M_p)^(p-1), which covers p = 0 as M_0 / (n x_i).
/// For p < 1 inputs are clamped to grad_epsilon first.
inline std::vector<double> power_mean_grad(Exponent p, std::span<const double> xs) {
  detail::check_nonempty_nonnegative(xs, "power_mean_grad");
  if (!p.is_finite())
    throw std::domain_error("power_mean_grad: exponent must be finite");

  const double e = p.is_geometric() ? 0.0 : p.value();
  const double n = static_cast<double>(xs.size());
  std::vector<double> x(xs.begin(), xs.end());
  if (e < 1.0) {
    for (double& v : x) v = std::max(v, grad_epsilon);
  }

  const double m = power_mean(p, x);
  std::vector<double> grad(x.size());
  if (m == 0.0) {
    // only reachable for p >= 1 with an all-zero input
    std::fill(grad.begin(), grad.end(), std::pow(1.0 / n, 1.0 / e));
    return grad;
  }
  for (std::size_t i = 0; i < x.size(); ++i)
    grad[i] = std::pow(x[i] / m, e - 1.0) / n;
  return grad;
}

inline std::vector<double> power_mean_grad(Exponent p, std::initializer_list<double> xs) {
  return power_mean_grad(p, std::span<const double>(xs.begin(), xs.size()));
}

/// Smallest component any n-vector in [0,1]^n can have when its power mean
/// equals y: (n (y^p - 1) + 1)^(1/p). Returns the vacuous bound 0 when the
/// radicand is non-positive (p > 0) or diverges (p < 0, y = 0).
inline double min_fulfillment_bound(Exponent p, std::size_t n, double y) {
  detail::check_finite_nonzero(p, "min_fulfillment_bound");
  if (n == 0) throw std::invalid_argument("min_fulfillment_bound: n must be >= 1");
  if (!(y >= 0.0 && y <= 1.0))
    throw std::invalid_argument("min_fulfillment_bound: y must lie in [0,1]");

  const double e = p.value();
  const double radicand = static_cast<double>(n) * (std::pow(y, e) - 1.0) + 1.0;
  if (!std::isfinite(radicand) || radicand <= 0.0) return 0.0;
  return std::clamp(std::pow(radicand, 1.0 / e), 0.0, 1.0);
}

/// The change to x_j that compensates x_i += delta while leaving M_p(xs)
/// unchanged: x_j - (x_i^p + x_j^p - (x_i + delta)^p)^(1/p).
inline double conservation_delta(Exponent p, std::span<const double> xs, std::size_t i,
                                 std::size_t j, double delta) {
  detail::check_finite_nonzero(p, "conservation_delta");
  detail::check_nonempty_nonnegative(xs, "conservation_delta");
  if (i >= xs.size() || j >= xs.size() || i == j)
    throw std::invalid_argument("conservation_delta: indices must be distinct and in range");

  const double e = p.value();
  const double moved = xs[i] + delta;
  if (!(moved >= 0.0) || (e < 0.0 && moved == 0.0))
    throw std::domain_error("conservation_delta: perturbed component leaves the domain");

  const double radicand = std::pow(xs[i], e) + std::pow(xs[j], e) - std::pow(moved, e);
  const bool valid = e > 0.0 ? radicand >= 0.0 : (radicand > 0.0 && std::isfinite(radicand));
  if (!valid)
    throw std::domain_error("conservation_delta: no compensating change exists");
  return xs[j] - std::pow(radicand, 1.0 / e);
}

inline double conservation_delta(Exponent p, std::initializer_list<double> xs, std::size_t i,
                                 std::size_t j, double delta) {
  return conservation_delta(p, std::span<const double>(xs.begin(), xs.size()), i, j, delta);
}

/// Raises every component except the minimum to 1, one at a time, moving
/// the minimum so that each step conserves the power mean. Returns the final
/// value v of that component, so M_p(1, ..., 1, v) = M_p(xs). Saturates at 0
/// when (p > 0) no non-negative v exists.
inline double worst_case_reduce(Exponent p, std::span<const double> xs) {
  detail::check_finite_nonzero(p, "worst_case_reduce");
  detail::check_nonempty_nonnegative(xs, "worst_case_reduce");

  const double e = p.value();
  const auto min_index =
      static_cast<std::size_t>(std::distance(xs.begin(), std::min_element(xs.begin(), xs.end())));
  double v = xs[min_index];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i == min_index || xs[i] == 1.0) continue;
    if (e < 0.0 && v == 0.0) return 0.0;
    const double radicand = std::pow(xs[i], e) + std::pow(v, e) - 1.0;
    if (radicand <= 0.0) return 0.0;
    v = std::pow(radicand, 1.0 / e);
  }
  return v;
}

inline double worst_case_reduce(Exponent p, std::initializer_list<double> xs) {
  return worst_case_reduce(p, std::span<const double>(xs.begin(), xs.size()));
}

} // namespace fpl
