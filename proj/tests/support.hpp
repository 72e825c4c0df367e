#pragma once

// Test-only oracles. Nothing here calls into the library's numerics, so the
// checks built on these helpers stay independent of the code under test.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace test {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo,
                                         double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// ((1/n) sum x^p)^(1/p) straight from the definition; p != 0.
inline double naive_power_mean(double p, const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += std::pow(x, p);
  return std::pow(s / static_cast<double>(xs.size()), 1.0 / p);
}

inline double geometric_mean(const std::vector<double>& xs) {
  double prod = 1.0;
  for (double x : xs) prod *= x;
  return std::pow(prod, 1.0 / static_cast<double>(xs.size()));
}

template <class F>
double central_difference(F&& f, std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// |a - b| relative to the larger magnitude, floored at 1e-3 so that
/// near-zero derivatives are compared absolutely.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

} // namespace test
