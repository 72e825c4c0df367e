#pragma once

// Random formula generators shared by the unit tests and the acceptance
// binary.

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fpl/formula.hpp"

namespace test {

struct FormulaGen {
  std::mt19937_64& rng;
  std::vector<std::string> names{"a", "b", "c", "f_x", "y2"};
  int max_depth = 4;
  // Gradient checks need finite exponents and non-negative offsets; the
  // round-trip test wants everything the syntax can express.
  bool anything = true;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

  fpl::Exponent exponent() {
    if (anything) {
      switch (pick(6)) {
      case 0: return fpl::Exponent::neg_inf();
      case 1: return fpl::Exponent(0.0);
      case 2: return fpl::Exponent(-1.0);
      case 3: return fpl::Exponent(uniform(0.1, 3.0));
      default: return fpl::Exponent(uniform(-6.0, 0.0));
      }
    }
    return fpl::Exponent(pick(5) == 0 ? 0.0 : uniform(-4.0, 2.0));
  }

  fpl::Formula operator()(int depth = 0) {
    if (depth >= max_depth || pick(3) == 0) return fpl::leaf(names[pick(names.size())]);
    switch (pick(5)) {
    case 0:
    case 1: {
      std::vector<fpl::Formula> kids;
      const std::size_t n = 2 + pick(3);
      for (std::size_t i = 0; i < n; ++i) kids.push_back((*this)(depth + 1));
      return pick(2) == 0 ? fpl::conj(exponent(), std::move(kids))
                          : fpl::disj(exponent(), std::move(kids));
    }
    case 2: return fpl::negate((*this)(depth + 1));
    case 3: {
      const double delta = anything ? uniform(-0.9, 1.0) : uniform(0.0, 1.0);
      return fpl::offset((*this)(depth + 1), delta);
    }
    default: return fpl::power((*this)(depth + 1), anything ? uniform(0.1, 4.0) : uniform(1.0, 3.0));
    }
  }
};

} // namespace test
