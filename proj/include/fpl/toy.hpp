#pragma once

// Two competing fulfillments driven by projected gradient ascent on an
// FPL utility. Each base value b_i suppresses the other's fulfillment:
//   f0 = b0 (1 - alpha b1),  f1 = b1 (1 - alpha b0).

#include <algorithm>
#include <array>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "fpl/semantics.hpp"

namespace fpl::toy {

struct ToyState {
  double b0 = 0.55;
  double b1 = 0.45;
  double alpha = 0.5;
};

struct TraceRow {
  std::size_t step = 0;
  double b0 = 0.0;
  double b1 = 0.0;
  double f0 = 0.0;
  double f1 = 0.0;
  double utility = 0.0;
};

struct Fulfillments {
  double f0;
  double f1;
};

inline Fulfillments toy_fulfillments(const ToyState& s) {
  return {s.b0 * (1.0 - s.alpha * s.b1), s.b1 * (1.0 - s.alpha * s.b0)};
}

struct ToyConfig {
  double lr = 0.01;
  std::size_t steps = 2000;
};

/// Runs `steps` projected gradient-ascent updates and returns steps + 1
/// rows, the first being the initial state. Throws SpecError when the
/// spec's variables are not exactly {f0, f1}.
inline std::vector<TraceRow> toy_run(const UtilitySpec& spec, ToyState state,
                                     const ToyConfig& cfg = {}) {
  const auto i0 = spec.index_of("f0");
  const auto i1 = spec.index_of("f1");
  if (spec.size() != 2 || !i0 || !i1)
    throw SpecError("toy spec must use exactly the variables f0 and f1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("toy_run: lr must be positive");

  std::vector<TraceRow> trace;
  trace.reserve(cfg.steps + 1);
  std::array<double, 2> f{};

  auto record = [&](std::size_t step) {
    const auto [f0, f1] = toy_fulfillments(state);
    f[*i0] = f0;
    f[*i1] = f1;
    trace.push_back({step, state.b0, state.b1, f0, f1, spec.evaluate(f)});
  };

  record(0);
  const double a = state.alpha;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto g = spec.gradient(f);
    const double du_df0 = g[*i0];
    const double du_df1 = g[*i1];
    const double du_db0 = du_df0 * (1.0 - a * state.b1) + du_df1 * (-a * state.b1);
    const double du_db1 = du_df0 * (-a * state.b0) + du_df1 * (1.0 - a * state.b0);
    state.b0 = std::clamp(state.b0 + cfg.lr * du_db0, 0.0, 1.0);
    state.b1 = std::clamp(state.b1 + cfg.lr * du_db1, 0.0, 1.0);
    record(step);
  }
  return trace;
}

enum class Regime { compromise, dominance, intermediate };

inline const char* to_string(Regime r) {
  switch (r) {
  case Regime::compromise: return "compromise";
  case Regime::dominance: return "dominance";
  case Regime::intermediate: return "intermediate";
  }
  return "?";
}

/// Final-state classification: compromise when the fulfillments end within
/// 0.05 of each other, dominance when one leads by at least 0.25.
inline Regime classify(const std::vector<TraceRow>& trace) {
  const auto& last = trace.back();
  const double gap = std::abs(last.f0 - last.f1);
  if (gap < 0.05) return Regime::compromise;
  if (gap >= 0.25) return Regime::dominance;
  return Regime::intermediate;
}

/// First step at which f0's per-step gain overtakes f1's after an opening
/// phase led by f1, or 0 when the trace shows no such ordering.
inline std::size_t priority_crossing(const std::vector<TraceRow>& trace) {
  bool f1_led = false;
  for (std::size_t t = 1; t < trace.size(); ++t) {
    const double d0 = trace[t].f0 - trace[t - 1].f0;
    const double d1 = trace[t].f1 - trace[t - 1].f1;
    if (!f1_led) {
      if (d1 > d0) f1_led = true;
      else if (d0 > d1) return 0;
    } else if (d0 > d1) {
      return t;
    }
  }
  return 0;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << "step,b0,b1,f0,f1,utility\n" << std::setprecision(12);
  for (const auto& r : trace)
    os << r.step << ',' << r.b0 << ',' << r.b1 << ',' << r.f0 << ',' << r.f1 << ',' << r.utility
       << '\n';
  os.flags(flags);
  os.precision(prec);
}

} // namespace fpl::toy
