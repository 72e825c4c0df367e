#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fpl/algebra.hpp"
#include "fpl/formula.hpp"
#include "fpl/parser.hpp"

namespace fpl {

enum class Mode { strict, relaxed };
enum class Severity { warning, error };

struct Diagnostic {
  Severity severity;
  SourcePos pos;
  std::string message;
};

inline const char* to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

/// `file:line:col: severity: message`
inline std::string format_diagnostic(std::string_view file, const Diagnostic& d) {
  std::ostringstream os;
  os << file << ':' << d.pos.line << ':' << d.pos.column << ": " << to_string(d.severity) << ": "
     << d.message;
  return os.str();
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !detail::is_ident_start(s.front())) return false;
  return std::all_of(s.begin(), s.end(), detail::is_ident_char);
}

namespace detail {

inline void validate_node(const Formula& f, Mode mode, std::vector<Diagnostic>& out) {
  if (!f) {
    out.push_back({Severity::error, {}, "missing sub-formula"});
    return;
  }
  auto check_infix = [&](Exponent p, const std::vector<Formula>& children) {
    if (children.size() < 2)
      out.push_back({Severity::error, f->pos, "operator needs at least two operands"});
    if (std::isnan(p.value())) {
      out.push_back({Severity::error, f->pos, "p must be a number"});
    } else if (p.value() > 0.0) {
      if (mode == Mode::strict)
        out.push_back({Severity::error, f->pos, "p must be <= 0"});
      else
        out.push_back({Severity::warning, f->pos, "p > 0 composes objectives outside the logic"});
    }
    for (const auto& c : children) validate_node(c, mode, out);
  };

  std::visit(overloaded{
                 [&](const Leaf& x) {
                   if (!is_identifier(x.name))
                     out.push_back({Severity::error, f->pos, "invalid identifier '" + x.name + "'"});
                 },
                 [&](const And& x) { check_infix(x.p, x.children); },
                 [&](const Or& x) { check_infix(x.p, x.children); },
                 [&](const Not& x) { validate_node(x.child, mode, out); },
                 [&](const Offset& x) {
                   if (!(x.delta > -1.0))
                     out.push_back({Severity::error, f->pos, "delta must exceed -1"});
                   else if (x.delta > 1.0)
                     out.push_back({Severity::error, f->pos, "delta must not exceed 1"});
                   validate_node(x.child, mode, out);
                 },
                 [&](const Power& x) {
                   if (!(x.k > 0.0) || !std::isfinite(x.k))
                     out.push_back({Severity::error, f->pos, "emphasis exponent must be positive"});
                   validate_node(x.child, mode, out);
                 },
             },
             f->op);
}

} // namespace detail

/// Empty iff the formula is well-formed under `mode`. Relaxed mode reports
/// p > 0 as a warning instead of an error.
inline std::vector<Diagnostic> validate(const Formula& f, Mode mode) {
  std::vector<Diagnostic> out;
  detail::validate_node(f, mode, out);
  return out;
}

/// Thrown when a formula fails validation or a binding does not fit it.
class SpecError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A validated formula together with the layout of the fulfillment vectors
/// it consumes. Immutable once built; safe to share between threads.
class UtilitySpec {
public:
  UtilitySpec(Formula formula, std::vector<std::string> objective_order = {},
              Mode mode = Mode::strict)
      : formula_(std::move(formula)) {
    const auto diags = validate(formula_, mode);
    for (const auto& d : diags)
      if (d.severity == Severity::error)
        throw SpecError(std::to_string(d.pos.line) + ":" + std::to_string(d.pos.column) + ": " +
                        d.message);

    auto vars = free_variables(formula_);
    if (objective_order.empty()) {
      order_ = std::move(vars);
    } else {
      auto sorted_order = objective_order;
      std::sort(sorted_order.begin(), sorted_order.end());
      if (std::adjacent_find(sorted_order.begin(), sorted_order.end()) != sorted_order.end())
        throw SpecError("duplicate objective in objective order");
      std::sort(vars.begin(), vars.end());
      if (sorted_order != vars)
        throw SpecError("objective order must list exactly the formula's variables");
      order_ = std::move(objective_order);
    }
    compile(formula_);
  }

  const Formula& formula() const { return formula_; }
  const std::vector<std::string>& objective_order() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < order_.size(); ++i)
      if (order_[i] == name) return i;
    return std::nullopt;
  }

  /// Utility of a fulfillment vector laid out in objective_order().
  double evaluate(std::span<const double> values) const {
    check_values(values);
    std::vector<double> node_values(ops_.size());
    forward(values, node_values);
    return node_values.back();
  }

  /// du/df_i in objective_order(). Requires finite exponents throughout.
  std::vector<double> gradient(std::span<const double> values) const {
    check_values(values);
    std::vector<double> node_values(ops_.size());
    forward(values, node_values);

    std::vector<double> adjoint(ops_.size(), 0.0);
    std::vector<double> grad(order_.size(), 0.0);
    adjoint.back() = 1.0;
    std::vector<double> scratch;
    for (std::size_t i = ops_.size(); i-- > 0;) {
      const Op& op = ops_[i];
      const double adj = adjoint[i];
      switch (op.kind) {
      case Kind::leaf: grad[op.var] += adj; break;
      case Kind::conj:
      case Kind::disj: {
        scratch.clear();
        for (std::size_t c : op.children)
          scratch.push_back(op.kind == Kind::conj ? node_values[c] : 1.0 - node_values[c]);
        const auto g = power_mean_grad(Exponent(op.param), scratch);
        for (std::size_t k = 0; k < op.children.size(); ++k) adjoint[op.children[k]] += adj * g[k];
        break;
      }
      case Kind::neg: adjoint[op.children[0]] -= adj; break;
      case Kind::offset: {
        const double raw = offset_raw(node_values[op.children[0]], op.param);
        if (raw >= 0.0 && raw <= 1.0) adjoint[op.children[0]] += adj / (1.0 + op.param);
        break;
      }
      case Kind::power: {
        double c = node_values[op.children[0]];
        if (op.param < 1.0) c = std::max(c, grad_epsilon);
        adjoint[op.children[0]] += adj * op.param * std::pow(c, op.param - 1.0);
        break;
      }
      }
    }
    return grad;
  }

  double evaluate(const std::map<std::string, double>& binding) const {
    const auto values = resolve(binding);
    return evaluate(values);
  }

  std::map<std::string, double> gradient(const std::map<std::string, double>& binding) const {
    const auto g = gradient(resolve(binding));
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < order_.size(); ++i) out[order_[i]] = g[i];
    return out;
  }

  std::vector<double> resolve(const std::map<std::string, double>& binding) const {
    std::vector<double> values;
    values.reserve(order_.size());
    for (const auto& name : order_) {
      const auto it = binding.find(name);
      if (it == binding.end()) throw SpecError("unbound variable '" + name + "'");
      values.push_back(it->second);
    }
    return values;
  }

private:
  enum class Kind { leaf, conj, disj, neg, offset, power };

  struct Op {
    Kind kind;
    double param = 0.0;
    std::size_t var = 0;
    std::vector<std::size_t> children;
  };

  static double offset_raw(double u, double delta) {
    return (u + std::max(delta, 0.0)) / (1.0 + delta);
  }

  void check_values(std::span<const double> values) const {
    if (values.size() != order_.size())
      throw SpecError("expected " + std::to_string(order_.size()) + " fulfillment values, got " +
                      std::to_string(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!(values[i] >= 0.0 && values[i] <= 1.0))
        throw SpecError("fulfillment '" + order_[i] + "' outside [0,1]");
  }

  // Children are emitted before their parent; the root is the last op.
  std::size_t compile(const Formula& f) {
    // !!x is x; skipping the pair keeps double negation exact in floating point
    if (const auto* outer = std::get_if<Not>(&f->op))
      if (const auto* inner = std::get_if<Not>(&outer->child->op)) return compile(inner->child);
    Op op;
    std::visit(overloaded{
                   [&](const Leaf& x) {
                     op.kind = Kind::leaf;
                     op.var = *index_of(x.name);
                   },
                   [&](const And& x) {
                     op.kind = Kind::conj;
                     op.param = x.p.value();
                     for (const auto& c : x.children) op.children.push_back(compile(c));
                   },
                   [&](const Or& x) {
                     op.kind = Kind::disj;
                     op.param = x.p.value();
                     for (const auto& c : x.children) op.children.push_back(compile(c));
                   },
                   [&](const Not& x) {
                     op.kind = Kind::neg;
                     op.children.push_back(compile(x.child));
                   },
                   [&](const Offset& x) {
                     op.kind = Kind::offset;
                     op.param = x.delta;
                     op.children.push_back(compile(x.child));
                   },
                   [&](const Power& x) {
                     op.kind = Kind::power;
                     op.param = x.k;
                     op.children.push_back(compile(x.child));
                   },
               },
               f->op);
    ops_.push_back(std::move(op));
    return ops_.size() - 1;
  }

  void forward(std::span<const double> values, std::vector<double>& out) const {
    std::vector<double> scratch;
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      const Op& op = ops_[i];
      switch (op.kind) {
      case Kind::leaf: out[i] = values[op.var]; break;
      case Kind::conj:
      case Kind::disj: {
        scratch.clear();
        for (std::size_t c : op.children)
          scratch.push_back(op.kind == Kind::conj ? out[c] : 1.0 - out[c]);
        const double m = power_mean(Exponent(op.param), scratch);
        out[i] = op.kind == Kind::conj ? m : 1.0 - m;
        break;
      }
      case Kind::neg: out[i] = 1.0 - out[op.children[0]]; break;
      case Kind::offset:
        out[i] = std::clamp(offset_raw(out[op.children[0]], op.param), 0.0, 1.0);
        break;
      case Kind::power: out[i] = std::pow(out[op.children[0]], op.param); break;
      }
    }
  }

  Formula formula_;
  std::vector<std::string> order_;
  std::vector<Op> ops_;
};

/// Lower bound on one objective implied by a utility target. `guaranteed`
/// is false when every occurrence of the objective sits below a negation
/// or disjunction, where a high utility implies nothing about it.
struct BoundEntry {
  std::string name;
  double bound = 0.0;
  bool guaranteed = false;
};

namespace detail {

inline double child_requirement(Exponent p, std::size_t n, double target) {
  if (p.is_min()) return target;
  if (p.is_max()) return 0.0;
  // p -> 0 limit of (n (y^p - 1) + 1)^(1/p)
  if (p.is_geometric()) return std::pow(target, static_cast<double>(n));
  return min_fulfillment_bound(p, n, target);
}

inline void propagate_bound(const Formula& f, double target, bool guaranteed,
                            std::map<std::string, BoundEntry>& out) {
  std::visit(overloaded{
                 [&](const Leaf& x) {
                   auto& e = out[x.name];
                   e.name = x.name;
                   if (guaranteed) {
                     e.bound = e.guaranteed ? std::max(e.bound, target) : target;
                     e.guaranteed = true;
                   }
                 },
                 [&](const And& x) {
                   const double t = guaranteed ? child_requirement(x.p, x.children.size(), target)
                                               : 0.0;
                   for (const auto& c : x.children) propagate_bound(c, t, guaranteed, out);
                 },
                 [&](const Or& x) {
                   for (const auto& c : x.children) propagate_bound(c, 0.0, false, out);
                 },
                 [&](const Not& x) { propagate_bound(x.child, 0.0, false, out); },
                 [&](const Offset& x) {
                   const double t = target * (1.0 + x.delta) - std::max(x.delta, 0.0);
                   propagate_bound(x.child, std::clamp(t, 0.0, 1.0), guaranteed, out);
                 },
                 [&](const Power& x) {
                   propagate_bound(x.child, std::pow(target, 1.0 / x.k), guaranteed, out);
                 },
             },
             f->op);
}

} // namespace detail

/// For each objective, the minimum fulfillment implied by u >= target,
/// in objective order.
inline std::vector<BoundEntry> bound_report(const UtilitySpec& spec, double target) {
  if (!(target >= 0.0 && target <= 1.0))
    throw SpecError("target utility must lie in [0,1]");
  std::map<std::string, BoundEntry> by_name;
  detail::propagate_bound(spec.formula(), target, true, by_name);
  std::vector<BoundEntry> out;
  for (const auto& name : spec.objective_order()) out.push_back(by_name.at(name));
  return out;
}

/// An FPL spec file: one formula, '#' comments, and optional
/// `objective <name>` lines fixing the fulfillment-vector layout.
struct SpecFile {
  Formula formula;
  std::vector<std::string> objectives;
};

inline SpecFile parse_spec_file(std::string_view text) {
  static const std::regex header(R"(^\s*objective\s+([A-Za-z_][A-Za-z0-9_]*)\s*(#.*)?$)");
  SpecFile out;
  std::string body;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const std::string line(text.substr(start, end - start));
    std::smatch m;
    if (std::regex_match(line, m, header)) {
      out.objectives.push_back(m[1]);
      body += '\n';
    } else {
      body += line;
      if (end < text.size()) body += '\n';
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  out.formula = parse(body);
  return out;
}

inline UtilitySpec make_spec(std::string_view text, Mode mode = Mode::strict) {
  auto file = parse_spec_file(text);
  return UtilitySpec(std::move(file.formula), std::move(file.objectives), mode);
}

} // namespace fpl
