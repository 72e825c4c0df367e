#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fpl/algebra.hpp"

namespace fpl {

/// 1-based source position of the token that introduced a node. Zero for
/// nodes built programmatically.
struct SourcePos {
  int line = 0;
  int column = 0;
};

struct Node;
using Formula = std::shared_ptr<const Node>;

struct Leaf {
  std::string name;
};

struct And {
  Exponent p;
  std::vector<Formula> children;
};

struct Or {
  Exponent p;
  std::vector<Formula> children;
};

struct Not {
  Formula child;
};

/// Priority offset [child @ delta].
struct Offset {
  Formula child;
  double delta = 0.0;
};

/// Emphasis child^k.
struct Power {
  Formula child;
  double k = 1.0;
};

struct Node {
  std::variant<Leaf, And, Or, Not, Offset, Power> op;
  SourcePos pos;
};

inline Formula leaf(std::string name, SourcePos pos = {}) {
  return std::make_shared<const Node>(Node{Leaf{std::move(name)}, pos});
}
inline Formula conj(Exponent p, std::vector<Formula> children, SourcePos pos = {}) {
  return std::make_shared<const Node>(Node{And{p, std::move(children)}, pos});
}
inline Formula disj(Exponent p, std::vector<Formula> children, SourcePos pos = {}) {
  return std::make_shared<const Node>(Node{Or{p, std::move(children)}, pos});
}
inline Formula negate(Formula child, SourcePos pos = {}) {
  return std::make_shared<const Node>(Node{Not{std::move(child)}, pos});
}
inline Formula offset(Formula child, double delta, SourcePos pos = {}) {
  return std::make_shared<const Node>(Node{Offset{std::move(child), delta}, pos});
}
inline Formula power(Formula child, double k, SourcePos pos = {}) {
  return std::make_shared<const Node>(Node{Power{std::move(child), k}, pos});
}

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

/// Structural equality; source positions are ignored.
inline bool structurally_equal(const Formula& a, const Formula& b) {
  if (a == b) return true;
  if (!a || !b || a->op.index() != b->op.index()) return false;

  auto same_children = [](const std::vector<Formula>& xs, const std::vector<Formula>& ys) {
    if (xs.size() != ys.size()) return false;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!structurally_equal(xs[i], ys[i])) return false;
    return true;
  };

  return std::visit(
      overloaded{
          [&](const Leaf& x) { return x.name == std::get<Leaf>(b->op).name; },
          [&](const And& x) {
            const auto& y = std::get<And>(b->op);
            return x.p == y.p && same_children(x.children, y.children);
          },
          [&](const Or& x) {
            const auto& y = std::get<Or>(b->op);
            return x.p == y.p && same_children(x.children, y.children);
          },
          [&](const Not& x) { return structurally_equal(x.child, std::get<Not>(b->op).child); },
          [&](const Offset& x) {
            const auto& y = std::get<Offset>(b->op);
            return x.delta == y.delta && structurally_equal(x.child, y.child);
          },
          [&](const Power& x) {
            const auto& y = std::get<Power>(b->op);
            return x.k == y.k && structurally_equal(x.child, y.child);
          },
      },
      a->op);
}

namespace detail {

inline void collect_free_variables(const Formula& f, std::vector<std::string>& out) {
  std::visit(overloaded{
                 [&](const Leaf& x) {
                   if (std::find(out.begin(), out.end(), x.name) == out.end())
                     out.push_back(x.name);
                 },
                 [&](const And& x) {
                   for (const auto& c : x.children) collect_free_variables(c, out);
                 },
                 [&](const Or& x) {
                   for (const auto& c : x.children) collect_free_variables(c, out);
                 },
                 [&](const Not& x) { collect_free_variables(x.child, out); },
                 [&](const Offset& x) { collect_free_variables(x.child, out); },
                 [&](const Power& x) { collect_free_variables(x.child, out); },
             },
             f->op);
}

} // namespace detail

/// Leaf names in order of first appearance, left to right.
inline std::vector<std::string> free_variables(const Formula& f) {
  std::vector<std::string> out;
  detail::collect_free_variables(f, out);
  return out;
}

} // namespace fpl
