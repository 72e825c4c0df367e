#pragma once

// Concrete syntax:
//
//   formula  := disjunct
//   disjunct := conjunct ( '|{' number '}' conjunct )*
//   conjunct := unary ( '&{' number '}' unary )*
//   unary    := '!' unary | postfix
//   postfix  := primary ( '^' number )*
//   primary  := identifier | '(' formula ')' | '[' formula '@' number ']'
//
// Chains of one operator with one exponent fold into a single n-ary node.
// A chain that mixes exponents is rejected; parenthesize instead.
// '#' starts a comment that runs to the end of the line.

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fpl/formula.hpp"

namespace fpl {

class ParseError : public std::runtime_error {
public:
  ParseError(SourcePos pos, const std::string& message)
      : std::runtime_error(std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " +
                           message),
        pos_(pos), message_(message) {}

  SourcePos pos() const { return pos_; }
  const std::string& message() const { return message_; }

private:
  SourcePos pos_;
  std::string message_;
};

namespace detail {

enum class TokenKind { identifier, number, amp, pipe, bang, caret, lparen, rparen, lbracket,
                       rbracket, lbrace, rbrace, at, minus, plus, end };

struct Token {
  TokenKind kind;
  std::string_view text;
  SourcePos pos;
};

inline const char* describe(TokenKind kind) {
  switch (kind) {
  case TokenKind::identifier: return "identifier";
  case TokenKind::number: return "number";
  case TokenKind::amp: return "'&'";
  case TokenKind::pipe: return "'|'";
  case TokenKind::bang: return "'!'";
  case TokenKind::caret: return "'^'";
  case TokenKind::lparen: return "'('";
  case TokenKind::rparen: return "')'";
  case TokenKind::lbracket: return "'['";
  case TokenKind::rbracket: return "']'";
  case TokenKind::lbrace: return "'{'";
  case TokenKind::rbrace: return "'}'";
  case TokenKind::at: return "'@'";
  case TokenKind::minus: return "'-'";
  case TokenKind::plus: return "'+'";
  case TokenKind::end: return "end of input";
  }
  return "token";
}

inline bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  int line = 1;
  int column = 1;
  std::size_t i = 0;

  auto advance = [&](std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
      ++i;
    }
  };

  while (i < text.size()) {
    const char c = text[i];
    if (c == '#') {
      while (i < text.size() && text[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }

    const SourcePos pos{line, column};
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      tokens.push_back({TokenKind::identifier, text.substr(i, j - i), pos});
      advance(j - i);
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < text.size() && is_digit(text[i + 1]))) {
      std::size_t j = i;
      while (j < text.size() && is_digit(text[j])) ++j;
      if (j < text.size() && text[j] == '.') {
        ++j;
        while (j < text.size() && is_digit(text[j])) ++j;
      }
      if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < text.size() && is_digit(text[k])) {
          while (k < text.size() && is_digit(text[k])) ++k;
          j = k;
        }
      }
      tokens.push_back({TokenKind::number, text.substr(i, j - i), pos});
      advance(j - i);
      continue;
    }

    TokenKind kind;
    switch (c) {
    case '&': kind = TokenKind::amp; break;
    case '|': kind = TokenKind::pipe; break;
    case '!': kind = TokenKind::bang; break;
    case '^': kind = TokenKind::caret; break;
    case '(': kind = TokenKind::lparen; break;
    case ')': kind = TokenKind::rparen; break;
    case '[': kind = TokenKind::lbracket; break;
    case ']': kind = TokenKind::rbracket; break;
    case '{': kind = TokenKind::lbrace; break;
    case '}': kind = TokenKind::rbrace; break;
    case '@': kind = TokenKind::at; break;
    case '-': kind = TokenKind::minus; break;
    case '+': kind = TokenKind::plus; break;
    default:
      throw ParseError(pos, std::string("unexpected character '") + c + "'");
    }
    tokens.push_back({kind, text.substr(i, 1), pos});
    advance(1);
  }
  tokens.push_back({TokenKind::end, {}, {line, column}});
  return tokens;
}

class Parser {
public:
  explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

  Formula parse() {
    Formula f = parse_disjunct();
    if (peek().kind != TokenKind::end) fail_expected("operator or end of input");
    return f;
  }

private:
  const Token& peek() const { return tokens_[index_]; }
  const Token& next() { return tokens_[index_++]; }

  [[noreturn]] void fail_expected(const std::string& what) const {
    const Token& t = peek();
    std::string found = t.kind == TokenKind::end
                            ? std::string("end of input")
                            : std::string(describe(t.kind)) + " '" + std::string(t.text) + "'";
    if (t.kind != TokenKind::identifier && t.kind != TokenKind::number && t.kind != TokenKind::end)
      found = describe(t.kind);
    throw ParseError(t.pos, "expected " + what + ", found " + found);
  }

  const Token& expect(TokenKind kind) {
    if (peek().kind != kind) fail_expected(describe(kind));
    return next();
  }

  double parse_number() {
    double sign = 1.0;
    if (peek().kind == TokenKind::minus) {
      next();
      sign = -1.0;
    } else if (peek().kind == TokenKind::plus) {
      next();
    }
    const Token& t = peek();
    if (t.kind == TokenKind::identifier && t.text == "inf") {
      next();
      return sign * std::numeric_limits<double>::infinity();
    }
    if (t.kind != TokenKind::number) fail_expected("number");
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size())
      throw ParseError(t.pos, "malformed number '" + std::string(t.text) + "'");
    next();
    return sign * value;
  }

  double parse_braced_exponent() {
    expect(TokenKind::lbrace);
    const double p = parse_number();
    expect(TokenKind::rbrace);
    return p;
  }

  template <class MakeNode>
  Formula parse_chain(TokenKind op, char symbol, Formula (Parser::*operand)(), MakeNode make) {
    Formula first = (this->*operand)();
    if (peek().kind != op) return first;

    const SourcePos pos = peek().pos;
    std::vector<Formula> children{first};
    double chain_p = 0.0;
    bool have_p = false;
    while (peek().kind == op) {
      const SourcePos op_pos = next().pos;
      const double p = parse_braced_exponent();
      if (have_p && !(p == chain_p)) {
        throw ParseError(op_pos, std::string("mixed exponents in '") + symbol +
                                     "' chain require parentheses");
      }
      chain_p = p;
      have_p = true;
      children.push_back((this->*operand)());
    }
    return make(Exponent(chain_p), std::move(children), pos);
  }

  Formula parse_disjunct() {
    return parse_chain(TokenKind::pipe, '|', &Parser::parse_conjunct,
                       [](Exponent p, std::vector<Formula> cs, SourcePos pos) {
                         return disj(p, std::move(cs), pos);
                       });
  }

  Formula parse_conjunct() {
    return parse_chain(TokenKind::amp, '&', &Parser::parse_unary,
                       [](Exponent p, std::vector<Formula> cs, SourcePos pos) {
                         return conj(p, std::move(cs), pos);
                       });
  }

  Formula parse_unary() {
    if (peek().kind == TokenKind::bang) {
      const SourcePos pos = next().pos;
      return negate(parse_unary(), pos);
    }
    return parse_postfix();
  }

  Formula parse_postfix() {
    Formula f = parse_primary();
    while (peek().kind == TokenKind::caret) {
      const SourcePos pos = next().pos;
      f = power(std::move(f), parse_number(), pos);
    }
    return f;
  }

  Formula parse_primary() {
    const Token& t = peek();
    switch (t.kind) {
    case TokenKind::identifier: {
      next();
      return leaf(std::string(t.text), t.pos);
    }
    case TokenKind::lparen: {
      next();
      Formula f = parse_disjunct();
      expect(TokenKind::rparen);
      return f;
    }
    case TokenKind::lbracket: {
      const SourcePos pos = next().pos;
      Formula f = parse_disjunct();
      expect(TokenKind::at);
      const double delta = parse_number();
      expect(TokenKind::rbracket);
      return offset(std::move(f), delta, pos);
    }
    default:
      fail_expected("identifier, '!', '(' or '['");
    }
  }

  std::vector<Token> tokens_;
  std::size_t index_ = 0;
};

inline std::string format_number(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline bool is_infix(const Formula& f) {
  return std::holds_alternative<And>(f->op) || std::holds_alternative<Or>(f->op);
}

} // namespace detail

/// Parses one formula. Throws ParseError carrying a 1-based position.
inline Formula parse(std::string_view text) { return detail::Parser(text).parse(); }

/// Canonical text; parse(format(f)) is structurally equal to f.
inline std::string format(const Formula& f) {
  using detail::format_number;
  auto wrapped = [](const Formula& child, bool paren) {
    return paren ? "(" + format(child) + ")" : format(child);
  };
  auto infix = [&](const std::vector<Formula>& children, const std::string& op) {
    std::string out;
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (i) out += op;
      out += wrapped(children[i], detail::is_infix(children[i]));
    }
    return out;
  };

  return std::visit(
      overloaded{
          [](const Leaf& x) { return x.name; },
          [&](const And& x) { return infix(x.children, " &{" + format_number(x.p.value()) + "} "); },
          [&](const Or& x) { return infix(x.children, " |{" + format_number(x.p.value()) + "} "); },
          [&](const Not& x) { return "!" + wrapped(x.child, detail::is_infix(x.child)); },
          [&](const Offset& x) {
            return "[" + format(x.child) + " @ " + format_number(x.delta) + "]";
          },
          [&](const Power& x) {
            const bool paren = detail::is_infix(x.child) || std::holds_alternative<Not>(x.child->op);
            return wrapped(x.child, paren) + "^" + format_number(x.k);
          },
      },
      f->op);
}

} // namespace fpl
