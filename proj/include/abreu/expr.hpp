#pragma once

// Scalar expressions over (xi1, xi2) with forward-mode derivative propagation.
//
// Grammar:
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := ['-' | '+'] base ('^' integer)?
//   base   := number | 'xi1' | 'xi2' | '(' expr ')' | ('exp' | 'log') '(' expr ')'

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/jet.hpp"
#include "abreu/linalg.hpp"

namespace abreu {

namespace expr_detail {

enum class Kind { constant, var1, var2, neg, add, sub, mul, div, pow, exp, log };

struct Node {
  Kind kind;
  double value = 0.0;  // constant
  int exponent = 0;    // pow
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
  std::size_t begin = 0;  // source span [begin, end)
  std::size_t end = 0;
};

using NodePtr = std::shared_ptr<const Node>;

inline double scalar_value(double v) { return v; }
template <int N>
double scalar_value(const Jet<N>& j) { return j.value(); }

inline double exp_of(double v) { return std::exp(v); }
inline double log_of(double v) { return std::log(v); }
inline double pow_of(double v, int n) { return std::pow(v, n); }
template <int N>
Jet<N> exp_of(const Jet<N>& v) { return exp(v); }
template <int N>
Jet<N> log_of(const Jet<N>& v) { return log(v); }
template <int N>
Jet<N> pow_of(const Jet<N>& v, int n) { return pow(v, n); }

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  NodePtr parse() {
    NodePtr root = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_ + 1); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= s_.size()) fail(std::string("expected '") + c + "' before end of input");
      fail(std::string("expected '") + c + "'");
    }
  }

  static NodePtr make(Kind k, NodePtr a, NodePtr b, std::size_t begin, std::size_t end) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    n->begin = begin;
    n->end = end;
    return n;
  }

  NodePtr parse_expr() {
    skip_ws();
    const std::size_t begin = pos_;
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Kind::add, lhs, parse_term(), begin, pos_);
      } else if (accept('-')) {
        lhs = make(Kind::sub, lhs, parse_term(), begin, pos_);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    skip_ws();
    const std::size_t begin = pos_;
    NodePtr lhs = parse_factor();
    for (;;) {
      if (accept('*')) {
        lhs = make(Kind::mul, lhs, parse_factor(), begin, pos_);
      } else if (accept('/')) {
        lhs = make(Kind::div, lhs, parse_factor(), begin, pos_);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_factor() {
    skip_ws();
    const std::size_t begin = pos_;
    if (accept('-')) return make(Kind::neg, parse_factor(), nullptr, begin, pos_);
    if (accept('+')) return parse_factor();
    NodePtr base = parse_base();
    if (accept('^')) {
      skip_ws();
      const std::size_t start = pos_;
      if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
      const std::size_t digits = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ == digits) fail("expected integer exponent");
      auto n = std::make_shared<Node>();
      n->kind = Kind::pow;
      n->exponent = std::stoi(std::string(s_.substr(start, pos_ - start)));
      n->lhs = std::move(base);
      n->begin = begin;
      n->end = pos_;
      return n;
    }
    return base;
  }

  NodePtr parse_base() {
    skip_ws();
    const std::size_t begin = pos_;
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* last = nullptr;
      const std::string buf(s_.substr(pos_));
      const double v = std::strtod(buf.c_str(), &last);
      const std::size_t used = static_cast<std::size_t>(last - buf.c_str());
      if (used == 0) fail("malformed number");
      pos_ += used;
      auto n = std::make_shared<Node>();
      n->kind = Kind::constant;
      n->value = v;
      n->begin = begin;
      n->end = pos_;
      return n;
    }
    if (accept('(')) {
      NodePtr inner = parse_expr();
      expect(')');
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view ident = s_.substr(begin, pos_ - begin);
      if (ident == "xi1" || ident == "xi2") {
        auto n = std::make_shared<Node>();
        n->kind = ident == "xi1" ? Kind::var1 : Kind::var2;
        n->begin = begin;
        n->end = pos_;
        return n;
      }
      if (ident == "exp" || ident == "log") {
        expect('(');
        NodePtr arg = parse_expr();
        expect(')');
        return make(ident == "exp" ? Kind::exp : Kind::log, arg, nullptr, begin, pos_);
      }
      pos_ = begin;
      fail("unknown identifier '" + std::string(ident) + "'");
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::optional<double> fold_constant(const Node& n) {
  auto un = [&](auto f) -> std::optional<double> {
    auto a = fold_constant(*n.lhs);
    if (!a) return std::nullopt;
    return f(*a);
  };
  auto bin = [&](auto f) -> std::optional<double> {
    auto a = fold_constant(*n.lhs);
    auto b = fold_constant(*n.rhs);
    if (!a || !b) return std::nullopt;
    return f(*a, *b);
  };
  switch (n.kind) {
    case Kind::constant: return n.value;
    case Kind::var1:
    case Kind::var2: return std::nullopt;
    case Kind::neg: return un([](double a) { return -a; });
    case Kind::add: return bin([](double a, double b) { return a + b; });
    case Kind::sub: return bin([](double a, double b) { return a - b; });
    case Kind::mul: return bin([](double a, double b) { return a * b; });
    case Kind::div: return bin([](double a, double b) { return a / b; });
    case Kind::pow: return un([&](double a) { return std::pow(a, n.exponent); });
    case Kind::exp: return un([](double a) { return std::exp(a); });
    case Kind::log: return un([](double a) { return std::log(a); });
  }
  return std::nullopt;
}

}  // namespace expr_detail

/// Immutable parsed expression. Cheap to copy (shared AST).
class Expr {
 public:
  Expr() : Expr(parse("0")) {}

  static Expr parse(std::string_view text) {
    Expr e(expr_detail::Parser(text).parse(), std::string(text));
    return e;
  }

  const std::string& text() const { return text_; }

  /// Value if the expression does not depend on (xi1, xi2) and folds to a finite number.
  std::optional<double> constant() const { return constant_; }

  double value(Vec2 xi) const {
    if (constant_) return *constant_;
    return eval<double>(*root_, xi.x, xi.y);
  }

  template <int N>
  Jet<N> jet(Vec2 xi) const {
    if (constant_) return Jet<N>(*constant_);
    return eval<Jet<N>>(*root_, Jet<N>::variable(xi.x, 0), Jet<N>::variable(xi.y, 1));
  }

 private:
  Expr(expr_detail::NodePtr root, std::string text) : root_(std::move(root)), text_(std::move(text)) {
    auto c = expr_detail::fold_constant(*root_);
    if (c && std::isfinite(*c)) constant_ = c;
  }

  [[noreturn]] void domain_fail(const expr_detail::Node& n, const std::string& what, double arg) const {
    std::ostringstream os;
    os << what << " in subexpression '" << text_.substr(n.begin, n.end - n.begin) << "' (argument "
       << arg << ")";
    throw DomainError(os.str());
  }

  template <class T>
  T eval(const expr_detail::Node& n, const T& x1, const T& x2) const {
    using expr_detail::Kind;
    using expr_detail::scalar_value;
    switch (n.kind) {
      case Kind::constant: return T(n.value);
      case Kind::var1: return x1;
      case Kind::var2: return x2;
      case Kind::neg: return -eval(*n.lhs, x1, x2);
      case Kind::add: return eval(*n.lhs, x1, x2) + eval(*n.rhs, x1, x2);
      case Kind::sub: return eval(*n.lhs, x1, x2) - eval(*n.rhs, x1, x2);
      case Kind::mul: return eval(*n.lhs, x1, x2) * eval(*n.rhs, x1, x2);
      case Kind::div: {
        const T den = eval(*n.rhs, x1, x2);
        if (scalar_value(den) == 0.0) domain_fail(n, "division by zero", 0.0);
        return eval(*n.lhs, x1, x2) / den;
      }
      case Kind::pow: {
        const T base = eval(*n.lhs, x1, x2);
        if (n.exponent < 0 && scalar_value(base) == 0.0) domain_fail(n, "negative power of zero", 0.0);
        return expr_detail::pow_of(base, n.exponent);
      }
      case Kind::exp: return expr_detail::exp_of(eval(*n.lhs, x1, x2));
      case Kind::log: {
        const T arg = eval(*n.lhs, x1, x2);
        if (!(scalar_value(arg) > 0.0)) domain_fail(n, "log of non-positive value", scalar_value(arg));
        return expr_detail::log_of(arg);
      }
    }
    return T(0.0);
  }

  expr_detail::NodePtr root_;
  std::string text_;
  std::optional<double> constant_;
};

/// Derivatives of `e` at `xi` up to `order` (0..3); higher coefficients are zero.
inline Jet3 eval_jet(const Expr& e, Vec2 xi, int order = 3) {
  Jet3 j = e.jet<3>(xi);
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; a + b <= 3; ++b)
      if (a + b > order) j.coeff(a, b) = 0.0;
  return j;
}

}  // namespace abreu
