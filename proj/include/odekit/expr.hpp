#pragma once

#include <algorithm>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/number.hpp"

namespace odekit {

enum class ExprKind { Constant, Symbol, Sum, Product, Power, Function };

/// Closed set of unary functions. `sqrt` is not listed: it parses to a
/// power with exponent 1/2.
enum class Func { Exp, Log, Abs, Sin, Cos };

inline const char* func_name(Func f) {
  switch (f) {
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Abs: return "abs";
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
  }
  return "?";
}

/// Immutable expression tree. Copies share structure, so values can be passed
/// around and read from several threads freely.
///
/// Nodes are only created through the factory functions below, which keep
/// the tree in a light normal form: nested sums/products are flattened,
/// constants fold into one leading coefficient, and 0/1 identities vanish.
class Expr {
 public:
  Expr() : Expr(Number(0)) {}
  Expr(Number value) : node_(std::make_shared<Node>(Node{ExprKind::Constant, value, {}, Func::Exp, {}})) {}  // NOLINT
  Expr(std::int64_t value) : Expr(Number(value)) {}  // NOLINT
  Expr(int value) : Expr(Number(static_cast<std::int64_t>(value))) {}  // NOLINT

  static Expr symbol(std::string name) {
    Expr e;
    e.node_ = std::make_shared<Node>(Node{ExprKind::Symbol, Number(0), std::move(name), Func::Exp, {}});
    return e;
  }

  ExprKind kind() const { return node_->kind; }
  bool is_constant() const { return kind() == ExprKind::Constant; }
  bool is_symbol() const { return kind() == ExprKind::Symbol; }
  bool is_zero() const { return is_constant() && node_->number.is_zero(); }
  bool is_one() const { return is_constant() && node_->number.is_one(); }

  const Number& value() const { return node_->number; }
  const std::string& name() const { return node_->name; }
  Func func() const { return node_->func; }
  std::span<const Expr> operands() const { return node_->operands; }
  const Expr& base() const { return node_->operands[0]; }
  const Expr& exponent() const { return node_->operands[1]; }
  const Expr& argument() const { return node_->operands[0]; }

  bool same_node(const Expr& other) const { return node_ == other.node_; }

  // Raw constructors; prefer make_sum/make_product/make_power.
  static Expr raw(ExprKind kind, std::vector<Expr> operands, Func f = Func::Exp) {
    Expr e;
    e.node_ = std::make_shared<Node>(Node{kind, Number(0), {}, f, std::move(operands)});
    return e;
  }

 private:
  struct Node {
    ExprKind kind;
    Number number;
    std::string name;
    Func func;
    std::vector<Expr> operands;
  };
  std::shared_ptr<const Node> node_;
};

Expr make_sum(std::vector<Expr> terms);
Expr make_product(std::vector<Expr> factors);
Expr make_power(const Expr& base, const Expr& exponent);
Expr make_function(Func f, const Expr& argument);

inline Expr operator+(const Expr& a, const Expr& b) { return make_sum({a, b}); }
inline Expr operator*(const Expr& a, const Expr& b) { return make_product({a, b}); }
inline Expr operator-(const Expr& a) { return make_product({Expr(-1), a}); }
inline Expr operator-(const Expr& a, const Expr& b) { return make_sum({a, -b}); }
inline Expr operator/(const Expr& a, const Expr& b) { return make_product({a, make_power(b, Expr(-1))}); }

inline Expr make_sum(std::vector<Expr> terms) {
  std::vector<Expr> flat;
  Number constant(0);
  for (auto& t : terms) {
    if (t.kind() == ExprKind::Sum) {
      for (const auto& inner : t.operands()) {
        if (inner.is_constant()) {
          constant = constant + inner.value();
        } else {
          flat.push_back(inner);
        }
      }
    } else if (t.is_constant()) {
      constant = constant + t.value();
    } else {
      flat.push_back(std::move(t));
    }
  }
  if (!constant.is_zero()) flat.insert(flat.begin(), Expr(constant));
  if (flat.empty()) return Expr(0);
  if (flat.size() == 1) return flat.front();
  return Expr::raw(ExprKind::Sum, std::move(flat));
}

inline Expr make_product(std::vector<Expr> factors) {
  std::vector<Expr> flat;
  Number coefficient(1);
  auto absorb = [&](const Expr& f) {
    if (f.is_constant()) {
      coefficient = coefficient * f.value();
    } else {
      flat.push_back(f);
    }
  };
  for (const auto& f : factors) {
    if (f.kind() == ExprKind::Product) {
      for (const auto& inner : f.operands()) absorb(inner);
    } else {
      absorb(f);
    }
  }
  if (coefficient.is_zero()) return Expr(0);
  if (!coefficient.is_one()) flat.insert(flat.begin(), Expr(coefficient));
  if (flat.empty()) return Expr(coefficient);
  if (flat.size() == 1) return flat.front();
  return Expr::raw(ExprKind::Product, std::move(flat));
}

inline Expr make_power(const Expr& base, const Expr& exponent) {
  if (exponent.is_zero()) return Expr(1);
  if (exponent.is_one()) return base;
  if (base.is_one()) return Expr(1);
  if (base.is_constant() && exponent.is_constant()) {
    if (auto exact = Number::exact_pow(base.value(), exponent.value())) return Expr(*exact);
    if (!base.value().is_exact() || !exponent.value().is_exact()) {
      return Expr(Number::real(std::pow(base.value().to_double(), exponent.value().to_double())));
    }
  }
  if (base.is_zero() && exponent.is_constant() && !exponent.value().is_negative()) return Expr(0);
  // (x^a)^n with integer n is always x^(a*n)
  if (base.kind() == ExprKind::Power && exponent.is_constant() && exponent.value().is_integer() &&
      base.exponent().is_constant()) {
    return make_power(base.base(), Expr(base.exponent().value() * exponent.value()));
  }
  return Expr::raw(ExprKind::Power, {base, exponent});
}

inline Expr make_function(Func f, const Expr& argument) {
  if (argument.is_constant() && argument.value().is_exact()) {
    const Number& v = argument.value();
    switch (f) {
      case Func::Exp:
        if (v.is_zero()) return Expr(1);
        break;
      case Func::Log:
        if (v.is_one()) return Expr(0);
        break;
      case Func::Abs:
        return Expr(v.is_negative() ? -v : v);
      case Func::Sin:
        if (v.is_zero()) return Expr(0);
        break;
      case Func::Cos:
        if (v.is_zero()) return Expr(1);
        break;
    }
  }
  return Expr::raw(ExprKind::Function, {argument}, f);
}

inline Expr sqrt(const Expr& e) { return make_power(e, Expr(Number::rational(1, 2))); }

/// Names of every symbol appearing in `e`.
inline void collect_symbols(const Expr& e, std::set<std::string>& out) {
  if (e.is_symbol()) {
    out.insert(e.name());
    return;
  }
  for (const auto& op : e.operands()) collect_symbols(op, out);
}

inline std::set<std::string> free_symbols(const Expr& e) {
  std::set<std::string> out;
  collect_symbols(e, out);
  return out;
}

inline bool depends_on(const Expr& e, const std::string& name) {
  if (e.is_symbol()) return e.name() == name;
  for (const auto& op : e.operands()) {
    if (depends_on(op, name)) return true;
  }
  return false;
}

/// Replaces symbols by expressions; `lookup` returns nullptr to keep a symbol.
template <typename Lookup>
Expr substitute(const Expr& e, const Lookup& lookup) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return e;
    case ExprKind::Symbol: {
      const Expr* replacement = lookup(e.name());
      return replacement ? *replacement : e;
    }
    case ExprKind::Sum: {
      std::vector<Expr> ops;
      for (const auto& op : e.operands()) ops.push_back(substitute(op, lookup));
      return make_sum(std::move(ops));
    }
    case ExprKind::Product: {
      std::vector<Expr> ops;
      for (const auto& op : e.operands()) ops.push_back(substitute(op, lookup));
      return make_product(std::move(ops));
    }
    case ExprKind::Power:
      return make_power(substitute(e.base(), lookup), substitute(e.exponent(), lookup));
    case ExprKind::Function:
      return make_function(e.func(), substitute(e.argument(), lookup));
  }
  return e;
}

}  // namespace odekit
