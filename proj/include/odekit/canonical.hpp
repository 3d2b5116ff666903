#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "odekit/expr.hpp"
#include "odekit/print.hpp"

namespace odekit {

/// Sum-of-products normal form.
///
/// A monomial is a coefficient times a product of atoms raised to numeric
/// exponents. Atoms are symbols, function applications, powers with symbolic
/// exponents, and multi-term sums raised to anything other than a small
/// positive integer. Atoms are keyed by their printed canonical form, so two
/// expressions are equal when they produce identical term maps.
///
/// Power rules assume symbols are positive: (x^2)^(1/2) becomes x.
class Polynomial {
 public:
  struct Factor {
    Expr atom;
    Number exponent;
  };

  struct Monomial {
    Number coefficient;
    std::map<std::string, Factor> factors;  // keyed by atom text

    std::string key() const {
      std::string k;
      for (const auto& [atom, f] : factors) {
        if (!k.empty()) k += "*";
        k += "{" + atom + "}^" + f.exponent.to_string();
      }
      return k;
    }
  };

  Polynomial() = default;

  static Polynomial constant(const Number& c) {
    Polynomial p;
    if (!c.is_zero()) p.terms_.emplace("", Monomial{c, {}});
    return p;
  }

  static Polynomial atom(const Expr& atom, const Number& exponent = Number(1)) {
    Monomial m{Number(1), {}};
    m.factors.emplace(to_string(atom), Factor{atom, exponent});
    Polynomial p;
    p.terms_.emplace(m.key(), std::move(m));
    return p;
  }

  const std::map<std::string, Monomial>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  bool is_single() const { return terms_.size() == 1; }

  std::optional<Number> as_constant() const {
    if (terms_.empty()) return Number(0);
    if (terms_.size() == 1 && terms_.begin()->first.empty()) return terms_.begin()->second.coefficient;
    return std::nullopt;
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    Polynomial out = a;
    for (const auto& [key, m] : b.terms_) out.add_term(key, m);
    return out;
  }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    Polynomial out;
    for (const auto& [ka, ma] : a.terms_) {
      for (const auto& [kb, mb] : b.terms_) {
        Monomial m = multiply(ma, mb);
        out.add_term(m.key(), m);
      }
    }
    return out;
  }

  Polynomial scaled(const Number& c) const {
    Polynomial out;
    if (c.is_zero()) return out;
    for (auto [key, m] : terms_) {
      m.coefficient = m.coefficient * c;
      out.terms_.emplace(key, std::move(m));
    }
    return out;
  }

  /// Monomial raised to a numeric power; only meaningful when is_single().
  static std::optional<Monomial> power(const Monomial& m, const Number& exponent) {
    Number coefficient(1);
    if (!m.coefficient.is_one()) {
      auto exact = Number::exact_pow(m.coefficient, exponent);
      if (exact) {
        coefficient = *exact;
      } else if (!m.coefficient.is_negative()) {
        coefficient = Number::real(std::pow(m.coefficient.to_double(), exponent.to_double()));
      } else {
        return std::nullopt;
      }
    }
    Monomial out{coefficient, {}};
    for (const auto& [key, f] : m.factors) {
      Number e = f.exponent * exponent;
      if (!e.is_zero()) out.factors.emplace(key, Factor{f.atom, e});
    }
    return out;
  }

  Expr to_expr() const {
    std::vector<Expr> sum;
    for (const auto& [key, m] : terms_) sum.push_back(monomial_expr(m, true));
    return make_sum(std::move(sum));
  }

  static Expr monomial_expr(const Monomial& m, bool with_coefficient) {
    std::vector<Expr> product;
    if (with_coefficient) product.emplace_back(m.coefficient);
    for (const auto& [key, f] : m.factors) product.push_back(make_power(f.atom, Expr(f.exponent)));
    return make_product(std::move(product));
  }

  void add_term(const std::string& key, const Monomial& m) {
    auto it = terms_.find(key);
    if (it == terms_.end()) {
      if (!m.coefficient.is_zero()) terms_.emplace(key, m);
      return;
    }
    const Number before = it->second.coefficient;
    Number sum = before + m.coefficient;
    const bool cancels = sum.is_zero() ||
                         (!sum.is_exact() && std::fabs(sum.to_double()) <=
                                                 1e-14 * std::max(std::fabs(before.to_double()),
                                                                  std::fabs(m.coefficient.to_double())));
    if (cancels) {
      terms_.erase(it);
    } else {
      it->second.coefficient = sum;
    }
  }

 private:
  static Monomial multiply(const Monomial& a, const Monomial& b) {
    Monomial out{a.coefficient * b.coefficient, a.factors};
    for (const auto& [key, f] : b.factors) {
      auto it = out.factors.find(key);
      if (it == out.factors.end()) {
        out.factors.emplace(key, f);
      } else {
        it->second.exponent = it->second.exponent + f.exponent;
        if (it->second.exponent.is_zero()) out.factors.erase(it);
      }
    }
    return out;
  }

  std::map<std::string, Monomial> terms_;
};

namespace detail {

constexpr std::int64_t kMaxExpandPower = 12;

Polynomial canonicalize_impl(const Expr& e);

/// Atom for a multi-term sum raised to `exponent`, normalized so the first
/// term has coefficient 1 (the content is pulled out when exact).
inline Polynomial sum_power_atom(const Polynomial& base, const Number& exponent) {
  const Number lead = base.terms().begin()->second.coefficient;
  if (lead.is_exact() && !lead.is_one()) {
    auto content = Number::exact_pow(lead, exponent);
    if (content) {
      Polynomial normalized = base.scaled(lead.reciprocal());
      return Polynomial::atom(normalized.to_expr(), exponent).scaled(*content);
    }
  }
  return Polynomial::atom(base.to_expr(), exponent);
}

inline Polynomial canonical_power(const Expr& e) {
  Polynomial base = canonicalize_impl(e.base());
  Polynomial exponent = canonicalize_impl(e.exponent());
  auto numeric_exponent = exponent.as_constant();
  if (!numeric_exponent) {
    return Polynomial::atom(Expr::raw(ExprKind::Power, {base.to_expr(), exponent.to_expr()}));
  }
  const Number q = *numeric_exponent;
  if (q.is_zero()) return Polynomial::constant(Number(1));
  if (e.base().kind() == ExprKind::Product) {
    // (a b)^q = a^q b^q, so factored and expanded denominators agree
    Polynomial out = Polynomial::constant(Number(1));
    for (const auto& f : e.base().operands()) out = out * canonicalize_impl(make_power(f, Expr(q)));
    return out;
  }
  if (base.is_zero()) {
    if (!q.is_negative()) return Polynomial();
    return Polynomial::atom(Expr::raw(ExprKind::Power, {Expr(0), Expr(q)}));
  }
  if (base.is_single()) {
    if (auto m = Polynomial::power(base.terms().begin()->second, q)) {
      Polynomial out;
      out.add_term(m->key(), *m);
      return out;
    }
    return Polynomial::atom(Expr::raw(ExprKind::Power, {base.to_expr(), Expr(q)}));
  }
  if (q.is_integer() && q.numerator() > 0 && q.numerator() <= kMaxExpandPower) {
    Polynomial out = Polynomial::constant(Number(1));
    for (std::int64_t i = 0; i < q.numerator(); ++i) out = out * base;
    return out;
  }
  return sum_power_atom(base, q);
}

inline Polynomial canonicalize_impl(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return Polynomial::constant(e.value());
    case ExprKind::Symbol:
      return Polynomial::atom(e);
    case ExprKind::Sum: {
      Polynomial out;
      for (const auto& op : e.operands()) out = out + canonicalize_impl(op);
      return out;
    }
    case ExprKind::Product: {
      Polynomial out = Polynomial::constant(Number(1));
      for (const auto& op : e.operands()) {
        out = out * canonicalize_impl(op);
        if (out.is_zero()) break;
      }
      return out;
    }
    case ExprKind::Power:
      return canonical_power(e);
    case ExprKind::Function: {
      Expr arg = canonicalize_impl(e.argument()).to_expr();
      Expr folded = make_function(e.func(), arg);
      if (folded.is_constant()) return Polynomial::constant(folded.value());
      return Polynomial::atom(folded);
    }
  }
  return Polynomial();
}

}  // namespace detail

inline Polynomial canonicalize(const Expr& e) { return detail::canonicalize_impl(e); }

/// Expands to the canonical sum of products and rebuilds an expression.
inline Expr simplify(const Expr& e) { return canonicalize(e).to_expr(); }

/// True iff both sides expand to the same multiset of canonical monomials.
inline bool canonical_equal(const Expr& a, const Expr& b) {
  const Polynomial pa = canonicalize(a);
  const Polynomial pb = canonicalize(b);
  if (pa.terms().size() != pb.terms().size()) return false;
  auto ib = pb.terms().begin();
  for (const auto& [key, m] : pa.terms()) {
    if (key != ib->first) return false;
    if (!(m.coefficient == ib->second.coefficient)) return false;
    ++ib;
  }
  return true;
}

inline bool is_identically_zero(const Expr& e) { return canonicalize(e).is_zero(); }

struct SignedTerm {
  int sign;       // +1 or -1
  Expr monomial;  // positive-coefficient canonical monomial
};

/// Splits `e` into signed canonical monomials whose signed sum equals `e`.
inline std::vector<SignedTerm> expand_to_terms(const Expr& e) {
  std::vector<SignedTerm> out;
  const Polynomial poly = canonicalize(e);
  for (const auto& [key, m] : poly.terms()) {
    const bool negative = m.coefficient.is_negative();
    Polynomial::Monomial magnitude = m;
    if (negative) magnitude.coefficient = -m.coefficient;
    out.push_back({negative ? -1 : 1, Polynomial::monomial_expr(magnitude, true)});
  }
  return out;
}

}  // namespace odekit
