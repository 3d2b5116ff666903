#pragma once

#include <string>
#include <vector>

#include "odekit/expr.hpp"

namespace odekit {

namespace detail {

enum Precedence { kSum = 1, kUnary = 2, kProduct = 3, kPower = 4, kAtom = 5 };

struct Printed {
  std::string text;
  int precedence;
};

inline bool is_half(const Number& n) { return n.is_exact() && n.numerator() == 1 && n.denominator() == 2; }

struct InfixStyle {
  std::string symbol(const std::string& name) const { return name; }
  std::string constant(const Number& n) const { return n.to_string(); }
  std::string sqrt(const std::string& inner) const { return "sqrt(" + inner + ")"; }
  std::string function(Func f, const std::string& inner) const {
    return std::string(func_name(f)) + "(" + inner + ")";
  }
  std::string group(const std::string& inner) const { return "(" + inner + ")"; }
  std::string power(const std::string& base, const std::string& exponent, bool simple_exponent) const {
    return base + "^" + (simple_exponent ? exponent : "(" + exponent + ")");
  }
  std::string times() const { return "*"; }
  std::string fraction(const std::string& num, const std::string& den, bool den_simple) const {
    return num + "/" + (den_simple ? den : "(" + den + ")");
  }
};

inline std::string latex_symbol(const std::string& name) {
  static const char* greek[] = {"alpha", "beta",  "gamma", "delta", "epsilon", "zeta",  "eta",   "theta",
                                "iota",  "kappa", "lambda", "mu",   "nu",      "xi",    "pi",    "rho",
                                "sigma", "tau",   "upsilon", "phi", "chi",     "psi",   "omega", "Gamma",
                                "Delta", "Theta", "Lambda", "Xi",   "Pi",      "Sigma", "Phi",   "Psi",
                                "Omega"};
  auto convert = [](const std::string& part) {
    for (const char* g : greek) {
      if (part == g) return "\\" + part;
    }
    return part;
  };
  const auto us = name.find('_');
  if (us == std::string::npos || us == 0 || us + 1 == name.size()) return convert(name);
  return convert(name.substr(0, us)) + "_{" + convert(name.substr(us + 1)) + "}";
}

struct LatexStyle {
  std::string symbol(const std::string& name) const { return latex_symbol(name); }
  std::string constant(const Number& n) const {
    if (n.is_exact() && n.denominator() != 1) {
      return "\\frac{" + std::to_string(n.numerator()) + "}{" + std::to_string(n.denominator()) + "}";
    }
    return n.to_string();
  }
  std::string sqrt(const std::string& inner) const { return "\\sqrt{" + inner + "}"; }
  std::string function(Func f, const std::string& inner) const {
    if (f == Func::Abs) return "\\left|" + inner + "\\right|";
    return "\\" + std::string(func_name(f)) + "{\\left(" + inner + "\\right)}";
  }
  std::string group(const std::string& inner) const { return "\\left(" + inner + "\\right)"; }
  std::string power(const std::string& base, const std::string& exponent, bool) const {
    return base + "^{" + exponent + "}";
  }
  std::string times() const { return " "; }
  std::string fraction(const std::string& num, const std::string& den, bool) const {
    return "\\frac{" + num + "}{" + den + "}";
  }
};

template <typename Style>
Printed print(const Expr& e, const Style& style);

template <typename Style>
std::string wrap(const Printed& p, int min_precedence, const Style& style) {
  return p.precedence >= min_precedence ? p.text : style.group(p.text);
}

inline bool is_negative_term(const Expr& e) {
  if (e.is_constant()) return e.value().is_negative();
  if (e.kind() == ExprKind::Product && e.operands()[0].is_constant()) return e.operands()[0].value().is_negative();
  return false;
}

template <typename Style>
Printed print_product(const Expr& e, const Style& style) {
  Number coefficient(1);
  std::vector<Expr> numerator;
  std::vector<Expr> denominator;
  std::vector<Expr> factors(e.operands().begin(), e.operands().end());
  if (e.kind() != ExprKind::Product) factors = {e};
  for (const auto& f : factors) {
    if (f.is_constant()) {
      coefficient = coefficient * f.value();
    } else if (f.kind() == ExprKind::Power && f.exponent().is_constant() && f.exponent().value().is_negative()) {
      denominator.push_back(make_power(f.base(), Expr(-f.exponent().value())));
    } else {
      numerator.push_back(f);
    }
  }
  const bool negative = coefficient.is_negative();
  if (negative) coefficient = -coefficient;
  std::vector<std::string> num_parts;
  std::vector<std::string> den_parts;
  if (coefficient.is_exact()) {
    if (coefficient.numerator() != 1) num_parts.push_back(std::to_string(coefficient.numerator()));
    if (coefficient.denominator() != 1) den_parts.push_back(std::to_string(coefficient.denominator()));
  } else if (!coefficient.is_one()) {
    num_parts.push_back(style.constant(coefficient));
  }
  for (const auto& f : numerator) num_parts.push_back(wrap(print(f, style), kPower, style));
  for (const auto& f : denominator) den_parts.push_back(wrap(print(f, style), kPower, style));

  auto join = [&](const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) out += style.times();
      out += parts[i];
    }
    return out;
  };
  std::string text = num_parts.empty() ? "1" : join(num_parts);
  if (!den_parts.empty()) text = style.fraction(text, join(den_parts), den_parts.size() == 1);
  if (negative) return {"-" + text, kUnary};
  const bool single = den_parts.empty() && num_parts.size() == 1 && numerator.size() == 1;
  if (single) return print(numerator.front(), style);
  return {text, kProduct};
}

template <typename Style>
Printed print(const Expr& e, const Style& style) {
  switch (e.kind()) {
    case ExprKind::Constant: {
      const Number& n = e.value();
      if (n.is_negative()) return {"-" + style.constant(-n), kUnary};
      if (n.is_exact() && n.denominator() != 1) return {style.constant(n), kProduct};
      return {style.constant(n), kAtom};
    }
    case ExprKind::Symbol:
      return {style.symbol(e.name()), kAtom};
    case ExprKind::Sum: {
      std::string text;
      bool first = true;
      for (const auto& term : e.operands()) {
        if (first) {
          text = wrap(print(term, style), kUnary, style);
          first = false;
        } else if (is_negative_term(term)) {
          text += " - " + wrap(print(-term, style), kProduct, style);
        } else {
          text += " + " + wrap(print(term, style), kProduct, style);
        }
      }
      return {text, kSum};
    }
    case ExprKind::Product:
      return print_product(e, style);
    case ExprKind::Power: {
      if (e.exponent().is_constant()) {
        const Number& p = e.exponent().value();
        if (is_half(p)) return {style.sqrt(print(e.base(), style).text), kAtom};
        if (p.is_negative()) return print_product(e, style);
      }
      std::string base = wrap(print(e.base(), style), kAtom, style);
      Printed exponent = print(e.exponent(), style);
      return {style.power(base, exponent.text, exponent.precedence == kAtom), kPower};
    }
    case ExprKind::Function:
      return {style.function(e.func(), print(e.argument(), style).text), kAtom};
  }
  return {"?", kAtom};
}

}  // namespace detail

/// Infix text that `parse` reads back to an equivalent expression.
inline std::string to_string(const Expr& e) { return detail::print(e, detail::InfixStyle{}).text; }

inline std::string to_latex(const Expr& e) { return detail::print(e, detail::LatexStyle{}).text; }

}  // namespace odekit
