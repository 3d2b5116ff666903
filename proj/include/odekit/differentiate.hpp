#pragma once

#include <string>
#include <vector>

#include "odekit/expr.hpp"

namespace odekit {

/// Exact symbolic derivative of `e` with respect to the symbol `wrt`.
inline Expr differentiate(const Expr& e, const std::string& wrt) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return Expr(0);
    case ExprKind::Symbol:
      return Expr(e.name() == wrt ? 1 : 0);
    case ExprKind::Sum: {
      std::vector<Expr> terms;
      for (const auto& op : e.operands()) terms.push_back(differentiate(op, wrt));
      return make_sum(std::move(terms));
    }
    case ExprKind::Product: {
      const auto ops = e.operands();
      std::vector<Expr> terms;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        Expr d = differentiate(ops[i], wrt);
        if (d.is_zero()) continue;
        std::vector<Expr> factors;
        for (std::size_t j = 0; j < ops.size(); ++j) factors.push_back(j == i ? d : ops[j]);
        terms.push_back(make_product(std::move(factors)));
      }
      return make_sum(std::move(terms));
    }
    case ExprKind::Power: {
      const Expr& b = e.base();
      const Expr& p = e.exponent();
      Expr db = differentiate(b, wrt);
      if (!depends_on(p, wrt)) {
        if (db.is_zero()) return Expr(0);
        return make_product({p, make_power(b, p - Expr(1)), db});
      }
      Expr dp = differentiate(p, wrt);
      return make_product({e, make_sum({make_product({dp, make_function(Func::Log, b)}), make_product({p, db, make_power(b, Expr(-1))})})});
    }
    case ExprKind::Function: {
      const Expr& u = e.argument();
      Expr du = differentiate(u, wrt);
      if (du.is_zero()) return Expr(0);
      switch (e.func()) {
        case Func::Exp: return make_product({e, du});
        case Func::Log: return make_product({du, make_power(u, Expr(-1))});
        case Func::Abs: return make_product({u, make_power(e, Expr(-1)), du});
        case Func::Sin: return make_product({make_function(Func::Cos, u), du});
        case Func::Cos: return make_product({Expr(-1), make_function(Func::Sin, u), du});
      }
    }
  }
  return Expr(0);
}

}  // namespace odekit
