#pragma once

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/expr.hpp"
#include "odekit/print.hpp"

namespace odekit {

namespace detail {

inline double checked_pow(double base, double exponent) {
  if (base == 0.0 && exponent < 0.0) throw DomainError("division by zero");
  const double r = std::pow(base, exponent);
  if (std::isnan(r) && !std::isnan(base) && !std::isnan(exponent)) {
    throw DomainError("non-real power " + std::to_string(base) + "^" + std::to_string(exponent));
  }
  return r;
}

inline double apply_function(Func f, double x) {
  switch (f) {
    case Func::Exp: return std::exp(x);
    case Func::Log:
      if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
      return std::log(x);
    case Func::Abs: return std::fabs(x);
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
  }
  return 0.0;
}

}  // namespace detail

/// Tree-walking evaluation against named bindings.
inline double evaluate(const Expr& e, const std::map<std::string, double>& bindings) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return e.value().to_double();
    case ExprKind::Symbol: {
      auto it = bindings.find(e.name());
      if (it == bindings.end()) throw Error("MissingBinding", "no value bound for symbol '" + e.name() + "'");
      return it->second;
    }
    case ExprKind::Sum: {
      double acc = 0.0;
      for (const auto& op : e.operands()) acc += evaluate(op, bindings);
      return acc;
    }
    case ExprKind::Product: {
      double acc = 1.0;
      for (const auto& op : e.operands()) acc *= evaluate(op, bindings);
      return acc;
    }
    case ExprKind::Power:
      return detail::checked_pow(evaluate(e.base(), bindings), evaluate(e.exponent(), bindings));
    case ExprKind::Function:
      return detail::apply_function(e.func(), evaluate(e.argument(), bindings));
  }
  return 0.0;
}

/// An expression flattened to a postfix program over numbered slots.
/// Used on every hot path (integration, sensitivities, propensities).
class Program {
 public:
  Program() = default;

  /// `slots` maps symbol names to positions in the value array passed to eval.
  Program(const Expr& e, const std::unordered_map<std::string, int>& slots) {
    int depth = 0;
    emit(e, slots, depth);
    if (max_depth_ > static_cast<int>(kInlineStack)) heap_stack_ = true;
  }

  double eval(std::span<const double> values) const {
    if (code_.empty()) return 0.0;
    if (heap_stack_) {
      std::vector<double> stack(static_cast<std::size_t>(max_depth_));
      return run(values, stack.data());
    }
    std::array<double, kInlineStack> stack;
    return run(values, stack.data());
  }

  bool is_constant_zero() const { return code_.size() == 1 && code_[0].op == Op::Const && code_[0].value == 0.0; }

 private:
  static constexpr std::size_t kInlineStack = 32;
  enum class Op : std::uint8_t { Const, Load, Add, Mul, Pow, Square, Recip, Func };
  struct Instr {
    Op op;
    Func func;
    int arg;
    double value;
  };

  void push(Instr i, int& depth, int delta) {
    code_.push_back(i);
    depth += delta;
    max_depth_ = std::max(max_depth_, depth);
  }

  void emit(const Expr& e, const std::unordered_map<std::string, int>& slots, int& depth) {
    switch (e.kind()) {
      case ExprKind::Constant:
        push({Op::Const, Func::Exp, 0, e.value().to_double()}, depth, 1);
        return;
      case ExprKind::Symbol: {
        auto it = slots.find(e.name());
        if (it == slots.end()) throw UnknownSymbolError(e.name());
        push({Op::Load, Func::Exp, it->second, 0.0}, depth, 1);
        return;
      }
      case ExprKind::Sum:
      case ExprKind::Product: {
        const auto ops = e.operands();
        emit(ops[0], slots, depth);
        for (std::size_t i = 1; i < ops.size(); ++i) {
          emit(ops[i], slots, depth);
          push({e.kind() == ExprKind::Sum ? Op::Add : Op::Mul, Func::Exp, 0, 0.0}, depth, -1);
        }
        return;
      }
      case ExprKind::Power: {
        emit(e.base(), slots, depth);
        if (e.exponent().is_constant()) {
          const double p = e.exponent().value().to_double();
          if (p == 2.0) {
            push({Op::Square, Func::Exp, 0, 0.0}, depth, 0);
            return;
          }
          if (p == -1.0) {
            push({Op::Recip, Func::Exp, 0, 0.0}, depth, 0);
            return;
          }
        }
        emit(e.exponent(), slots, depth);
        push({Op::Pow, Func::Exp, 0, 0.0}, depth, -1);
        return;
      }
      case ExprKind::Function:
        emit(e.argument(), slots, depth);
        push({Op::Func, e.func(), 0, 0.0}, depth, 0);
        return;
    }
  }

  double run(std::span<const double> values, double* stack) const {
    int top = -1;
    for (const auto& in : code_) {
      switch (in.op) {
        case Op::Const: stack[++top] = in.value; break;
        case Op::Load: stack[++top] = values[static_cast<std::size_t>(in.arg)]; break;
        case Op::Add: stack[top - 1] += stack[top]; --top; break;
        case Op::Mul: stack[top - 1] *= stack[top]; --top; break;
        case Op::Square: stack[top] *= stack[top]; break;
        case Op::Recip:
          if (stack[top] == 0.0) throw DomainError("division by zero");
          stack[top] = 1.0 / stack[top];
          break;
        case Op::Pow: stack[top - 1] = detail::checked_pow(stack[top - 1], stack[top]); --top; break;
        case Op::Func: stack[top] = detail::apply_function(in.func, stack[top]); break;
      }
    }
    return stack[0];
  }

  std::vector<Instr> code_;
  int max_depth_ = 0;
  bool heap_stack_ = false;
};

}  // namespace odekit
