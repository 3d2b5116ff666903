#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "odekit/canonical.hpp"
#include "odekit/differentiate.hpp"
#include "odekit/error.hpp"
#include "odekit/evaluate.hpp"
#include "odekit/expr.hpp"
#include "odekit/model.hpp"
#include "odekit/parse.hpp"

namespace odekit {

using StateValues = std::map<std::string, Expr>;

namespace detail {

inline void check_disease_states(const OdeModel& m, const std::vector<std::string>& disease) {
  if (disease.empty()) throw AnalysisError("no disease states given");
  std::set<std::string> seen;
  for (const auto& d : disease) {
    if (m.symbols().state_index(d) < 0) throw AnalysisError("disease state '" + d + "' is not a model state");
    if (!seen.insert(d).second) throw AnalysisError("disease state '" + d + "' listed twice");
  }
}

inline Expr replace_states(const Expr& e, const StateValues& values) {
  return substitute(e, [&](const std::string& name) -> const Expr* {
    auto it = values.find(name);
    return it == values.end() ? nullptr : &it->second;
  });
}

/// Gauss-Jordan on A x = c over expressions. Throws when no pivot is found.
inline std::vector<Expr> solve_linear(ExprMatrix A, std::vector<Expr> c) {
  const std::size_t n = c.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = n;
    for (std::size_t r = k; r < n; ++r) {
      if (!is_identically_zero(A[r][k])) {
        pivot = r;
        break;
      }
    }
    if (pivot == n) throw AnalysisError("equilibrium is not unique: the linear system is singular");
    std::swap(A[k], A[pivot]);
    std::swap(c[k], c[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == k || is_identically_zero(A[r][k])) continue;
      const Expr factor = A[r][k] / A[k][k];
      for (std::size_t j = k; j < n; ++j) A[r][j] = simplify(A[r][j] - factor * A[k][j]);
      c[r] = simplify(c[r] - factor * c[k]);
    }
  }
  std::vector<Expr> x(n);
  for (std::size_t k = 0; k < n; ++k) x[k] = simplify(c[k] / A[k][k]);
  return x;
}

}  // namespace detail

/// Disease-free equilibrium: disease states pinned at zero, the remaining
/// equilibrium equations solved symbolically. They must be linear in the
/// remaining states. A state that appears in no right-hand side and whose
/// own rate vanishes at the equilibrium only accumulates (R without deaths,
/// say) and is reported as zero.
inline StateValues dfe(const OdeModel& m, const std::vector<std::string>& disease) {
  detail::check_disease_states(m, disease);
  StateValues zero_disease;
  for (const auto& d : disease) zero_disease.emplace(d, Expr(0));

  std::set<std::string> referenced;
  for (const auto& e : m.ode_equations()) {
    for (const auto& s : free_symbols(e)) referenced.insert(s);
  }

  StateValues out = zero_disease;
  std::vector<std::string> unknowns;
  std::vector<Expr> rows;
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    const std::string& s = m.states()[i];
    if (zero_disease.count(s)) continue;
    const Expr row = simplify(detail::replace_states(m.ode_equations()[i], zero_disease));
    if (row.is_zero() && !referenced.count(s)) {
      out.emplace(s, Expr(0));
      continue;
    }
    unknowns.push_back(s);
    rows.push_back(row);
  }
  if (unknowns.empty()) return out;

  const std::set<std::string> unknown_set(unknowns.begin(), unknowns.end());
  StateValues origin;
  for (const auto& u : unknowns) origin.emplace(u, Expr(0));
  ExprMatrix A(rows.size(), std::vector<Expr>(unknowns.size()));
  std::vector<Expr> c(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < unknowns.size(); ++j) {
      A[r][j] = simplify(differentiate(rows[r], unknowns[j]));
      for (const auto& s : free_symbols(A[r][j])) {
        if (unknown_set.count(s)) {
          throw AnalysisError("equilibrium equations are not linear in the non-disease states (row for '" +
                              unknowns[r] + "')");
        }
      }
    }
    c[r] = simplify(-detail::replace_states(rows[r], origin));
  }
  const std::vector<Expr> x = detail::solve_linear(std::move(A), std::move(c));
  for (std::size_t j = 0; j < unknowns.size(); ++j) out.emplace(unknowns[j], x[j]);
  return out;
}

/// F and V of the next-generation method, evaluated at the DFE.
struct NextGeneration {
  std::vector<std::string> disease;
  StateValues equilibrium;
  ExprMatrix F;  // new infections
  ExprMatrix V;  // transfers and removals, net outflow
};

/// A T transition is a new infection iff it leaves a state outside the
/// disease set and enters a disease state. Explicit-equation models are
/// unrolled into transitions first.
inline NextGeneration next_generation(const OdeModel& model, const std::vector<std::string>& disease) {
  const OdeModel m = model.is_transition_form() ? model : unroll(model);
  detail::check_disease_states(m, disease);
  NextGeneration ng;
  ng.disease = disease;
  ng.equilibrium = dfe(m, disease);

  const std::set<std::string> dset(disease.begin(), disease.end());
  std::map<std::string, Expr> inflow;
  for (const auto& tr : m.transitions()) {
    if (tr.type != TransitionType::T) continue;
    const bool from_outside =
        std::none_of(tr.origin.begin(), tr.origin.end(), [&](const std::string& s) { return dset.count(s) > 0; });
    if (!from_outside) continue;
    const Expr rate = parse(tr.equation, m.symbols());
    for (const auto& d : tr.destination) {
      if (dset.count(d)) inflow[d] = inflow.count(d) ? inflow[d] + rate : rate;
    }
  }

  const std::size_t n = disease.size();
  ng.F.assign(n, std::vector<Expr>(n));
  ng.V.assign(n, std::vector<Expr>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Expr f_i = inflow.count(disease[i]) ? inflow[disease[i]] : Expr(0);
    const Expr rhs = m.ode_equations()[static_cast<std::size_t>(m.symbols().state_index(disease[i]))];
    const Expr v_i = f_i - rhs;
    for (std::size_t j = 0; j < n; ++j) {
      ng.F[i][j] = simplify(detail::replace_states(differentiate(f_i, disease[j]), ng.equilibrium));
      ng.V[i][j] = simplify(detail::replace_states(differentiate(v_i, disease[j]), ng.equilibrium));
    }
  }
  return ng;
}

/// Spectral radius: characteristic polynomial roots for up to four
/// dimensions, power iteration above that.
inline double spectral_radius(const Eigen::MatrixXd& K) {
  const auto n = K.rows();
  if (n == 0) return 0.0;
  if (n == 1) return std::fabs(K(0, 0));
  if (K.isZero(0.0)) return 0.0;
  if (n <= 4) {
    // Faddeev-LeVerrier: p(x) = x^n + c[n-1] x^{n-1} + ... + c[0]
    std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
    c[static_cast<std::size_t>(n)] = 1.0;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
      M = K * M + c[static_cast<std::size_t>(n - k + 1)] * I;
      c[static_cast<std::size_t>(n - k)] = -(K * M).trace() / static_cast<double>(k);
    }
    auto p = [&](std::complex<double> x) {
      std::complex<double> v = 1.0;
      for (Eigen::Index k = n - 1; k >= 0; --k) v = v * x + c[static_cast<std::size_t>(k)];
      return v;
    };
    // Durand-Kerner from the usual non-symmetric starting points
    double scale = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) scale = std::max(scale, std::pow(std::fabs(c[static_cast<std::size_t>(k)]), 1.0 / static_cast<double>(n - k)));
    std::vector<std::complex<double>> z(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = scale * std::pow(std::complex<double>(0.4, 0.9), static_cast<double>(k));
    for (int it = 0; it < 2000; ++it) {
      double change = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        std::complex<double> denom = 1.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
          if (j != k) denom *= z[k] - z[j];
        }
        if (std::abs(denom) == 0.0) denom = 1e-300;
        const std::complex<double> step = p(z[k]) / denom;
        z[k] -= step;
        change = std::max(change, std::abs(step) / std::max(1.0, std::abs(z[k])));
      }
      if (change < 1e-16) break;
    }
    double rho = 0.0;
    for (const auto& v : z) rho = std::max(rho, std::abs(v));
    return rho;
  }
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  double rho = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd w = K * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = (K * w).norm();
    const bool done = std::fabs(next - rho) <= 1e-14 * std::max(1.0, next);
    rho = next;
    v = w;
    if (done) break;
  }
  return rho;
}

struct R0Result {
  std::optional<Expr> symbolic;  // up to two disease states
  std::optional<double> value;   // when every parameter has a value
};

/// Symbolic spectral radius of F V^-1 for one or two disease states.
inline Expr r0_symbolic(const NextGeneration& ng) {
  const auto& F = ng.F;
  const auto& V = ng.V;
  if (ng.disease.size() == 1) {
    if (is_identically_zero(V[0][0])) throw AnalysisError("V is singular at the disease-free equilibrium");
    return simplify(F[0][0] / V[0][0]);
  }
  if (ng.disease.size() != 2) throw AnalysisError("symbolic R0 needs one or two disease states");
  // left unexpanded so factored rates stay factored in the result
  const Expr det = V[0][0] * V[1][1] - V[0][1] * V[1][0];
  if (is_identically_zero(det)) throw AnalysisError("V is singular at the disease-free equilibrium");
  ExprMatrix inv;
  if (V[0][1].is_zero() && V[1][0].is_zero()) {
    inv = {{Expr(1) / V[0][0], Expr(0)}, {Expr(0), Expr(1) / V[1][1]}};
  } else {
    inv = {{V[1][1] / det, -V[0][1] / det}, {-V[1][0] / det, V[0][0] / det}};
  }
  ExprMatrix K(2, std::vector<Expr>(2));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) K[i][j] = simplify(F[i][0] * inv[0][j] + F[i][1] * inv[1][j]);
  }
  const Expr tr = simplify(K[0][0] + K[1][1]);
  const Expr dk = simplify(K[0][0] * K[1][1] - K[0][1] * K[1][0]);
  if (is_identically_zero(tr)) return simplify(sqrt(-dk));
  return simplify((tr + sqrt(simplify(tr * tr - Expr(4) * dk))) / Expr(2));
}

inline double r0_value(const NextGeneration& ng, const std::map<std::string, double>& parameters) {
  const auto n = static_cast<Eigen::Index>(ng.disease.size());
  Eigen::MatrixXd F(n, n), V(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      F(i, j) = evaluate(ng.F[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], parameters);
      V(i, j) = evaluate(ng.V[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], parameters);
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
  if (!lu.isInvertible()) throw AnalysisError("V is singular at the disease-free equilibrium");
  return spectral_radius(F * lu.inverse());
}

/// R0 of `model` for the given disease states: symbolic when there are at
/// most two of them, numeric when the parameters are bound.
inline R0Result r0(const OdeModel& model, const std::vector<std::string>& disease) {
  const NextGeneration ng = next_generation(model, disease);
  R0Result out;
  if (disease.size() <= 2) out.symbolic = r0_symbolic(ng);
  if (model.has_parameter_values()) out.value = r0_value(ng, model.parameter_map());
  if (!out.symbolic && !out.value) {
    throw AnalysisError("more than two disease states: bind parameter values for a numeric R0");
  }
  return out;
}

}  // namespace odekit
