#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <iostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/integrator.hpp"
#include "odekit/model.hpp"
#include "odekit/optimize.hpp"

namespace odekit {

enum class LossKind { Square, Normal, Poisson };

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "square") return LossKind::Square;
  if (s == "normal") return LossKind::Normal;
  if (s == "poisson") return LossKind::Poisson;
  throw EstimationError("unknown loss '" + s + "' (expected square, normal or poisson)");
}

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::Square: return "square";
    case LossKind::Normal: return "normal";
    case LossKind::Poisson: return "poisson";
  }
  return "?";
}

/// Scalar, one per target state, or a full n x k matrix.
using Weights = std::variant<std::monostate, double, std::vector<double>, Eigen::MatrixXd>;

struct LossSetup {
  OdeModel model;
  std::vector<double> theta;              // initial guess for the target parameters
  std::vector<double> x0;
  double t0 = 0.0;
  std::vector<double> t;                  // observation times
  Eigen::MatrixXd y;                      // n x k observations
  std::vector<std::string> state_names;   // k target states
  std::vector<std::string> target_params; // empty: every parameter
  LossKind loss = LossKind::Square;
  Weights weights;
};

/// A model bound to observations. All methods are const and safe to call
/// from several threads at once.
///
/// For the normal loss the weights are 1/sigma per observation. The
/// residual Jacobian is d(y - yhat)/d(theta) with rows observation-major
/// (row i*k + j is time i, state j), so 2 J^T r is the unit-weight
/// square-loss gradient.
class LossProblem {
 public:
  explicit LossProblem(LossSetup s) : model_(std::move(s.model)), setup_(std::move(s)) {
    const auto& m = model_;
    if (setup_.state_names.empty()) throw EstimationError("no target states");
    for (const auto& name : setup_.state_names) {
      const int idx = m.symbols().state_index(name);
      if (idx < 0) throw EstimationError("target state '" + name + "' is not a model state");
      state_idx_.push_back(idx);
    }
    if (setup_.target_params.empty()) setup_.target_params = m.parameters();
    for (const auto& name : setup_.target_params) {
      const int idx = m.symbols().parameter_index(name);
      if (idx < 0) throw EstimationError("target parameter '" + name + "' is not a model parameter");
      target_idx_.push_back(idx);
    }
    if (setup_.theta.size() != target_idx_.size()) {
      throw EstimationError("theta has " + std::to_string(setup_.theta.size()) + " entries for " +
                            std::to_string(target_idx_.size()) + " target parameters");
    }
    base_params_.assign(m.num_parameters(), 0.0);
    for (std::size_t k = 0; k < m.num_parameters(); ++k) {
      const bool target = std::find(target_idx_.begin(), target_idx_.end(), static_cast<int>(k)) != target_idx_.end();
      if (auto v = m.parameter_value(m.parameters()[k])) {
        base_params_[k] = *v;
      } else if (!target) {
        throw EstimationError("parameter '" + m.parameters()[k] + "' is not a target and has no value");
      }
    }
    if (setup_.x0.size() != m.num_states()) throw EstimationError("x0 does not match the number of states");
    const auto n = static_cast<Eigen::Index>(setup_.t.size());
    const auto k = static_cast<Eigen::Index>(state_idx_.size());
    if (n == 0) throw EstimationError("no observation times");
    for (std::size_t i = 0; i < setup_.t.size(); ++i) {
      if (!(setup_.t[i] > setup_.t0)) throw EstimationError("observation times must be after t0");
      if (i > 0 && !(setup_.t[i] > setup_.t[i - 1])) throw EstimationError("observation times must increase");
    }
    if (setup_.y.rows() == n && setup_.y.cols() == 1 && k > 1) throw EstimationError("y has one column for k > 1 states");
    if (setup_.y.rows() != n || setup_.y.cols() != k) {
      throw EstimationError("y must be " + std::to_string(n) + " x " + std::to_string(k));
    }
    if (!setup_.y.allFinite()) throw EstimationError("observations must be finite");
    weights_ = expand_weights(setup_.weights, n, k);
    if (!(weights_.array() > 0).all() || !weights_.allFinite()) throw EstimationError("weights must be positive");
  }

  const OdeModel& model() const { return model_; }
  const std::vector<double>& theta0() const { return setup_.theta; }
  const std::vector<std::string>& target_params() const { return setup_.target_params; }
  const std::vector<std::string>& state_names() const { return setup_.state_names; }
  const std::vector<double>& times() const { return setup_.t; }
  const Eigen::MatrixXd& observations() const { return setup_.y; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  LossKind loss() const { return setup_.loss; }
  std::size_t num_params() const { return target_idx_.size(); }
  Eigen::Index n() const { return setup_.y.rows(); }
  Eigen::Index k() const { return setup_.y.cols(); }

  SolverConfig& solver() { return cfg_; }
  const SolverConfig& solver() const { return cfg_; }

  /// Same problem with replacement observations (used by the bootstrap).
  LossProblem with_observations(const Eigen::MatrixXd& y) const {
    LossProblem copy = *this;
    if (y.rows() != n() || y.cols() != k()) throw EstimationError("replacement observations have the wrong shape");
    copy.setup_.y = y;
    return copy;
  }

  LossProblem with_theta0(const std::vector<double>& theta) const {
    if (theta.size() != num_params()) throw EstimationError("theta has the wrong length");
    LossProblem copy = *this;
    copy.setup_.theta = theta;
    return copy;
  }

  /// The problem with target parameter `index` pinned at `value`; the
  /// remaining targets start from `rest`.
  LossProblem fix_parameter(std::size_t index, double value, const std::vector<double>& rest) const {
    if (index >= num_params()) throw EstimationError("parameter index out of range");
    if (num_params() == 1) throw EstimationError("cannot pin the only target parameter");
    LossSetup s = setup_;
    s.model = model_;
    s.model.set_parameters({{setup_.target_params[index], value}});
    s.target_params.erase(s.target_params.begin() + static_cast<std::ptrdiff_t>(index));
    s.theta = rest;
    s.weights = weights_;
    LossProblem out(std::move(s));
    out.cfg_ = cfg_;
    return out;
  }

  /// Full parameter vector with the targets replaced by theta.
  std::vector<double> full_parameters(const Eigen::VectorXd& theta) const {
    check_theta(theta);
    std::vector<double> p = base_params_;
    for (std::size_t j = 0; j < target_idx_.size(); ++j) p[static_cast<std::size_t>(target_idx_[j])] = theta[static_cast<Eigen::Index>(j)];
    return p;
  }

  /// Model prediction at the observation times restricted to the target states.
  Eigen::MatrixXd predict(const Eigen::VectorXd& theta) const {
    const auto params = full_parameters(theta);
    ModelEvaluator ev(model_, params);
    Eigen::MatrixXd yhat(n(), k());
    solve_ivp([&](double t, const double* x, double* dx) { ev.rhs(t, x, dx); }, setup_.t0, x0(), setup_.t, cfg_,
              [&](std::size_t i, const Eigen::VectorXd& x) { take(yhat, i, x); });
    return yhat;
  }

  Eigen::MatrixXd residuals(const Eigen::VectorXd& theta) const { return setup_.y - predict(theta); }

  double cost(const Eigen::VectorXd& theta) const { return cost_from(predict(theta)); }

  /// Gradient by forward sensitivities: one augmented solve of the states
  /// and S = dx/dtheta with S' = J S + df/dtheta, S(t0) = 0.
  Eigen::VectorXd sensitivity(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd yhat;
    Eigen::MatrixXd dyhat;
    forward_sensitivity(theta, yhat, dyhat);
    const Eigen::MatrixXd dl = loss_derivative(yhat);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params()));
    for (Eigen::Index i = 0; i < n(); ++i) {
      for (Eigen::Index j = 0; j < k(); ++j) g += dl(i, j) * dyhat.row(i * k() + j).transpose();
    }
    return g;
  }

  /// Gradient by the adjoint method: a forward solve with dense output,
  /// then a backward sweep of lambda' = -J^T lambda with jumps at the
  /// observation times, accumulating the integral of lambda^T df/dtheta.
  Eigen::VectorXd adjoint(const Eigen::VectorXd& theta) const {
    const auto params = full_parameters(theta);
    ModelEvaluator ev(model_, params);
    DenseSolution dense;
    Eigen::MatrixXd yhat(n(), k());
    solve_ivp([&](double t, const double* x, double* dx) { ev.rhs(t, x, dx); }, setup_.t0, x0(), setup_.t, cfg_,
              [&](std::size_t i, const Eigen::VectorXd& x) { take(yhat, i, x); }, &dense);
    const Eigen::MatrixXd dl = loss_derivative(yhat);

    const auto ns = static_cast<Eigen::Index>(model_.num_states());
    const auto q = static_cast<Eigen::Index>(num_params());
    Eigen::VectorXd z = Eigen::VectorXd::Zero(ns + q);  // [lambda; accumulated gradient]
    Eigen::MatrixXd J, G;
    // backward in t, written forward in s = -t
    OdeFunction back = [&](double s, const double* zp, double* dz) {
      const double t = -s;
      const Eigen::VectorXd x = dense.at(t);
      ev.jacobian(t, x.data(), J);
      ev.grad(t, x.data(), G);
      Eigen::Map<const Eigen::VectorXd> lambda(zp, ns);
      Eigen::Map<Eigen::VectorXd> out(dz, ns + q);
      out.head(ns).noalias() = J.transpose() * lambda;
      for (Eigen::Index j = 0; j < q; ++j) out[ns + j] = G.col(target_idx_[static_cast<std::size_t>(j)]).dot(lambda);
    };
    for (Eigen::Index i = n() - 1; i >= 0; --i) {
      for (Eigen::Index j = 0; j < k(); ++j) z[state_idx_[static_cast<std::size_t>(j)]] += dl(i, j);
      const double t_from = setup_.t[static_cast<std::size_t>(i)];
      const double t_to = i > 0 ? setup_.t[static_cast<std::size_t>(i - 1)] : setup_.t0;
      std::vector<double> stop{-t_to};
      solve_ivp(back, -t_from, z, stop, cfg_, [&](std::size_t, const Eigen::VectorXd& v) { z = v; });
    }
    return z.tail(q);
  }

  /// d(residual)/d(theta): (n*k) x |theta|, rows observation-major.
  Eigen::MatrixXd jac(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd yhat, dyhat;
    forward_sensitivity(theta, yhat, dyhat);
    return -dyhat;
  }

  /// jac together with the residuals from the same augmented solve.
  Eigen::MatrixXd jac(const Eigen::VectorXd& theta, Eigen::MatrixXd& residuals) const {
    Eigen::MatrixXd yhat, dyhat;
    forward_sensitivity(theta, yhat, dyhat);
    residuals = setup_.y - yhat;
    return -dyhat;
  }

  Eigen::MatrixXd jtj(const Eigen::VectorXd& theta) const {
    const Eigen::MatrixXd J = jac(theta);
    return J.transpose() * J;
  }

  /// Central differences of the sensitivity gradient, symmetrized. Not
  /// guaranteed positive semi-definite.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const {
    const auto q = static_cast<Eigen::Index>(num_params());
    Eigen::MatrixXd H(q, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      const double h = 1e-4 * std::max(std::fabs(theta[j]), 1e-2);
      Eigen::VectorXd up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      H.col(j) = (sensitivity(up) - sensitivity(down)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
  }

  /// Joint forward solve of states and sensitivities; dyhat rows are
  /// observation-major (time i, state j at row i*k + j).
  void forward_sensitivity(const Eigen::VectorXd& theta, Eigen::MatrixXd& yhat, Eigen::MatrixXd& dyhat) const {
    const auto params = full_parameters(theta);
    ModelEvaluator ev(model_, params);
    const auto ns = static_cast<Eigen::Index>(model_.num_states());
    const auto q = static_cast<Eigen::Index>(num_params());
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(ns * (1 + q));
    z0.head(ns) = x0();
    Eigen::MatrixXd J, G;
    OdeFunction f = [&](double t, const double* z, double* dz) {
      ev.rhs(t, z, dz);
      ev.jacobian(t, z, J);
      ev.grad(t, z, G);
      Eigen::Map<const Eigen::MatrixXd> S(z + ns, ns, q);
      Eigen::Map<Eigen::MatrixXd> dS(dz + ns, ns, q);
      dS.noalias() = J * S;
      for (Eigen::Index j = 0; j < q; ++j) dS.col(j) += G.col(target_idx_[static_cast<std::size_t>(j)]);
    };
    yhat.resize(n(), k());
    dyhat.resize(n() * k(), q);
    solve_ivp(f, setup_.t0, z0, setup_.t, cfg_, [&](std::size_t i, const Eigen::VectorXd& z) {
      take(yhat, i, z);
      Eigen::Map<const Eigen::MatrixXd> S(z.data() + ns, ns, q);
      for (Eigen::Index j = 0; j < k(); ++j) {
        dyhat.row(static_cast<Eigen::Index>(i) * k() + j) = S.row(state_idx_[static_cast<std::size_t>(j)]);
      }
    });
  }

  double cost_from(const Eigen::MatrixXd& yhat) const {
    const Eigen::MatrixXd& y = setup_.y;
    switch (setup_.loss) {
      case LossKind::Square:
        return (weights_.array() * (y - yhat).array().square()).sum();
      case LossKind::Normal: {
        // -log likelihood with sigma = 1/w
        const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
        return (0.5 * (weights_.array() * (y - yhat).array()).square() - weights_.array().log() + half_log_2pi).sum();
      }
      case LossKind::Poisson: {
        double total = 0.0;
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          for (Eigen::Index j = 0; j < y.cols(); ++j) {
            const double mu = clamp_rate(yhat(i, j));
            total += weights_(i, j) * (mu - y(i, j) * std::log(mu) + std::lgamma(y(i, j) + 1.0));
          }
        }
        return total;
      }
    }
    return 0.0;
  }

  /// d cost / d yhat, entrywise.
  Eigen::MatrixXd loss_derivative(const Eigen::MatrixXd& yhat) const {
    const Eigen::MatrixXd& y = setup_.y;
    switch (setup_.loss) {
      case LossKind::Square:
        return (-2.0 * weights_.array() * (y - yhat).array()).matrix();
      case LossKind::Normal:
        return (-(weights_.array().square()) * (y - yhat).array()).matrix();
      case LossKind::Poisson: {
        Eigen::MatrixXd d(y.rows(), y.cols());
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          for (Eigen::Index j = 0; j < y.cols(); ++j) {
            const double mu = clamp_rate(yhat(i, j));
            // the clamp is flat below its floor
            d(i, j) = yhat(i, j) > kPoissonFloor ? weights_(i, j) * (1.0 - y(i, j) / mu) : 0.0;
          }
        }
        return d;
      }
    }
    return {};
  }

  static constexpr double kPoissonFloor = 1e-10;

 private:
  static Eigen::MatrixXd expand_weights(const Weights& w, Eigen::Index n, Eigen::Index k) {
    if (std::holds_alternative<double>(w)) return Eigen::MatrixXd::Constant(n, k, std::get<double>(w));
    if (std::holds_alternative<std::vector<double>>(w)) {
      const auto& v = std::get<std::vector<double>>(w);
      if (static_cast<Eigen::Index>(v.size()) != k) throw EstimationError("per-state weights need one entry per target state");
      Eigen::MatrixXd out(n, k);
      for (Eigen::Index j = 0; j < k; ++j) out.col(j).setConstant(v[static_cast<std::size_t>(j)]);
      return out;
    }
    if (std::holds_alternative<Eigen::MatrixXd>(w)) {
      const auto& m = std::get<Eigen::MatrixXd>(w);
      if (m.rows() != n || m.cols() != k) throw EstimationError("weight matrix must match the observations");
      return m;
    }
    return Eigen::MatrixXd::Ones(n, k);
  }

  static double clamp_rate(double mu) {
    if (mu > kPoissonFloor) return mu;
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::cerr << "warning: poisson loss clamped a non-positive prediction to " << kPoissonFloor << "\n";
    }
    return kPoissonFloor;
  }

  void check_theta(const Eigen::VectorXd& theta) const {
    if (static_cast<std::size_t>(theta.size()) != num_params()) {
      throw EstimationError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                            std::to_string(num_params()));
    }
    if (!theta.allFinite()) throw EstimationError("theta must be finite");
  }

  Eigen::VectorXd x0() const {
    return Eigen::Map<const Eigen::VectorXd>(setup_.x0.data(), static_cast<Eigen::Index>(setup_.x0.size()));
  }

  void take(Eigen::MatrixXd& yhat, std::size_t i, const Eigen::VectorXd& x) const {
    for (Eigen::Index j = 0; j < k(); ++j) yhat(static_cast<Eigen::Index>(i), j) = x[state_idx_[static_cast<std::size_t>(j)]];
  }

  OdeModel model_;
  LossSetup setup_;
  SolverConfig cfg_;
  std::vector<int> state_idx_;
  std::vector<int> target_idx_;
  std::vector<double> base_params_;
  Eigen::MatrixXd weights_;
};

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

using Bounds = std::vector<std::pair<double, double>>;

enum class GradientMethod { Sensitivity, Adjoint };

struct FitOptions {
  MinimizeOptions minimize;
  GradientMethod gradient = GradientMethod::Sensitivity;
};

struct FitResult {
  std::vector<double> theta;
  double cost = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<bool> at_lower;
  std::vector<bool> at_upper;
  std::vector<double> trace;
  std::string message;
};

/// Bounded fit of the target parameters starting from the problem's theta0.
inline FitResult fit(const LossProblem& p, const Bounds& bounds, const FitOptions& opts = {}) {
  const auto q = static_cast<Eigen::Index>(p.num_params());
  if (static_cast<Eigen::Index>(bounds.size()) != q) throw EstimationError("need one (lo, hi) pair per target parameter");
  Eigen::VectorXd lo(q), hi(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    lo[i] = bounds[static_cast<std::size_t>(i)].first;
    hi[i] = bounds[static_cast<std::size_t>(i)].second;
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) throw EstimationError("bounds must be finite");
  }
  auto cost = [&](const Eigen::VectorXd& th) { return p.cost(th); };
  auto grad = [&](const Eigen::VectorXd& th) {
    return opts.gradient == GradientMethod::Adjoint ? p.adjoint(th) : p.sensitivity(th);
  };
  const MinimizeResult m = minimize_box(cost, grad, to_vector(p.theta0()), lo, hi, opts.minimize);
  FitResult r;
  r.theta = to_std(m.x);
  r.cost = m.f;
  r.converged = m.converged;
  r.iterations = m.iterations;
  r.at_lower = m.at_lower;
  r.at_upper = m.at_upper;
  r.trace = m.trace;
  r.message = m.message;
  return r;
}

}  // namespace odekit
