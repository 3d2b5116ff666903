#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "odekit/error.hpp"

namespace odekit {

struct MinimizeOptions {
  std::size_t max_iterations = 500;
  double gtol = 1e-6;   // projected-gradient infinity norm
  double ftol = 1e-10;  // relative cost change between accepted iterates
  double armijo = 1e-4;
  int max_backtracks = 40;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::string message;
  std::vector<double> trace;  // cost of every accepted iterate, starting point first
  std::vector<bool> at_lower;
  std::vector<bool> at_upper;
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

inline Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                          const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0) || (x[i] >= hi[i] && g[i] < 0)) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace detail

/// Box-constrained minimization by projected BFGS with an Armijo search
/// along the projected path. Evaluations that throw are treated as +inf so
/// the search backs away from them; only a failure at x0 is fatal.
inline MinimizeResult minimize_box(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                   const Eigen::VectorXd& x0, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                   const MinimizeOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  if (lo.size() != n || hi.size() != n) throw EstimationError("bounds do not match the parameter count");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lo[i] < hi[i])) throw EstimationError("each lower bound must be below its upper bound");
  }

  auto safe_f = [&](const Eigen::VectorXd& x) {
    try {
      const double v = f(x);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  MinimizeResult r;
  r.x = detail::project(x0, lo, hi);
  r.f = f(r.x);  // a failure here propagates
  if (!std::isfinite(r.f)) throw EstimationError("cost is not finite at the starting point");
  Eigen::VectorXd g = grad(r.x);
  r.trace.push_back(r.f);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;  // H is the identity

  for (;;) {
    const Eigen::VectorXd pg = detail::projected_gradient(r.x, g, lo, hi);
    if (pg.size() == 0 || pg.cwiseAbs().maxCoeff() < opts.gtol) {
      r.converged = true;
      r.message = "projected gradient below tolerance";
      break;
    }
    if (r.iterations >= opts.max_iterations) {
      throw EstimationError("maximum iterations (" + std::to_string(opts.max_iterations) + ") reached");
    }

    // variables pinned at a bound with the gradient pushing outward stay fixed
    std::vector<bool> free(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) free[static_cast<std::size_t>(i)] = pg[i] != 0.0;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!free[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (free[static_cast<std::size_t>(j)]) d[i] -= H(i, j) * g[j];
      }
    }
    if (d.dot(g) >= 0.0) {
      H.setIdentity();
      fresh = true;
      d = -pg;
    }

    // without curvature information the first trial moves a tenth of the
    // narrowest box side; the gradient scale says nothing about distance
    double alpha = fresh ? 0.1 * (hi - lo).minCoeff() / d.cwiseAbs().maxCoeff() : 1.0;
    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k <= opts.max_backtracks; ++k, alpha *= 0.5) {
      x_new = detail::project(r.x + alpha * d, lo, hi);
      if ((x_new - r.x).cwiseAbs().maxCoeff() == 0.0) break;
      f_new = safe_f(x_new);
      if (f_new <= r.f + opts.armijo * g.dot(x_new - r.x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh) {
        H.setIdentity();
        fresh = true;
        ++r.iterations;
        continue;
      }
      r.converged = pg.cwiseAbs().maxCoeff() < std::sqrt(opts.gtol);
      r.message = "line search could not reduce the cost";
      break;
    }

    Eigen::VectorXd g_new;
    try {
      g_new = grad(x_new);
    } catch (const Error&) {
      g_new = Eigen::VectorXd();
    }
    if (g_new.size() != n || !g_new.allFinite()) {
      r.message = "gradient evaluation failed at an accepted point";
      break;
    }
    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd yv = g_new - g;
    const double f_old = r.f;
    r.x = x_new;
    r.f = f_new;
    g = g_new;
    r.trace.push_back(r.f);
    ++r.iterations;

    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (fresh) H *= sy / yv.dot(yv);
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
      fresh = false;
    } else {
      // negative curvature: the old scaling is stale
      H.setIdentity();
      fresh = true;
    }

    if (std::fabs(f_old - r.f) <= opts.ftol * std::max({std::fabs(f_old), std::fabs(r.f), 1e-300})) {
      r.converged = true;
      r.message = "relative cost change below tolerance";
      break;
    }
  }

  r.at_lower.resize(static_cast<std::size_t>(n));
  r.at_upper.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    r.at_lower[static_cast<std::size_t>(i)] = r.x[i] <= lo[i];
    r.at_upper[static_cast<std::size_t>(i)] = r.x[i] >= hi[i];
  }
  return r;
}

}  // namespace odekit
