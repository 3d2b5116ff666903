#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/estimation.hpp"
#include "odekit/parallel.hpp"
#include "odekit/random.hpp"
#include "odekit/stochastic.hpp"

namespace odekit {

enum class CiMethod { Asymptotic, Profile, Bootstrap };

inline const char* to_string(CiMethod m) {
  switch (m) {
    case CiMethod::Asymptotic: return "asymptotic";
    case CiMethod::Profile: return "profile";
    case CiMethod::Bootstrap: return "bootstrap";
  }
  return "?";
}

struct IntervalResult {
  CiMethod method = CiMethod::Asymptotic;
  double alpha = 0.05;
  std::vector<std::string> names;
  std::vector<double> estimate;
  std::vector<double> lower;
  std::vector<double> upper;
  bool used_jtj = false;            // asymptotic: hessian was not positive definite
  std::vector<bool> lower_open;     // profile: no crossing below, lower is the bound
  std::vector<bool> upper_open;
  std::uint64_t seed = 0;           // bootstrap
  std::vector<std::vector<double>> replicates;  // bootstrap, full_output only
};

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
}

inline double z_quantile(double alpha) {
  return boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
}

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" definition).
inline double quantile7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline IntervalResult start(const LossProblem& p, const Eigen::VectorXd& theta_hat, double alpha, CiMethod m) {
  check_alpha(alpha);
  if (static_cast<std::size_t>(theta_hat.size()) != p.num_params()) throw EstimationError("theta_hat has the wrong length");
  IntervalResult r;
  r.method = m;
  r.alpha = alpha;
  r.names = p.target_params();
  r.estimate = to_std(theta_hat);
  r.lower.resize(p.num_params());
  r.upper.resize(p.num_params());
  r.lower_open.assign(p.num_params(), false);
  r.upper_open.assign(p.num_params(), false);
  return r;
}

}  // namespace detail

/// theta_hat +- z * sqrt(diag(H^-1)), H the cost Hessian at theta_hat.
/// Falls back to J^T J (flagged) when H is not positive definite.
inline IntervalResult ci_asymptotic(const LossProblem& p, const Eigen::VectorXd& theta_hat, double alpha) {
  IntervalResult r = detail::start(p, theta_hat, alpha, CiMethod::Asymptotic);
  Eigen::MatrixXd H = p.hessian(theta_hat);
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    H = p.jtj(theta_hat);
    llt.compute(H);
    r.used_jtj = true;
    if (llt.info() != Eigen::Success) throw EstimationError("information matrix is singular");
  }
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
  const double z = detail::z_quantile(alpha);
  for (Eigen::Index i = 0; i < theta_hat.size(); ++i) {
    if (!(cov(i, i) > 0) || !std::isfinite(cov(i, i))) throw EstimationError("information matrix is singular");
    const double half = z * std::sqrt(cov(i, i));
    r.lower[static_cast<std::size_t>(i)] = theta_hat[i] - half;
    r.upper[static_cast<std::size_t>(i)] = theta_hat[i] + half;
  }
  return r;
}

/// Profile-deviance interval: for each parameter the points where
/// 2 [cost*(theta_i) - cost(theta_hat)] reaches the chi-square(1) quantile,
/// cost* re-optimizing the other parameters within their bounds. The
/// bracket grows geometrically from theta_hat and is closed by bisection.
inline IntervalResult ci_profile(const LossProblem& p, const Eigen::VectorXd& theta_hat, double alpha,
                                 const Bounds& bounds, const FitOptions& fit_opts = {}, std::size_t workers = 0) {
  IntervalResult r = detail::start(p, theta_hat, alpha, CiMethod::Profile);
  const std::size_t q = p.num_params();
  if (bounds.size() != q) throw EstimationError("need one (lo, hi) pair per target parameter");
  const double z = detail::z_quantile(alpha);
  const double threshold = z * z;  // chi-square(1) quantile at 1 - alpha
  const double c_hat = p.cost(theta_hat);

  parallel_for(
      2 * q,
      [&](std::size_t task) {
        const std::size_t i = task / 2;
        const double dir = task % 2 == 0 ? -1.0 : 1.0;
        const double edge = dir < 0 ? bounds[i].first : bounds[i].second;
        const double center = theta_hat[static_cast<Eigen::Index>(i)];

        std::vector<double> warm = r.estimate;
        warm.erase(warm.begin() + static_cast<std::ptrdiff_t>(i));
        Bounds nuisance = bounds;
        nuisance.erase(nuisance.begin() + static_cast<std::ptrdiff_t>(i));
        auto deviance = [&](double v) {
          if (q == 1) return 2.0 * (p.cost(Eigen::VectorXd::Constant(1, v)) - c_hat);
          for (std::size_t j = 0; j < warm.size(); ++j) warm[j] = std::clamp(warm[j], nuisance[j].first, nuisance[j].second);
          const FitResult f = fit(p.fix_parameter(i, v, warm), nuisance, fit_opts);
          warm = f.theta;
          return 2.0 * (f.cost - c_hat);
        };

        double inside = center;
        double step = std::max(0.05 * std::fabs(center), 1e-3 * (bounds[i].second - bounds[i].first));
        double outside = 0.0;
        bool found = false;
        for (;;) {
          const double v = dir < 0 ? std::max(edge, inside - step) : std::min(edge, inside + step);
          if (deviance(v) >= threshold) {
            outside = v;
            found = true;
            break;
          }
          if (v == edge) break;
          inside = v;
          step *= 2.0;
        }
        double result = edge;
        if (found) {
          const double tol = 1e-9 * std::max(1.0, std::fabs(center));
          for (int it = 0; it < 200 && std::fabs(outside - inside) > tol; ++it) {
            const double mid = 0.5 * (inside + outside);
            (deviance(mid) >= threshold ? outside : inside) = mid;
          }
          result = 0.5 * (inside + outside);
        }
        if (dir < 0) {
          r.lower[i] = result;
          r.lower_open[i] = !found;
        } else {
          r.upper[i] = result;
          r.upper_open[i] = !found;
        }
      },
      workers);
  return r;
}

struct BootstrapOptions {
  std::size_t iterations = 100;
  bool full_output = false;
  RunOptions run;
  FitOptions fit;
};

/// Residual bootstrap: residuals at theta_hat are scaled by their per-state
/// RMS, pooled, resampled with replacement onto the fitted curve and refit.
/// The interval is the alpha/2 and 1 - alpha/2 quantiles of the refits. A
/// failed refit aborts the call; the lowest failing replicate is reported.
inline IntervalResult ci_bootstrap(const LossProblem& p, const Eigen::VectorXd& theta_hat, double alpha,
                                   const Bounds& bounds, const BootstrapOptions& opts = {}) {
  IntervalResult r = detail::start(p, theta_hat, alpha, CiMethod::Bootstrap);
  if (opts.iterations < 2) throw EstimationError("bootstrap needs at least 2 iterations");
  if (bounds.size() != p.num_params()) throw EstimationError("need one (lo, hi) pair per target parameter");
  r.seed = opts.run.seed;

  const Eigen::MatrixXd yhat = p.predict(theta_hat);
  const Eigen::MatrixXd res = p.observations() - yhat;
  const Eigen::Index n = res.rows(), k = res.cols();
  Eigen::VectorXd scale(k);
  for (Eigen::Index j = 0; j < k; ++j) scale[j] = std::sqrt(res.col(j).squaredNorm() / static_cast<double>(n));
  std::vector<double> pool;
  pool.reserve(static_cast<std::size_t>(n * k));
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) pool.push_back(scale[j] > 0 ? res(i, j) / scale[j] : 0.0);
  }

  const LossProblem start = p.with_theta0(to_std(theta_hat));
  std::vector<std::vector<double>> reps(opts.iterations);
  parallel_for(
      opts.iterations,
      [&](std::size_t b) {
        Rng rng = stream(opts.run.seed, b);
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        Eigen::MatrixXd y = yhat;
        // row-major draw order so the stream use does not depend on layout
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < k; ++j) y(i, j) += scale[j] * pool[pick(rng)];
        }
        FitResult f;
        try {
          f = fit(start.with_observations(y), bounds, opts.fit);
        } catch (const Error& e) {
          throw EstimationError("bootstrap replicate " + std::to_string(b) + ": " + e.what());
        }
        if (!f.converged) {
          throw EstimationError("bootstrap replicate " + std::to_string(b) + ": fit did not converge (" + f.message + ")");
        }
        reps[b] = f.theta;
      },
      opts.run.workers);

  for (std::size_t i = 0; i < p.num_params(); ++i) {
    std::vector<double> col(reps.size());
    for (std::size_t b = 0; b < reps.size(); ++b) col[b] = reps[b][i];
    r.lower[i] = detail::quantile7(col, alpha / 2.0);
    r.upper[i] = detail::quantile7(col, 1.0 - alpha / 2.0);
  }
  if (opts.full_output) r.replicates = std::move(reps);
  return r;
}

}  // namespace odekit
