#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/model.hpp"

namespace odekit {

struct SolverConfig {
  double rtol = 1e-8;
  double atol = 1e-8;
  std::size_t max_steps = 1'000'000;
  /// 0 selects the step from the rhs magnitude at t0.
  double initial_step = 0.0;
};

/// Solution sampled on a time grid: one row of `values` per entry of `times`.
struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd values;

  std::size_t size() const { return times.size(); }
};

/// f(t, y, dy/dt)
using OdeFunction = std::function<void(double, const double*, double*)>;

/// Continuous solution over every accepted step, for interpolating the
/// forward state during backward (adjoint) sweeps.
class DenseSolution {
 public:
  Eigen::VectorXd at(double t) const {
    if (starts_.empty()) throw IntegrationError("dense solution is empty");
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    std::size_t i = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
    return steps_[i].interpolate(t, starts_[i]);
  }

  double t_begin() const { return starts_.empty() ? 0.0 : starts_.front(); }
  double t_end() const { return starts_.empty() ? 0.0 : starts_.back() + steps_.back().h; }
  std::size_t num_steps() const { return steps_.size(); }

  struct Step {
    double h;
    Eigen::VectorXd y0;
    Eigen::MatrixXd k;  // columns k1, k3, k4, k5, k6, k7

    Eigen::VectorXd interpolate(double t, double t0) const;
  };

  void push(double t0, Step step) {
    starts_.push_back(t0);
    steps_.push_back(std::move(step));
  }

 private:
  std::vector<double> starts_;
  std::vector<Step> steps_;
};

namespace dopri {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

/// Continuous-extension weights b_i(theta) of the 4th-order dense output.
inline std::array<double, 6> dense_weights(double theta) {
  const double x1 = 5.0 * (2558722523.0 - 31403016.0 * theta) / 11282082432.0;
  const double x3 = 100.0 * (882725551.0 - 15701508.0 * theta) / 32700410799.0;
  const double x4 = 25.0 * (443332067.0 - 31403016.0 * theta) / 1880347072.0;
  const double x5 = 32805.0 * (23143187.0 - 3489224.0 * theta) / 199316789632.0;
  const double x6 = 55.0 * (29972135.0 - 7076736.0 * theta) / 822651844.0;
  const double x7 = 10.0 * (7414447.0 - 829305.0 * theta) / 29380423.0;
  const double tm1 = theta - 1.0;
  const double sq = theta * theta;
  const double A = sq * (3.0 - 2.0 * theta);
  const double B = sq * tm1;
  const double C = sq * tm1 * tm1;
  const double D = theta * tm1 * tm1;
  return {A * b1 - C * x1 + D, A * b3 + C * x3, A * b4 - C * x4, A * b5 + C * x5, A * b6 - C * x6, B + C * x7};
}

}  // namespace dopri

inline Eigen::VectorXd DenseSolution::Step::interpolate(double t, double t0) const {
  const double theta = std::clamp((t - t0) / h, 0.0, 1.0);
  const auto w = dopri::dense_weights(theta);
  Eigen::VectorXd y = y0;
  for (int j = 0; j < 6; ++j) y += (h * w[static_cast<std::size_t>(j)]) * k.col(j);
  return y;
}

namespace detail {

inline std::string describe_state(double t, const Eigen::VectorXd& y) {
  std::ostringstream os;
  os << "t=" << t << ", state=[";
  for (Eigen::Index i = 0; i < y.size(); ++i) os << (i ? ", " : "") << y[i];
  os << "]";
  return os.str();
}

}  // namespace detail

/// Adaptive Dormand-Prince 5(4) integration with dense output at the
/// requested times. `observe(i, y)` receives the state at `times[i]`.
/// When `record` is given, every accepted step is stored in it.
inline void solve_ivp(const OdeFunction& f, double t0, const Eigen::VectorXd& y0, std::span<const double> times,
                      const SolverConfig& cfg, const std::function<void(std::size_t, const Eigen::VectorXd&)>& observe,
                      DenseSolution* record = nullptr) {
  using namespace dopri;
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) throw IntegrationError("tolerances must be positive");
  if (times.empty()) return;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0 && !(times[i] > times[i - 1])) throw IntegrationError("output times must be strictly increasing");
  }
  if (times.front() < t0) throw IntegrationError("first output time precedes the initial time");

  const Eigen::Index n = y0.size();
  const double t_final = times.back();
  Eigen::VectorXd y = y0;
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n);

  auto eval = [&](double t, const Eigen::VectorXd& state, Eigen::VectorXd& out) { f(t, state.data(), out.data()); };
  auto scaled_norm = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = cfg.atol + cfg.rtol * std::max(std::fabs(a[i]), std::fabs(b[i]));
      acc += (v[i] / sc) * (v[i] / sc);
    }
    return n > 0 ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
  };

  double t = t0;
  eval(t, y, k1);
  if (!k1.allFinite()) throw IntegrationError("non-finite rhs at " + detail::describe_state(t, y));

  std::size_t next = 0;
  while (next < times.size() && times[next] == t0) observe(next++, y);
  if (next == times.size()) return;

  double h = cfg.initial_step;
  const double span = t_final - t0;
  if (h <= 0.0) {
    // starting step from the magnitudes of y0 and f(t0, y0)
    const double d0 = scaled_norm(y, y, y);
    const double d1 = scaled_norm(k1, y, y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    tmp = y + h0 * k1;
    eval(t + h0, tmp, k2);
    const double d2 = scaled_norm(k2 - k1, y, y) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min(h, span);

  std::size_t steps = 0;
  bool rejected_last = false;
  while (next < times.size()) {
    if (++steps > cfg.max_steps) {
      throw IntegrationError("maximum step count exceeded at " + detail::describe_state(t, y));
    }
    const bool last = t + h >= t_final || (t_final - (t + h)) < 1e-12 * std::max(1.0, std::fabs(t_final));
    if (last) h = t_final - t;

    tmp = y + h * (a21 * k1);
    eval(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    eval(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    eval(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    eval(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double t_new = last ? t_final : t + h;
    eval(t_new, tmp, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    eval(t_new, y_new, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err_norm = scaled_norm(err, y, y_new);
    if (!std::isfinite(err_norm) || !y_new.allFinite() || !k7.allFinite()) err_norm = std::numeric_limits<double>::infinity();

    if (err_norm <= 1.0) {
      DenseSolution::Step step{h, y, Eigen::MatrixXd(n, 6)};
      step.k << k1, k3, k4, k5, k6, k7;
      while (next < times.size() && times[next] <= t_new) {
        observe(next, times[next] >= t_new ? y_new : step.interpolate(times[next], t));
        ++next;
      }
      if (record) record->push(t, std::move(step));
      t = t_new;
      y = y_new;
      k1 = k7;
      double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
      if (rejected_last) factor = std::min(factor, 1.0);
      h *= factor;
      rejected_last = false;
    } else {
      const double factor = std::isfinite(err_norm) ? std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 1.0) : 0.2;
      h *= factor;
      rejected_last = true;
      if (h < 1e-14 * std::max(1.0, std::fabs(t))) {
        throw IntegrationError("step size underflow (non-finite or stiff rhs) at " + detail::describe_state(t, y));
      }
    }
  }
}

/// Integrates a bound model (parameters and initial values set) and samples
/// the solution at `times`. `times[0]` may equal t0, in which case row 0 is
/// the initial state.
inline Trajectory integrate(const OdeModel& m, std::span<const double> times, const SolverConfig& cfg = {}) {
  ModelEvaluator ev(m);
  const auto& x0 = m.initial_state();
  Eigen::VectorXd y0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  Trajectory out;
  out.times.assign(times.begin(), times.end());
  out.values.resize(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(m.num_states()));
  OdeFunction f = [&ev](double t, const double* x, double* dx) { ev.rhs(t, x, dx); };
  solve_ivp(f, m.initial_time(), y0, times, cfg,
            [&](std::size_t i, const Eigen::VectorXd& y) { out.values.row(static_cast<Eigen::Index>(i)) = y.transpose(); });
  return out;
}

inline Trajectory integrate(const OdeModel& m, const std::vector<double>& times, const SolverConfig& cfg = {}) {
  return integrate(m, std::span<const double>(times), cfg);
}

/// Evenly spaced grid including both end points.
inline std::vector<double> linspace(double start, double stop, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = start;
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  out.back() = stop;
  return out;
}

// Exposed callbacks for external integrators. The `_T` twins take (t, x).

inline Eigen::VectorXd rhs_at(const OdeModel& m, const Eigen::VectorXd& x, double t) {
  ModelEvaluator ev(m);
  return ev.rhs(t, x);
}
inline Eigen::VectorXd rhs_at_T(const OdeModel& m, double t, const Eigen::VectorXd& x) { return rhs_at(m, x, t); }

inline Eigen::MatrixXd jacobian_at(const OdeModel& m, const Eigen::VectorXd& x, double t) {
  ModelEvaluator ev(m);
  Eigen::MatrixXd out;
  ev.jacobian(t, x.data(), out);
  return out;
}
inline Eigen::MatrixXd jacobian_at_T(const OdeModel& m, double t, const Eigen::VectorXd& x) {
  return jacobian_at(m, x, t);
}

inline Eigen::MatrixXd grad_at(const OdeModel& m, const Eigen::VectorXd& x, double t) {
  ModelEvaluator ev(m);
  Eigen::MatrixXd out;
  ev.grad(t, x.data(), out);
  return out;
}
inline Eigen::MatrixXd grad_at_T(const OdeModel& m, double t, const Eigen::VectorXd& x) { return grad_at(m, x, t); }

}  // namespace odekit
