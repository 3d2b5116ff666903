#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "odekit/canonical.hpp"
#include "odekit/error.hpp"
#include "odekit/integrator.hpp"
#include "odekit/model.hpp"
#include "odekit/parallel.hpp"
#include "odekit/random.hpp"

namespace odekit {

// ---------------------------------------------------------------------------
// parameter stochasticity

/// A parameter is either fixed or drawn once per realization.
using ParameterSpec = std::variant<double, Distribution>;
using StochasticParams = std::map<std::string, ParameterSpec>;

struct ParamSimulation {
  Trajectory mean;
  std::vector<Trajectory> runs;
  std::vector<std::vector<double>> parameters;  // the values used per run, declaration order
};

struct RunOptions {
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: ODEKIT_WORKERS or hardware concurrency
};

namespace detail {

/// Resolves one spec per declared parameter; names not given fall back to
/// the model's bound values.
inline std::vector<ParameterSpec> resolve_specs(const OdeModel& m, const StochasticParams& params) {
  for (const auto& [name, spec] : params) {
    if (m.symbols().parameter_index(name) < 0) throw UnknownSymbolError(name);
  }
  std::vector<ParameterSpec> out;
  for (const auto& name : m.parameters()) {
    auto it = params.find(name);
    if (it != params.end()) {
      out.push_back(it->second);
    } else if (auto v = m.parameter_value(name)) {
      out.emplace_back(*v);
    } else {
      throw ModelError("parameter '" + name + "' has neither a value nor a distribution");
    }
  }
  return out;
}

}  // namespace detail

/// Draws every stochastic parameter once per iteration, integrates, and
/// averages the runs on the shared grid. Any failing iteration fails the
/// call (lowest index reported).
inline ParamSimulation simulate_param(const OdeModel& m, const std::vector<double>& times,
                                      const StochasticParams& params, std::size_t iterations,
                                      const RunOptions& opts = {}, const SolverConfig& cfg = {}) {
  if (iterations < 1) throw SimulationError("iterations must be at least 1");
  const auto specs = detail::resolve_specs(m, params);
  ParamSimulation out;
  out.runs.resize(iterations);
  out.parameters.resize(iterations);
  parallel_for(
      iterations,
      [&](std::size_t i) {
        Rng rng = stream(opts.seed, i);
        std::vector<double> theta;
        for (const auto& spec : specs) {
          theta.push_back(std::holds_alternative<double>(spec) ? std::get<double>(spec)
                                                               : std::get<Distribution>(spec)(rng));
        }
        OdeModel local = m;
        std::map<std::string, double> bound;
        for (std::size_t k = 0; k < theta.size(); ++k) bound[m.parameters()[k]] = theta[k];
        local.set_parameters(bound);
        try {
          out.runs[i] = integrate(local, times, cfg);
        } catch (const Error& e) {
          throw Error(e.kind(), "iteration " + std::to_string(i) + ": " + e.what());
        }
        out.parameters[i] = std::move(theta);
      },
      opts.workers);
  out.mean.times = times;
  out.mean.values = Eigen::MatrixXd::Zero(out.runs[0].values.rows(), out.runs[0].values.cols());
  for (const auto& r : out.runs) out.mean.values += r.values;
  out.mean.values /= static_cast<double>(iterations);
  return out;
}

// ---------------------------------------------------------------------------
// jump processes

enum class JumpMethod { TauLeap, Exact };

inline JumpMethod parse_jump_method(const std::string& s) {
  if (s == "tau_leap" || s == "tau" || s == "tauleap") return JumpMethod::TauLeap;
  if (s == "exact" || s == "ssa" || s == "gillespie") return JumpMethod::Exact;
  throw SimulationError("unknown jump method '" + s + "'");
}

struct JumpConfig {
  JumpMethod method = JumpMethod::TauLeap;
  double epsilon = 0.03;           // leap condition bound on relative propensity change
  int critical_threshold = 10;     // channels this close to exhausting a reactant fire exactly
  int max_halvings = 10;           // negative-population retries before an exact step
  int ssa_burst = 100;             // exact steps taken when a leap would be too short
  bool full_output = false;        // keep event (or leap) times
};

struct JumpSimulation {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> values;          // per run: #times x #states, integer valued
  std::vector<std::vector<double>> jump_times;  // per run, only with full_output
};

namespace detail {

/// Jump-process view of a transition-form model: stoichiometry plus the
/// reaction order data that the leap condition needs.
struct JumpSystem {
  std::size_t n = 0;
  std::size_t channels = 0;
  std::vector<std::vector<int>> change;  // [channel][state]
  std::vector<std::string> labels;
  std::vector<double> g_order;           // per state: highest reaction order it takes part in as reactant
  std::vector<int> g_need;               // per state: copies of it that reaction needs

  static JumpSystem from(const OdeModel& m) {
    if (!m.is_transition_form() || m.channels().empty()) {
      throw SimulationError("jump simulation needs a transition-form model (T/B/D); unroll explicit ODEs first");
    }
    JumpSystem sys;
    sys.n = m.num_states();
    sys.channels = m.channels().size();
    sys.g_order.assign(sys.n, 0.0);
    sys.g_need.assign(sys.n, 1);
    for (const auto& ch : m.channels()) {
      if (depends_on(ch.rate, SymbolTable::kTime)) {
        throw SimulationError("propensity of channel " + ch.label + " depends on time");
      }
      sys.change.push_back(ch.change);
      sys.labels.push_back(ch.label);
      // order from the canonical monomials of the rate
      int order = 0;
      std::vector<int> need(sys.n, 0);
      const Polynomial poly = canonicalize(ch.rate);
      for (const auto& [key, mono] : poly.terms()) {
        int deg = 0;
        for (const auto& [atom, f] : mono.factors) {
          const int s = m.symbols().state_index(atom);
          if (s >= 0 && f.exponent.is_integer() && f.exponent.numerator() > 0) {
            deg += static_cast<int>(f.exponent.numerator());
            need[static_cast<std::size_t>(s)] = std::max(need[static_cast<std::size_t>(s)],
                                                         static_cast<int>(f.exponent.numerator()));
          } else if (s >= 0 || std::any_of(m.states().begin(), m.states().end(),
                                           [&](const std::string& st) { return depends_on(f.atom, st); })) {
            deg += 3;  // non-polynomial dependence: be conservative
          }
        }
        order = std::max(order, deg);
      }
      for (std::size_t i = 0; i < sys.n; ++i) {
        if (ch.change[i] < 0 && order > sys.g_order[i]) {
          sys.g_order[i] = order;
          sys.g_need[i] = std::max(1, need[i]);
        }
      }
    }
    return sys;
  }

  /// Cao's g_i for the current population.
  double g(std::size_t i, double x) const {
    const double order = g_order[i];
    const int need = g_need[i];
    if (order <= 1) return 1.0;
    if (order == 2) return (need >= 2 && x > 1) ? 2.0 + 1.0 / (x - 1.0) : 2.0;
    if (order == 3) {
      if (need == 2 && x > 1) return 1.5 * (2.0 + 1.0 / (x - 1.0));
      if (need >= 3 && x > 2) return 3.0 + 1.0 / (x - 1.0) + 2.0 / (x - 2.0);
      return 3.0;
    }
    return order;
  }
};

class JumpRunner {
 public:
  JumpRunner(const OdeModel& m, const JumpSystem& sys, const JumpConfig& cfg, std::vector<double> x0, double t0,
             const std::vector<double>& grid, Rng& rng)
      : ev_(m), sys_(sys), cfg_(cfg), x_(std::move(x0)), t_(t0), grid_(grid), rng_(rng),
        out_(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(sys.n)), a_(sys.channels) {}

  Eigen::MatrixXd run(std::vector<double>* events) {
    events_ = events;
    const double t_end = grid_.back();
    while (next_ < grid_.size()) {
      propensities();
      if (a0_ <= 0.0) break;
      if (cfg_.method == JumpMethod::Exact) {
        exact_step(t_end);
      } else {
        leap(t_end);
      }
    }
    hold_until(std::numeric_limits<double>::infinity());
    return out_;
  }

 private:
  void propensities() {
    ev_.propensities(t_, x_.data(), a_.data());
    a0_ = 0.0;
    for (std::size_t j = 0; j < a_.size(); ++j) {
      if (!(a_[j] >= 0.0) || !std::isfinite(a_[j])) {
        throw SimulationError("channel " + sys_.labels[j] + " has invalid propensity " + std::to_string(a_[j]) +
                              " at t=" + std::to_string(t_));
      }
      a0_ += a_[j];
    }
  }

  /// Writes the current state into every grid slot strictly before `until`.
  void hold_until(double until) {
    while (next_ < grid_.size() && grid_[next_] < until) {
      for (std::size_t i = 0; i < sys_.n; ++i) out_(static_cast<Eigen::Index>(next_), static_cast<Eigen::Index>(i)) = x_[i];
      ++next_;
    }
  }

  void apply(std::size_t j, double count) {
    for (std::size_t i = 0; i < sys_.n; ++i) {
      if (sys_.change[j][i] != 0) x_[i] += count * sys_.change[j][i];
    }
  }

  std::size_t pick_channel(double total, const std::vector<bool>* only = nullptr) {
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng_);
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t j = 0; j < a_.size(); ++j) {
      if (only && !(*only)[j]) continue;
      if (a_[j] <= 0.0) continue;
      acc += a_[j];
      last = j;
      if (r < acc) return j;
    }
    return last;
  }

  /// One Gillespie direct-method event. Returns false when the next event
  /// falls beyond the horizon.
  bool exact_step(double t_end) {
    const double tau = std::exponential_distribution<double>(a0_)(rng_);
    const double t_next = t_ + tau;
    if (t_next > t_end) {
      hold_until(std::numeric_limits<double>::infinity());
      t_ = t_end;
      return false;
    }
    hold_until(t_next);
    const std::size_t j = pick_channel(a0_);
    apply(j, 1.0);
    for (std::size_t i = 0; i < sys_.n; ++i) {
      if (x_[i] < 0) {
        throw SimulationError("channel " + sys_.labels[j] + " drove state " + std::to_string(i) +
                              " negative; its propensity must vanish when a reactant is exhausted");
      }
    }
    t_ = t_next;
    if (events_) events_->push_back(t_);
    return true;
  }

  /// One adaptive tau-leap (Cao, Gillespie, Petzold) with critical channels.
  void leap(double t_end) {
    const std::size_t M = a_.size();
    std::vector<bool> critical(M, false);
    for (std::size_t j = 0; j < M; ++j) {
      if (a_[j] <= 0.0) continue;
      double L = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sys_.n; ++i) {
        if (sys_.change[j][i] < 0) L = std::min(L, std::floor(x_[i] / -sys_.change[j][i]));
      }
      critical[j] = L < cfg_.critical_threshold;
    }

    // leap size bounding the relative change of every propensity
    double tau1 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sys_.n; ++i) {
      if (sys_.g_order[i] <= 0) continue;
      double mu = 0.0, sigma2 = 0.0;
      bool reactant = false;
      for (std::size_t j = 0; j < M; ++j) {
        if (critical[j]) continue;
        const int v = sys_.change[j][i];
        if (v == 0) continue;
        mu += v * a_[j];
        sigma2 += v * v * a_[j];
        if (v < 0) reactant = true;
      }
      if (!reactant) continue;
      const double bound = std::max(cfg_.epsilon * x_[i] / sys_.g(i, x_[i]), 1.0);
      if (mu != 0.0) tau1 = std::min(tau1, bound / std::fabs(mu));
      if (sigma2 > 0.0) tau1 = std::min(tau1, bound * bound / sigma2);
    }

    if (tau1 < 10.0 / a0_) {
      for (int k = 0; k < cfg_.ssa_burst && next_ < grid_.size(); ++k) {
        if (!exact_step(t_end)) return;
        propensities();
        if (a0_ <= 0.0) return;
      }
      return;
    }

    double a0c = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      if (critical[j]) a0c += a_[j];
    }
    std::vector<double> fire(M);
    for (int attempt = 0;; ++attempt) {
      if (attempt > cfg_.max_halvings) {
        exact_step(t_end);
        return;
      }
      const double tau2 = a0c > 0.0 ? std::exponential_distribution<double>(a0c)(rng_)
                                    : std::numeric_limits<double>::infinity();
      double tau = std::min(tau1, tau2);
      bool fire_critical = tau2 <= tau1;
      if (t_ + tau > t_end) {
        tau = t_end - t_;
        fire_critical = false;
      }
      std::fill(fire.begin(), fire.end(), 0.0);
      for (std::size_t j = 0; j < M; ++j) {
        if (!critical[j] && a_[j] > 0.0) {
          fire[j] = static_cast<double>(std::poisson_distribution<long long>(a_[j] * tau)(rng_));
        }
      }
      if (fire_critical) fire[pick_channel(a0c, &critical)] += 1.0;

      std::vector<double> trial = x_;
      bool negative = false;
      for (std::size_t j = 0; j < M && !negative; ++j) {
        if (fire[j] == 0.0) continue;
        for (std::size_t i = 0; i < sys_.n; ++i) trial[i] += fire[j] * sys_.change[j][i];
      }
      for (double v : trial) negative = negative || v < 0;
      if (negative) {
        tau1 /= 2.0;
        continue;
      }
      const double t_next = t_ + tau;
      if (t_next >= t_end) {
        hold_until(t_end);
        x_ = std::move(trial);
        hold_until(std::numeric_limits<double>::infinity());
      } else {
        hold_until(t_next);
        x_ = std::move(trial);
      }
      t_ = t_next;
      if (events_ && std::any_of(fire.begin(), fire.end(), [](double f) { return f > 0; })) events_->push_back(t_);
      return;
    }
  }

  ModelEvaluator ev_;
  const JumpSystem& sys_;
  const JumpConfig& cfg_;
  std::vector<double> x_;
  double t_;
  const std::vector<double>& grid_;
  Rng& rng_;
  Eigen::MatrixXd out_;
  std::vector<double> a_;
  double a0_ = 0.0;
  std::size_t next_ = 0;
  std::vector<double>* events_ = nullptr;
};

}  // namespace detail

/// Stochastic realizations of the jump process defined by a transition-form
/// model, sampled on `times` by holding the last state. Realization i uses
/// its own stream derived from (seed, i).
inline JumpSimulation simulate_jump(const OdeModel& m, const std::vector<double>& times, std::size_t iterations,
                                    const JumpConfig& cfg = {}, const RunOptions& opts = {}) {
  if (iterations < 1) throw SimulationError("iterations must be at least 1");
  if (times.empty()) throw SimulationError("no output times");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw SimulationError("output times must be strictly increasing");
  }
  const auto sys = detail::JumpSystem::from(m);
  const auto& x0 = m.initial_state();
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (x0[i] < 0 || std::floor(x0[i]) != x0[i]) {
      throw SimulationError("initial state '" + m.states()[i] + "' = " + std::to_string(x0[i]) +
                            " is not a non-negative integer");
    }
  }
  if (times.front() < m.initial_time()) throw SimulationError("first output time precedes the initial time");
  m.parameter_vector();  // all values must be bound

  JumpSimulation out;
  out.times = times;
  out.values.resize(iterations);
  out.jump_times.resize(cfg.full_output ? iterations : 0);
  parallel_for(
      iterations,
      [&](std::size_t i) {
        Rng rng = stream(opts.seed, i);
        detail::JumpRunner runner(m, sys, cfg, x0, m.initial_time(), times, rng);
        out.values[i] = runner.run(cfg.full_output ? &out.jump_times[i] : nullptr);
      },
      opts.workers);
  return out;
}

}  // namespace odekit
