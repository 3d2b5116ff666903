#pragma once

#include <cstdlib>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "odekit/common_models.hpp"
#include "odekit/confidence.hpp"
#include "odekit/epi.hpp"
#include "odekit/estimation.hpp"
#include "odekit/integrator.hpp"
#include "odekit/io.hpp"
#include "odekit/stochastic.hpp"

namespace odekit::cli {

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error("UsageError", message) {}
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double to_number(const std::string& s, const std::string& what) {
  double v = 0;
  if (!parse_number(s, v) || !std::isfinite(v)) throw UsageError(what + ": '" + s + "' is not a number");
  return v;
}

inline std::vector<double> number_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(to_number(part, what));
  return out;
}

/// "start:stop:count" for an even grid, otherwise a comma-separated list.
inline std::vector<double> parse_times(const std::string& s) {
  if (s.find(':') != std::string::npos) {
    const auto parts = split(s, ':');
    if (parts.size() != 3) throw UsageError("--times: expected start:stop:count");
    const double count = to_number(parts[2], "--times count");
    if (count < 1 || std::floor(count) != count) throw UsageError("--times: count must be a positive integer");
    return linspace(to_number(parts[0], "--times"), to_number(parts[1], "--times"), static_cast<std::size_t>(count));
  }
  return number_list(s, "--times");
}

/// "lo:hi" per target, comma separated.
inline Bounds parse_bounds(const std::string& s) {
  Bounds out;
  for (const auto& part : split(s, ',')) {
    const auto lohi = split(part, ':');
    if (lohi.size() != 2) throw UsageError("--bounds: expected lo:hi, got '" + part + "'");
    out.emplace_back(to_number(lohi[0], "--bounds"), to_number(lohi[1], "--bounds"));
  }
  return out;
}

/// name=family:arg=v:arg=v, e.g. beta=gamma:shape=2:rate=4
inline std::pair<std::string, Distribution> parse_distribution(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw UsageError("--dist: expected name=family:arg=value...");
  const auto parts = split(s.substr(eq + 1), ':');
  std::map<std::string, double> args;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto kv = split(parts[i], '=');
    if (kv.size() != 2) throw UsageError("--dist: bad argument '" + parts[i] + "'");
    args[kv[0]] = to_number(kv[1], "--dist");
  }
  return {s.substr(0, eq), Distribution::from_name(parts[0], args)};
}

struct Options {
  std::string model;
  std::vector<std::string> set;
  std::string x0;
  std::optional<double> t0;
  std::string out;
  double rtol = 1e-8;
  double atol = 1e-8;

  std::string times;

  std::string mode = "jump";
  std::size_t iterations = 10;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string prefix = "realization";
  std::vector<std::string> dists;

  std::string data;
  std::string loss = "square";
  std::string params;
  std::string theta0;
  std::string bounds;
  std::optional<double> weight;
  std::string gradient = "sensitivity";
  double alpha = 0.05;

  std::string disease;
  bool latex = false;
};

struct Loaded {
  OdeModel model;
  std::map<std::string, Distribution> distributions;
};

/// MODEL is a model file path or builtin:<name>.
inline Loaded load(const Options& o) {
  Loaded l = [&] {
    if (o.model.rfind("builtin:", 0) == 0) return Loaded{models::by_name(o.model.substr(8)), {}};
    ModelFile f = load_model_file(o.model);
    return Loaded{std::move(f.model), std::move(f.distributions)};
  }();
  std::map<std::string, double> values;
  for (const auto& s : o.set) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set: expected name=value, got '" + s + "'");
    values[s.substr(0, eq)] = to_number(s.substr(eq + 1), "--set " + s.substr(0, eq));
  }
  l.model.set_parameters(values);
  if (!o.x0.empty() || o.t0) {
    const std::vector<double> x0 = o.x0.empty() ? l.model.initial_state() : number_list(o.x0, "--x0");
    l.model.set_initial_values(x0, o.t0 ? *o.t0 : l.model.initial_time());
  }
  return l;
}

inline std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) return *o.seed;
  const char* req = std::getenv("ODEKIT_REQUIRE_SEED");
  if (req && *req && std::string(req) != "0") throw UsageError("--seed is required when ODEKIT_REQUIRE_SEED is set");
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline void emit(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty() || o.out == "-") {
    out << text;
  } else {
    detail::write_file(o.out, text);
  }
}

inline std::string solve_csv(const OdeModel& m, const std::vector<double>& times, const SolverConfig& cfg) {
  const Trajectory tr = integrate(m, times, cfg);
  return table_csv(m.states(), tr.times, tr.values);
}

/// The fit problem a `fit` or `ci` invocation describes.
struct FitSetup {
  LossProblem problem;
  Bounds bounds;
  FitOptions options;
};

inline FitSetup fit_setup(const Options& o, const OdeModel& m) {
  if (o.data.empty()) throw UsageError("--data is required");
  const Observations obs = load_observations(o.data);
  std::vector<std::string> targets = o.params.empty() ? m.parameters() : split(o.params, ',');
  std::vector<double> theta;
  if (!o.theta0.empty()) {
    theta = number_list(o.theta0, "--theta0");
  } else {
    for (const auto& name : targets) {
      const auto v = m.parameter_value(name);
      if (!v) throw UsageError("no starting value for '" + name + "': give --theta0 or bind it in the model");
      theta.push_back(*v);
    }
  }
  if (o.bounds.empty()) throw UsageError("--bounds is required");
  LossSetup s{.model = m,
              .theta = theta,
              .x0 = m.initial_state(),
              .t0 = m.initial_time(),
              .t = obs.t,
              .y = obs.y,
              .state_names = obs.states,
              .target_params = targets,
              .loss = parse_loss_kind(o.loss)};
  if (o.weight) s.weights = *o.weight;
  FitSetup f{LossProblem(std::move(s)), parse_bounds(o.bounds), {}};
  f.problem.solver().rtol = o.rtol;
  f.problem.solver().atol = o.atol;
  if (o.gradient == "adjoint") {
    f.options.gradient = GradientMethod::Adjoint;
  } else if (o.gradient != "sensitivity") {
    throw UsageError("--gradient must be sensitivity or adjoint");
  }
  return f;
}

inline int run(const std::string& command, const Options& o, std::ostream& out) {
  const SolverConfig cfg{.rtol = o.rtol, .atol = o.atol};
  Loaded l = load(o);
  const OdeModel& m = l.model;

  if (command == "solve") {
    if (o.times.empty()) throw UsageError("--times is required");
    emit(o, solve_csv(m, parse_times(o.times), cfg), out);
    return 0;
  }

  if (command == "simulate") {
    if (o.times.empty()) throw UsageError("--times is required");
    const auto times = parse_times(o.times);
    const RunOptions run{.seed = resolve_seed(o)};
    json summary{{"command", "simulate"}, {"mode", o.mode}, {"iterations", o.iterations}, {"seed", run.seed}};
    json files = json::array();
    auto write = [&](const std::string& name, const std::vector<double>& t, const Eigen::MatrixXd& v) {
      detail::write_file(name, table_csv(m.states(), t, v));
      files.push_back(name);
    };
    if (o.mode == "jump") {
      JumpConfig jc;
      if (!o.method.empty()) jc.method = parse_jump_method(o.method);
      summary["method"] = jc.method == JumpMethod::Exact ? "exact" : "tau_leap";
      const JumpSimulation sim = simulate_jump(m, times, o.iterations, jc, run);
      for (std::size_t i = 0; i < sim.values.size(); ++i) {
        write(o.prefix + "_" + std::to_string(i) + ".csv", sim.times, sim.values[i]);
      }
    } else if (o.mode == "param") {
      StochasticParams specs;
      for (const auto& [name, d] : l.distributions) specs[name] = d;
      for (const auto& s : o.dists) {
        auto [name, d] = parse_distribution(s);
        specs.insert_or_assign(name, d);
      }
      if (specs.empty()) throw UsageError("param mode needs parameter distributions (model file or --dist)");
      const ParamSimulation sim = simulate_param(m, times, specs, o.iterations, run, cfg);
      for (std::size_t i = 0; i < sim.runs.size(); ++i) {
        write(o.prefix + "_" + std::to_string(i) + ".csv", sim.runs[i].times, sim.runs[i].values);
      }
      write(o.prefix + "_mean.csv", sim.mean.times, sim.mean.values);
    } else {
      throw UsageError("--mode must be param or jump");
    }
    summary["files"] = files;
    out << summary.dump(2) << "\n";
    return 0;
  }

  if (command == "fit" || command == "ci") {
    FitSetup f = fit_setup(o, m);
    const FitResult fr = fit(f.problem, f.bounds, f.options);
    json summary{{"command", command}, {"fit", fit_summary(fr, f.problem.target_params(), f.problem.loss())}};
    if (command == "ci") {
      const Eigen::VectorXd theta_hat = to_vector(fr.theta);
      const std::string method = o.method.empty() ? "asymptotic" : o.method;
      IntervalResult r;
      if (method == "asymptotic") {
        r = ci_asymptotic(f.problem, theta_hat, o.alpha);
      } else if (method == "profile") {
        r = ci_profile(f.problem, theta_hat, o.alpha, f.bounds, f.options);
      } else if (method == "bootstrap") {
        BootstrapOptions bo;
        bo.iterations = o.iterations;
        bo.run.seed = resolve_seed(o);
        bo.fit = f.options;
        r = ci_bootstrap(f.problem, theta_hat, o.alpha, f.bounds, bo);
      } else {
        throw UsageError("--method must be asymptotic, profile or bootstrap");
      }
      summary["interval"] = interval_summary(r);
    }
    emit(o, summary.dump(2) + "\n", out);
    return 0;
  }

  if (command == "r0") {
    if (o.disease.empty()) throw UsageError("--disease-states is required");
    const auto disease = split(o.disease, ',');
    const R0Result r = r0(m, disease);
    json summary{{"command", "r0"}, {"disease_states", disease}};
    summary["symbolic"] = r.symbolic ? json(to_string(*r.symbolic)) : json(nullptr);
    summary["latex"] = r.symbolic ? json(to_latex(*r.symbolic)) : json(nullptr);
    summary["value"] = r.value ? json(*r.value) : json(nullptr);
    emit(o, summary.dump(2) + "\n", out);
    return 0;
  }

  if (command == "unroll") {
    emit(o, model_to_string(unroll(m), l.distributions), out);
    return 0;
  }

  if (command == "print") {
    emit(o, m.print_ode(o.latex), out);
    return 0;
  }
  throw UsageError("unknown command '" + command + "'");
}

/// Entry point shared by the executable and the tests. Returns the exit
/// code: 0 on success, 1 on a library error, 2 on a usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Build, simulate, fit and analyse compartmental ODE models", "odekit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("model", o.model, "model file, or builtin:<name>")->required();
    sub->add_option("--set", o.set, "override a parameter value, name=value (repeatable)");
    sub->add_option("--x0", o.x0, "initial state, comma separated");
    sub->add_option("--t0", o.t0, "initial time");
    sub->add_option("-o,--out", o.out, "output file (default stdout)");
  };
  auto solver = [&](CLI::App* sub) {
    sub->add_option("--rtol", o.rtol, "relative tolerance");
    sub->add_option("--atol", o.atol, "absolute tolerance");
  };
  auto fitting = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "observations: t then one column per observed state")->required();
    sub->add_option("--loss", o.loss, "square, normal or poisson");
    sub->add_option("--params", o.params, "target parameters, comma separated (default all)");
    sub->add_option("--theta0", o.theta0, "starting values, comma separated");
    sub->add_option("--bounds", o.bounds, "lo:hi per target, comma separated")->required();
    sub->add_option("--weight", o.weight, "scalar observation weight");
    sub->add_option("--gradient", o.gradient, "sensitivity or adjoint");
  };

  auto* solve = app.add_subcommand("solve", "integrate the model, write t,<states> CSV");
  common(solve);
  solver(solve);
  solve->add_option("--times", o.times, "start:stop:count or a comma list")->required();

  auto* simulate = app.add_subcommand("simulate", "stochastic realizations, one CSV per realization");
  common(simulate);
  solver(simulate);
  simulate->add_option("--times", o.times, "start:stop:count or a comma list")->required();
  simulate->add_option("--mode", o.mode, "param or jump");
  simulate->add_option("--iterations", o.iterations, "number of realizations");
  simulate->add_option("--seed", o.seed, "random seed");
  simulate->add_option("--method", o.method, "jump method: tau_leap or exact");
  simulate->add_option("--prefix", o.prefix, "output files are <prefix>_<i>.csv");
  simulate->add_option("--dist", o.dists, "name=family:arg=value:... (repeatable)");

  auto* fitc = app.add_subcommand("fit", "estimate parameters from observations");
  common(fitc);
  solver(fitc);
  fitting(fitc);

  auto* ci = app.add_subcommand("ci", "fit, then confidence intervals");
  common(ci);
  solver(ci);
  fitting(ci);
  ci->add_option("--method", o.method, "asymptotic, profile or bootstrap");
  ci->add_option("--alpha", o.alpha, "1 - confidence level");
  ci->add_option("--iterations", o.iterations, "bootstrap replicates")->default_val(100);
  ci->add_option("--seed", o.seed, "bootstrap seed");

  auto* r0c = app.add_subcommand("r0", "basic reproduction number");
  common(r0c);
  r0c->add_option("--disease-states", o.disease, "comma separated")->required();

  auto* unrollc = app.add_subcommand("unroll", "rewrite an ODE model as transitions, emit the model file");
  common(unrollc);

  auto* print = app.add_subcommand("print", "one equation per state");
  common(print);
  print->add_flag("--latex", o.latex, "LaTeX output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: InternalError: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace odekit::cli
