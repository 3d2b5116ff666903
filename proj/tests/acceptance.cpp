// Acceptance run: one PASS/FAIL line per criterion, with the measured
// quantities and wall time. Exit status is the number of failures.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "odekit/cli.hpp"
#include "odekit/common_models.hpp"
#include "odekit/confidence.hpp"
#include "odekit/epi.hpp"
#include "odekit/estimation.hpp"
#include "odekit/integrator.hpp"
#include "odekit/stochastic.hpp"
#include "oracles.hpp"

using namespace odekit;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

constexpr double kN = 7781984.0;

OdeModel tutorial_sir() {
  OdeModel m = models::sir_n({{"beta", 3.6}, {"gamma", 0.2}, {"N", kN}});
  m.set_initial_values({0.065 * kN, 123.0 * (5.0 / 30.0), 0.0}, 0.0);
  return m;
}

OdeModel counts_sir(double S, double I, double beta, double gamma) {
  OdeModel m = models::sir_n({{"beta", beta}, {"gamma", gamma}, {"N", S + I}});
  m.set_initial_values({S, I, 0.0}, 0.0);
  return m;
}

double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(a.norm(), b.norm());
}

// --- 1 ---------------------------------------------------------------------
Verdict symbolic_golden() {
  Verdict v;
  const SymbolTable table({"S", "I", "R"}, {"beta", "gamma", "N"});
  const OdeModel m = OdeModel::build(table, {Transition("S", "beta*S*I/N", TransitionType::T, "I"),
                                             Transition("I", "gamma*I", TransitionType::T, "R")});
  const std::vector<std::string> rhs{"-beta*S*I/N", "beta*S*I/N - gamma*I", "gamma*I"};
  const std::vector<std::vector<std::string>> jac{
      {"-beta*I/N", "-beta*S/N", "0"}, {"beta*I/N", "beta*S/N - gamma", "0"}, {"0", "gamma", "0"}};
  const std::vector<std::vector<std::string>> grad{
      {"-I*S/N", "0", "I*S*beta/N^2"}, {"I*S/N", "-I", "-I*S*beta/N^2"}, {"0", "I", "0"}};
  int checked = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    v.require(canonical_equal(m.ode_equations()[i], parse(rhs[i], table)), "rhs row " + std::to_string(i));
    ++checked;
    for (std::size_t j = 0; j < 3; ++j) {
      v.require(canonical_equal(m.jacobian_equations()[i][j], parse(jac[i][j], table)),
                "jacobian " + std::to_string(i) + "," + std::to_string(j));
      v.require(canonical_equal(m.grad_equations()[i][j], parse(grad[i][j], table)),
                "gradient " + std::to_string(i) + "," + std::to_string(j));
      checked += 2;
    }
  }
  v.note(std::to_string(checked) + " entries compared");
  return v;
}

// --- 2 ---------------------------------------------------------------------
Verdict linearity() {
  Verdict v;
  v.require(!models::sir_n().is_linear(), "SIR reported linear");
  const SymbolTable table({"x", "y"}, {"k", "d"});
  const OdeModel lin = OdeModel::build(table, {Transition("x", "k*x", TransitionType::T, "y")}, {},
                                       {Transition("y", "d*y", TransitionType::D)});
  v.require(lin.is_linear(), "decay chain reported non-linear");
  v.note("SIR false, decay chain true");
  return v;
}

// --- 3 ---------------------------------------------------------------------
Verdict deterministic_solve() {
  Verdict v;
  const OdeModel m = tutorial_sir();
  const Trajectory tr = integrate(m, linspace(0, 150, 100));
  const double total = tr.values.row(0).sum();
  double drift = 0;
  for (Eigen::Index i = 0; i < tr.values.rows(); ++i) drift = std::max(drift, std::fabs(tr.values.row(i).sum() - total) / total);
  v.require(drift <= 1e-6, "conservation");

  const Eigen::VectorXd x0 = tr.values.row(0).transpose();
  const Eigen::VectorXd ref =
      oracle::rk4([&](double t, const Eigen::VectorXd& x) { return rhs_at(m, x, t); }, x0, 0.0, 150.0, 1e-4);
  const Eigen::VectorXd end = tr.values.row(tr.values.rows() - 1).transpose();
  double worst = 0;
  for (Eigen::Index i = 0; i < ref.size(); ++i) {
    if (ref[i] != 0) worst = std::max(worst, std::fabs(end[i] - ref[i]) / std::fabs(ref[i]));
  }
  v.require(worst <= 1e-6, "RK4 endpoint");
  v.note("max drift " + fmt("%.2e", drift) + ", endpoint rel err " + fmt("%.2e", worst));
  return v;
}

// --- 4 ---------------------------------------------------------------------
Verdict oscillation() {
  Verdict v;
  const double B = 126372.0 / 365.0;
  OdeModel m = models::sir_birth_death({{"beta", 3.6}, {"gamma", 0.2}, {"N", kN}, {"B", B}, {"mu", B / kN}});
  m.set_initial_values({0.065 * kN, 123.0 * (5.0 / 30.0), 0.0}, 0.0);
  const Trajectory tr = integrate(m, linspace(0, 35 * 365.0, 10001));
  int maxima = 0;
  for (Eigen::Index i = 1; i + 1 < tr.values.rows(); ++i) {
    const double y = tr.values(i, 1);
    if (y > 1.0 && y > tr.values(i - 1, 1) && y >= tr.values(i + 1, 1)) ++maxima;
  }
  v.require(maxima >= 2, "fewer than 2 local maxima");
  v.note(std::to_string(maxima) + " local maxima of I");
  return v;
}

// --- 5 ---------------------------------------------------------------------
Verdict jump_suite() {
  Verdict v;
  // conservation and non-negativity, both methods
  for (auto method : {JumpMethod::Exact, JumpMethod::TauLeap}) {
    for (double S : {50.0, 1000.0, 100000.0}) {
      JumpConfig cfg;
      cfg.method = method;
      const auto sim = simulate_jump(counts_sir(S, 5, 1.5, 0.3), linspace(0, 60, 121), 20, cfg, {.seed = 3});
      for (const auto& x : sim.values) {
        v.require(x.minCoeff() >= 0, "negative state");
        v.require(((x.rowwise().sum()).array() == S + 5).all(), "population not conserved");
      }
    }
  }

  // tau-leap mean against the ODE at the epidemic peak
  const OdeModel big = counts_sir(100000 - 100, 100, 0.5, 0.25);
  const Trajectory det = integrate(big, linspace(0, 80, 801));
  Eigen::Index peak;
  det.values.col(1).maxCoeff(&peak);
  const auto tau = simulate_jump(big, {0.0, det.times[static_cast<std::size_t>(peak)]}, 200, {}, {.seed = 5});
  double mean_i = 0;
  for (const auto& x : tau.values) mean_i += x(1, 1) / 200.0;
  const double tau_err = std::fabs(mean_i - det.values(peak, 1)) / det.values(peak, 1);
  v.require(tau_err <= 0.05, "tau-leap mean off by more than 5%");

  // exact method against an independent direct-method oracle
  const std::vector<double> grid{0, 1, 2, 5, 10, 20, 40};
  const std::size_t runs = 2000;
  JumpConfig exact;
  exact.method = JumpMethod::Exact;
  const auto sim = simulate_jump(counts_sir(99, 1, 3.6, 0.2), grid, runs, exact, {.seed = 2024});
  std::mt19937_64 rng(99);
  double worst_z = 0;
  std::vector<std::vector<double>> ours(grid.size()), theirs(grid.size());
  for (std::size_t r = 0; r < runs; ++r) {
    const auto ref = oracle::direct_sir(99, 1, 0, 3.6, 0.2, 100, grid, rng);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      ours[g].push_back(sim.values[r](static_cast<Eigen::Index>(g), 1));
      theirs[g].push_back(static_cast<double>(ref[g]));
    }
  }
  auto moments = [](const std::vector<double>& x) {
    double m = 0, s = 0;
    for (double a : x) m += a / static_cast<double>(x.size());
    for (double a : x) s += (a - m) * (a - m) / static_cast<double>(x.size() - 1);
    return std::pair{m, s};
  };
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const auto [m1, s1] = moments(ours[g]);
    const auto [m2, s2] = moments(theirs[g]);
    const double se = std::sqrt(s1 / runs + s2 / runs);
    if (se > 0) worst_z = std::max(worst_z, std::fabs(m1 - m2) / se);
  }
  v.require(worst_z < 4.0, "exact method disagrees with the direct-method oracle");

  // early extinction in a small population
  const auto small = simulate_jump(counts_sir(99, 1, 0.5, 0.25), linspace(0, 100, 50), 10, {}, {.seed = 11});
  int extinct = 0;
  for (const auto& x : small.values) extinct += x(49, 2) < 5;
  v.require(extinct > 0, "no early extinction");

  v.note("tau mean rel err " + fmt("%.3f", tau_err) + ", SSA max |z| " + fmt("%.2f", worst_z) + ", " +
         std::to_string(extinct) + "/10 extinct");
  return v;
}

// --- 6 ---------------------------------------------------------------------
Verdict gradient_suite() {
  Verdict v;
  const LossProblem p = fixture::sir_fit(1);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 1.2);
  double worst = 0, worst_id = 0, min_eig = 0;
  for (int k = 0; k < 5; ++k) {
    const Eigen::Vector2d th(u(rng), 0.6 * u(rng));
    const Eigen::VectorXd s = p.sensitivity(th), a = p.adjoint(th);
    Eigen::VectorXd fd(2);
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-4 * std::max(1.0, std::fabs(th[j]));
      Eigen::Vector2d hi = th, lo = th;
      hi[j] += h;
      lo[j] -= h;
      fd[j] = (p.cost(hi) - p.cost(lo)) / (2 * h);
    }
    worst = std::max({worst, rel_diff(s, a), rel_diff(s, fd), rel_diff(a, fd)});

    Eigen::MatrixXd r;
    const Eigen::MatrixXd J = p.jac(th, r);
    Eigen::VectorXd flat(r.size());
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      for (Eigen::Index j = 0; j < r.cols(); ++j) flat[i * r.cols() + j] = r(i, j);
    }
    worst_id = std::max(worst_id, rel_diff(2.0 * J.transpose() * flat, s));
    const Eigen::MatrixXd jtj = p.jtj(th);
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jtj).eigenvalues().minCoeff() /
                                    jtj.norm());
  }
  v.require(worst <= 1e-4, "pairwise gradient agreement");
  v.require(worst_id <= 1e-10, "2 J^T r identity");
  v.require(min_eig >= -1e-12, "J^T J not PSD");
  v.note("max pairwise rel diff " + fmt("%.2e", worst) + ", 2J^T r rel diff " + fmt("%.2e", worst_id));
  return v;
}

// --- 7 ---------------------------------------------------------------------
Verdict fit_recovery() {
  Verdict v;
  int good = 0;
  double b_lo = 1e9, b_hi = -1e9, g_lo = 1e9, g_hi = -1e9;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const FitResult f = fit(fixture::sir_fit(seed), fixture::kSirBounds);
    const double b = f.theta[0], g = f.theta[1];
    good += f.converged && b >= 0.40 && b <= 0.60 && g >= 0.25 && g <= 0.42;
    b_lo = std::min(b_lo, b);
    b_hi = std::max(b_hi, b);
    g_lo = std::min(g_lo, g);
    g_hi = std::max(g_hi, g);
  }
  v.require(good >= 45, "fewer than 45 of 50 seeds recovered");
  v.note(std::to_string(good) + "/50 recovered, beta in [" + fmt("%.3f", b_lo) + ", " + fmt("%.3f", b_hi) +
         "], gamma in [" + fmt("%.3f", g_lo) + ", " + fmt("%.3f", g_hi) + "]");
  return v;
}

// --- 8 ---------------------------------------------------------------------
Verdict ci_suite() {
  Verdict v;
  int covered = 0;
  bool bracket = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const LossProblem p = fixture::sir_fit(seed);
    const FitResult f = fit(p, fixture::kSirBounds);
    const IntervalResult r = ci_asymptotic(p, to_vector(f.theta), 0.05);
    bool ok = true;
    for (std::size_t i = 0; i < 2; ++i) {
      bracket = bracket && r.lower[i] <= f.theta[i] && f.theta[i] <= r.upper[i];
      ok = ok && r.lower[i] <= fixture::kSirTruth[i] && fixture::kSirTruth[i] <= r.upper[i];
    }
    covered += ok;
  }
  v.require(bracket, "asymptotic interval does not bracket the estimate");
  v.require(covered >= 40, "coverage below 80%");

  const LossProblem p = fixture::sir_fit(1);
  const Eigen::VectorXd th = to_vector(fit(p, fixture::kSirBounds).theta);
  BootstrapOptions bo;
  bo.iterations = 100;
  bo.run.seed = 1;
  const IntervalResult a = ci_asymptotic(p, th, 0.05);
  const IntervalResult b = ci_bootstrap(p, th, 0.05, fixture::kSirBounds, bo);
  for (std::size_t i = 0; i < 2; ++i) {
    v.require(b.upper[i] - b.lower[i] < a.upper[i] - a.lower[i], "bootstrap not narrower for " + a.names[i]);
  }

  auto nested = [](const IntervalResult& wide, const IntervalResult& narrow) {
    for (std::size_t i = 0; i < wide.lower.size(); ++i) {
      if (wide.lower[i] > narrow.lower[i] || wide.upper[i] < narrow.upper[i]) return false;
    }
    return true;
  };
  bo.iterations = 40;
  for (auto [a1, a2] : {std::pair{0.01, 0.05}, std::pair{0.05, 0.3}}) {
    v.require(nested(ci_asymptotic(p, th, a1), ci_asymptotic(p, th, a2)), "asymptotic nesting");
    v.require(nested(ci_profile(p, th, a1, fixture::kSirBounds), ci_profile(p, th, a2, fixture::kSirBounds)),
              "profile nesting");
    v.require(nested(ci_bootstrap(p, th, a1, fixture::kSirBounds, bo), ci_bootstrap(p, th, a2, fixture::kSirBounds, bo)),
              "bootstrap nesting");
  }
  v.note(std::to_string(covered) + "/50 covered; widths asymptotic [" + fmt("%.3f", a.upper[0] - a.lower[0]) + ", " +
         fmt("%.3f", a.upper[1] - a.lower[1]) + "] bootstrap [" + fmt("%.3f", b.upper[0] - b.lower[0]) + ", " +
         fmt("%.3f", b.upper[1] - b.lower[1]) + "]");
  return v;
}

// --- 9 ---------------------------------------------------------------------
Verdict r0_suite() {
  Verdict v;
  const OdeModel m = models::sis_vector_host();
  const NextGeneration ng = next_generation(m, {"I_v", "I_h"});
  const Expr sym = r0_symbolic(ng);
  v.require(canonical_equal(sym, parse_free("sqrt(beta_h*beta_v*lambda_h*lambda_v/(mu_h*(gamma+mu_h)))/mu_v")),
            "symbolic form");
  const Expr printed = parse_free("sqrt(beta_h*beta_v*lambda_h*lambda_v/(mu_h*(gamma+mu_h)))/abs(mu_v)");
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    std::map<std::string, double> p;
    for (const char* name : {"beta_v", "beta_h", "mu_v", "mu_h", "lambda_v", "lambda_h", "gamma"}) p[name] = u(rng);
    const double s = evaluate(sym, p);
    worst = std::max({worst, std::fabs(r0_value(ng, p) - s) / s, std::fabs(evaluate(printed, p) - s) / s});
  }
  v.require(worst <= 1e-10, "numeric and symbolic disagree");
  v.note("R0 = " + to_string(sym) + "; max rel diff " + fmt("%.1e", worst));
  return v;
}

// --- 10 --------------------------------------------------------------------
Verdict unroll_suite() {
  Verdict v;
  int fixtures = 0;
  for (const auto& t : models::catalog()) {
    const OdeModel m = t.build({});
    if (m.is_transition_form()) continue;
    ++fixtures;
    const OdeModel u = unroll(m);
    const OdeModel rebuilt = OdeModel::build(u.symbols(), u.transitions(), u.odes(), u.birth_death());
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      v.require(canonical_equal(rebuilt.ode_equations()[i], m.ode_equations()[i]), t.name + " row " + std::to_string(i));
    }
  }
  const OdeModel vh = unroll(models::sis_vector_host());
  auto has = [&](const std::vector<Transition>& list, const std::string& o, const std::string& d, const std::string& rate,
                 TransitionType type) {
    return std::any_of(list.begin(), list.end(), [&](const Transition& tr) {
      return tr.type == type && tr.origin.front() == o && (d.empty() ? tr.destination.empty() : tr.destination.front() == d) &&
             canonical_equal(parse(tr.equation, vh.symbols()), parse(rate, vh.symbols()));
    });
  };
  const auto& T = vh.transitions();
  const auto& BD = vh.birth_death();
  v.require(T.size() == 3 && BD.size() == 6, "vector-host transition counts");
  v.require(has(T, "S_h", "I_h", "beta_h*S_h*I_v", TransitionType::T) &&
                has(T, "S_v", "I_v", "beta_v*S_v*I_h", TransitionType::T) &&
                has(T, "I_h", "S_h", "gamma*I_h", TransitionType::T),
            "vector-host transitions");
  v.require(has(BD, "S_h", "", "lambda_h", TransitionType::B) && has(BD, "S_v", "", "lambda_v", TransitionType::B) &&
                has(BD, "S_h", "", "mu_h*S_h", TransitionType::D) && has(BD, "S_v", "", "mu_v*S_v", TransitionType::D) &&
                has(BD, "I_h", "", "mu_h*I_h", TransitionType::D) && has(BD, "I_v", "", "mu_v*I_v", TransitionType::D),
            "vector-host births and deaths");
  v.note(std::to_string(fixtures) + " explicit-ODE fixtures; vector-host 3 T + 2 B + 4 D");
  return v;
}

// --- 11 --------------------------------------------------------------------
Verdict determinism() {
  Verdict v;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("odekit_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string models_dir = std::string(ODEKIT_SOURCE_DIR) + "/models/";
  const std::string data = (dir / "obs.csv").string();
  {
    const LossProblem p = fixture::sir_fit(4);
    detail::write_file(data, table_csv({"R"}, p.times(), p.observations()));
  }

  struct Command {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> files;  // written by the command besides stdout
  };
  auto numbered = [&](const std::string& prefix, int n, bool mean) {
    std::vector<std::string> f;
    for (int i = 0; i < n; ++i) f.push_back(prefix + "_" + std::to_string(i) + ".csv");
    if (mean) f.push_back(prefix + "_mean.csv");
    return f;
  };
  const std::string jp = (dir / "jump").string(), ep = (dir / "exact").string(), pp = (dir / "param").string();
  const std::vector<Command> commands{
      {"simulate jump tau_leap",
       {"simulate", models_dir + "sir.json", "--x0", "505828,20,0", "--times", "0:100:50", "--iterations", "10",
        "--seed", "42", "--prefix", jp},
       numbered(jp, 10, false)},
      {"simulate jump exact",
       {"simulate", models_dir + "sir.json", "--x0", "5000,20,0", "--set", "N=5020", "--method", "exact", "--times",
        "0:60:30", "--iterations", "10", "--seed", "42", "--prefix", ep},
       numbered(ep, 10, false)},
      {"simulate param",
       {"simulate", models_dir + "sir.json", "--mode", "param", "--times", "0:150:100", "--iterations", "10", "--seed",
        "42", "--prefix", pp},
       numbered(pp, 10, true)},
      {"ci bootstrap",
       {"ci", models_dir + "sir_proportion.json", "--data", data, "--theta0", "0.5,0.5", "--bounds", "0:2,0:2",
        "--method", "bootstrap", "--iterations", "24", "--seed", "42"},
       {}},
  };

  auto run_once = [&](const Command& c, const char* workers) {
    setenv("ODEKIT_WORKERS", workers, 1);
    std::vector<std::string> args{"odekit"};
    args.insert(args.end(), c.args.begin(), c.args.end());
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    std::string all = std::to_string(code) + "\n" + out.str() + err.str();
    for (const auto& f : c.files) all += "\n--" + f + "\n" + detail::read_file(f);
    return std::pair{code, all};
  };
  for (const auto& c : commands) {
    const auto a = run_once(c, "1");
    const auto b = run_once(c, "1");
    const auto d = run_once(c, "4");
    v.require(a.first == 0, c.name + " exited " + std::to_string(a.first));
    v.require(a.second == b.second, c.name + " repeat differs");
    v.require(a.second == d.second, c.name + " differs across worker counts");
  }
  unsetenv("ODEKIT_WORKERS");
  fs::remove_all(dir);
  v.note(std::to_string(commands.size()) + " stochastic commands, workers 1/1/4 bit-identical");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Verdict()> body;
  };
  const std::vector<Criterion> all{
      {1, "symbolic golden suite", 1, symbolic_golden},
      {2, "linearity", 1, linearity},
      {3, "deterministic solve", 5, deterministic_solve},
      {4, "oscillation fixture", 10, oscillation},
      {5, "jump-process suite", 60, jump_suite},
      {6, "gradient suite", 30, gradient_suite},
      {7, "fit recovery", 120, fit_recovery},
      {8, "confidence interval suite", 300, ci_suite},
      {9, "R0", 5, r0_suite},
      {10, "unroll round-trip", 5, unroll_suite},
      {11, "determinism", 300, determinism},
  };
  int failures = 0;
  for (const auto& c : all) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_s) {
      v.ok = false;
      v.note("over the " + fmt("%.0f", c.limit_s) + " s limit");
    }
    failures += !v.ok;
    std::printf("%s %2d %s (%.2f s): %s\n", v.ok ? "PASS" : "FAIL", c.id, c.name, secs, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
