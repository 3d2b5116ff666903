#include <gtest/gtest.h>

#include <random>

#include "odekit/common_models.hpp"
#include "odekit/integrator.hpp"
#include "odekit/model.hpp"
#include "oracles.hpp"

using namespace odekit;

namespace {

const SymbolTable kSir({"S", "I", "R"}, {"beta", "gamma", "N"});

OdeModel sir_from_transitions() {
  return OdeModel::build(kSir, {Transition("S", "beta*S*I/N", TransitionType::T, "I"),
                                Transition("I", "gamma*I", TransitionType::T, "R")});
}

void expect_rows(const std::vector<Expr>& got, const std::vector<std::string>& want, const SymbolTable& table) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_TRUE(canonical_equal(got[i], parse(want[i], table))) << i << ": " << to_string(got[i]) << " vs " << want[i];
  }
}

void expect_matrix(const ExprMatrix& got, const std::vector<std::vector<std::string>>& want, const SymbolTable& table) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) expect_rows(got[i], want[i], table);
}

Eigen::VectorXd eval_rhs(const OdeModel& m, const Eigen::VectorXd& x, std::span<const double> theta) {
  ModelEvaluator ev(m, theta);
  return ev.rhs(0.0, x);
}

}  // namespace

TEST(Build, SirGoldenMatrices) {
  auto m = sir_from_transitions();
  expect_rows(m.ode_equations(), {"-I*S*beta/N", "I*(S*beta/N-gamma)", "I*gamma"}, kSir);
  expect_matrix(m.jacobian_equations(),
                {{"-I*beta/N", "-S*beta/N", "0"}, {"I*beta/N", "-gamma + S*beta/N", "0"}, {"0", "gamma", "0"}}, kSir);
  expect_matrix(m.grad_equations(),
                {{"-I*S/N", "0", "I*S*beta/N**2"}, {"I*S/N", "-I", "-I*S*beta/N**2"}, {"0", "I", "0"}}, kSir);
}

TEST(Build, ExplicitOdesMatchTransitions) {
  auto a = sir_from_transitions();
  auto b = models::sir_explicit();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(canonical_equal(a.ode_equations()[i], b.ode_equations()[i]));
  EXPECT_TRUE(a.is_transition_form());
  EXPECT_FALSE(b.is_transition_form());
  EXPECT_TRUE(b.channels().empty());
}

TEST(Build, Errors) {
  EXPECT_THROW(OdeModel::build(kSir, {}), ModelError);
  // ODE-kind given to the transition list
  EXPECT_THROW(OdeModel::build(kSir, {Transition("S", "beta*S")}), ModelError);
  EXPECT_THROW(OdeModel::build(kSir, {}, {Transition("S", "beta", TransitionType::B)}), ModelError);
  EXPECT_THROW(OdeModel::build(kSir, {}, {}, {Transition("S", "I", TransitionType::T, "I")}), ModelError);
  // unknown symbol in an equation
  EXPECT_THROW(OdeModel::build(kSir, {Transition("S", "kappa*S", TransitionType::T, "I")}), UnknownSymbolError);
  // duplicate ODE for a state
  EXPECT_THROW(OdeModel::build(kSir, {}, {Transition("S", "-S"), Transition("S", "S")}), ModelError);
  // T without destination, or overlapping origin/destination
  EXPECT_THROW(OdeModel::build(kSir, {Transition("S", "S", TransitionType::T)}), ModelError);
  EXPECT_THROW(OdeModel::build(kSir, {Transition(std::vector<std::string>{"S", "I"}, "S", TransitionType::T, std::vector<std::string>{"I"})}), ModelError);
  try {
    OdeModel::build(kSir, {Transition("S", "beta*S")});
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("wrongly typed transition"), std::string::npos);
  }
}

TEST(Build, BirthOnlyAndTimeDependence) {
  SymbolTable table({"x"}, {"B"});
  auto m = OdeModel::build(table, {}, {}, {Transition("x", "B", TransitionType::B)});
  expect_rows(m.ode_equations(), {"B"}, table);
  EXPECT_FALSE(m.is_time_dependent());
  auto forced = OdeModel::build(table, {}, {Transition("x", "B*sin(t)")});
  EXPECT_TRUE(forced.is_time_dependent());
}

TEST(Build, MultiStateStoichiometry) {
  // A + A -> B at k*A^2/2
  SymbolTable table({"A", "B"}, {"k"});
  auto m = OdeModel::build(table, {Transition(std::vector<std::string>{"A", "A"}, "k*A^2/2", TransitionType::T, std::vector<std::string>{"B"})});
  expect_rows(m.ode_equations(), {"-k*A^2", "k*A^2/2"}, table);
  Eigen::MatrixXi s = m.stoichiometry();
  EXPECT_EQ(s(0, 0), -2);
  EXPECT_EQ(s(1, 0), 1);
}

TEST(Build, StoichiometryTimesRatesReproducesRhs) {
  for (const auto& name : {"sir", "sir_n", "sir_birth_death", "seir"}) {
    auto m = models::by_name(name);
    const auto& ch = m.channels();
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      std::vector<Expr> terms;
      for (const auto& c : ch) terms.push_back(Expr(c.change[i]) * c.rate);
      EXPECT_TRUE(canonical_equal(make_sum(terms), m.ode_equations()[i])) << name << " row " << i;
    }
  }
}

TEST(Build, ConservationForClosedModels) {
  for (const auto& name : {"sir", "sir_n", "seir"}) {
    auto m = models::by_name(name);
    Eigen::MatrixXi s = m.stoichiometry();
    EXPECT_TRUE((s.colwise().sum().array() == 0).all()) << name;
    EXPECT_TRUE(is_identically_zero(make_sum(m.ode_equations()))) << name;
  }
}

TEST(Linearity, SirIsNotLinear) { EXPECT_FALSE(sir_from_transitions().is_linear()); }

TEST(Linearity, DecayIsLinear) {
  SymbolTable table({"x"}, {"a"});
  EXPECT_TRUE(OdeModel::build(table, {}, {Transition("x", "-a*x")}).is_linear());
}

TEST(Linearity, RandomLinearCombinationsAreLinear) {
  std::mt19937 rng(3);
  SymbolTable table({"x0", "x1", "x2"}, {"p0", "p1", "p2", "p3"});
  std::uniform_int_distribution<int> pick(0, 3), coef(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Transition> odes;
    for (int i = 0; i < 3; ++i) {
      std::string eq = "p" + std::to_string(pick(rng));
      for (int j = 0; j < 3; ++j) {
        eq += "+(" + std::to_string(coef(rng)) + ")*p" + std::to_string(pick(rng)) + "*x" + std::to_string(j);
      }
      odes.emplace_back("x" + std::to_string(i), eq);
    }
    auto m = OdeModel::build(table, {}, odes);
    EXPECT_TRUE(m.is_linear());
    for (const auto& row : m.jacobian_equations()) {
      for (const auto& e : row) {
        for (const auto& s : table.states()) EXPECT_FALSE(depends_on(e, s));
      }
    }
    // one quadratic term breaks linearity
    odes[0].equation += "+x1*x2";
    EXPECT_FALSE(OdeModel::build(table, {}, odes).is_linear());
  }
}

TEST(Derivatives, FiniteDifferenceOnCatalog) {
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (const auto& t : models::catalog()) {
    auto m = t.build({});
    for (int k = 0; k < 10; ++k) {
      Eigen::VectorXd x(static_cast<Eigen::Index>(m.num_states()));
      for (auto& v : x) v = u(rng);
      std::vector<double> theta(m.num_parameters());
      for (auto& v : theta) v = u(rng);
      ModelEvaluator ev(m, theta);
      Eigen::MatrixXd J, G;
      ev.jacobian(0.0, x.data(), J);
      ev.grad(0.0, x.data(), G);
      auto fdJ = oracle::fd_jacobian([&](const Eigen::VectorXd& y) { return eval_rhs(m, y, theta); }, x);
      Eigen::VectorXd th = Eigen::Map<Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
      auto fdG = oracle::fd_jacobian(
          [&](const Eigen::VectorXd& p) {
            return eval_rhs(m, x, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
          },
          th);
      EXPECT_LT((J - fdJ).norm(), 1e-6 * std::max(1.0, J.norm())) << t.name;
      EXPECT_LT((G - fdG).norm(), 1e-6 * std::max(1.0, G.norm())) << t.name;
    }
  }
}

TEST(Derivatives, RandomPolynomialRhs) {
  std::mt19937 rng(23);
  SymbolTable table({"u", "v"}, {"a", "b"});
  std::uniform_int_distribution<int> coef(-4, 4), power(0, 3);
  std::uniform_real_distribution<double> pt(0.3, 1.5);
  for (int trial = 0; trial < 15; ++trial) {
    std::vector<Transition> odes;
    for (const char* s : {"u", "v"}) {
      std::string eq = "0";
      for (int k = 0; k < 4; ++k) {
        eq += "+(" + std::to_string(coef(rng)) + ")*a^" + std::to_string(power(rng)) + "*u^" +
              std::to_string(power(rng)) + "*v^" + std::to_string(power(rng)) + "/b";
      }
      odes.emplace_back(s, eq);
    }
    auto m = OdeModel::build(table, {}, odes);
    std::vector<double> theta{pt(rng), pt(rng)};
    Eigen::Vector2d x(pt(rng), pt(rng));
    ModelEvaluator ev(m, theta);
    Eigen::MatrixXd J;
    ev.jacobian(0.0, x.data(), J);
    auto fd = oracle::fd_jacobian([&](const Eigen::VectorXd& y) { return eval_rhs(m, y, theta); }, x);
    EXPECT_LT((J - fd).norm(), 1e-6 * std::max(1.0, J.norm()));
  }
}

TEST(Derivatives, AbsentParameterGivesZeroColumn) {
  SymbolTable table({"x"}, {"a", "unused"});
  auto m = OdeModel::build(table, {}, {Transition("x", "-a*x")});
  EXPECT_TRUE(m.grad_equations()[0][1].is_zero());
}

TEST(BirthDeath, AugmentSir) {
  auto base = sir_from_transitions();
  auto m = add_birth_death(base, {"B", "mu"},
                           {Transition("S", "B", TransitionType::B), Transition("S", "mu*S", TransitionType::D),
                            Transition("I", "mu*I", TransitionType::D)});
  const SymbolTable& table = m.symbols();
  expect_rows(m.ode_equations(), {"B - mu*S - beta*S*I/N", "beta*S*I/N - gamma*I - mu*I", "gamma*I"}, table);
  // jacobian refreshed
  EXPECT_TRUE(canonical_equal(m.jacobian_equations()[0][0], parse("-mu - beta*I/N", table)));
  // round trip through unroll
  auto back = unroll(to_explicit_odes(m));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(canonical_equal(back.ode_equations()[i], m.ode_equations()[i]));

  auto zero = add_birth_death(base, {}, {Transition("R", "0", TransitionType::D)});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(canonical_equal(zero.ode_equations()[i], base.ode_equations()[i]));

  EXPECT_THROW(add_birth_death(base, {}, {Transition("S", "kappa*S", TransitionType::D)}), UnknownSymbolError);
}

TEST(BirthDeath, KeepsBindings) {
  auto base = sir_from_transitions();
  base.set_parameters({{"beta", 1.0}, {"gamma", 2.0}, {"N", 3.0}});
  auto m = add_birth_death(base, {"mu"}, {Transition("S", "mu*S", TransitionType::D)});
  EXPECT_EQ(m.parameter_value("gamma").value(), 2.0);
  EXPECT_FALSE(m.parameter_value("mu").has_value());
  EXPECT_THROW(m.parameter_vector(), ModelError);
}

TEST(Unroll, SirRecoversBothTransitions) {
  auto m = unroll(models::sir_explicit());
  ASSERT_EQ(m.transitions().size(), 2u);
  EXPECT_TRUE(m.birth_death().empty());
  const auto& table = m.symbols();
  bool infection = false, recovery = false;
  for (const auto& tr : m.transitions()) {
    const Expr rate = parse(tr.equation, table);
    if (tr.origin == std::vector<std::string>{"S"} && tr.destination == std::vector<std::string>{"I"}) {
      infection = canonical_equal(rate, parse("beta*S*I/N", table));
    }
    if (tr.origin == std::vector<std::string>{"I"} && tr.destination == std::vector<std::string>{"R"}) {
      recovery = canonical_equal(rate, parse("gamma*I", table));
    }
  }
  EXPECT_TRUE(infection);
  EXPECT_TRUE(recovery);
}

TEST(Unroll, VectorHostClassification) {
  auto src = models::sis_vector_host();
  auto m = unroll(src);
  const auto& table = m.symbols();
  auto has = [&](const std::vector<Transition>& list, const std::string& origin, const std::string& dest,
                 const std::string& rate, TransitionType type) {
    return std::any_of(list.begin(), list.end(), [&](const Transition& tr) {
      return tr.type == type && tr.origin.front() == origin &&
             (dest.empty() ? tr.destination.empty() : tr.destination.front() == dest) &&
             canonical_equal(parse(tr.equation, table), parse(rate, table));
    });
  };
  const auto& T = m.transitions();
  const auto& BD = m.birth_death();
  EXPECT_EQ(T.size(), 3u);
  EXPECT_TRUE(has(T, "S_h", "I_h", "beta_h*S_h*I_v", TransitionType::T));
  EXPECT_TRUE(has(T, "S_v", "I_v", "beta_v*S_v*I_h", TransitionType::T));
  EXPECT_TRUE(has(T, "I_h", "S_h", "gamma*I_h", TransitionType::T));
  EXPECT_EQ(BD.size(), 6u);
  EXPECT_TRUE(has(BD, "S_h", "", "lambda_h", TransitionType::B));
  EXPECT_TRUE(has(BD, "S_v", "", "lambda_v", TransitionType::B));
  EXPECT_TRUE(has(BD, "S_h", "", "mu_h*S_h", TransitionType::D));
  EXPECT_TRUE(has(BD, "S_v", "", "mu_v*S_v", TransitionType::D));
  EXPECT_TRUE(has(BD, "I_h", "", "mu_h*I_h", TransitionType::D));
  EXPECT_TRUE(has(BD, "I_v", "", "mu_v*I_v", TransitionType::D));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(canonical_equal(m.ode_equations()[i], src.ode_equations()[i]));
}

TEST(Unroll, ZeroSystemHasNoTransitions) {
  SymbolTable table({"x"}, {});
  auto m = unroll(OdeModel::build(table, {}, {Transition("x", "0")}));
  EXPECT_TRUE(m.transitions().empty());
  EXPECT_TRUE(is_identically_zero(m.ode_equations()[0]));
}

TEST(Unroll, AmbiguousMatchIsAnError) {
  SymbolTable table({"x", "y", "z"}, {"k"});
  auto m = OdeModel::build(table, {}, {Transition("x", "-k*x"), Transition("y", "k*x"), Transition("z", "k*x")});
  try {
    unroll(m);
    FAIL() << "expected ambiguity";
  } catch (const ModelError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ambiguous"), std::string::npos);
    EXPECT_NE(msg.find("y"), std::string::npos);
    EXPECT_NE(msg.find("z"), std::string::npos);
  }
}

TEST(Unroll, RoundTripOnCatalog) {
  for (const auto& t : models::catalog()) {
    auto m = t.build({});
    auto back = unroll(to_explicit_odes(m));
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      EXPECT_TRUE(canonical_equal(back.ode_equations()[i], m.ode_equations()[i])) << t.name << " row " << i;
    }
  }
}

TEST(Bindings, OrderFollowsDeclaration) {
  auto m = sir_from_transitions();
  m.set_parameters({{"N", 3.0}, {"beta", 1.0}, {"gamma", 2.0}});
  EXPECT_EQ(m.parameter_vector(), (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_THROW(m.set_parameters({{"delta", 1.0}}), UnknownSymbolError);
  EXPECT_THROW(m.set_initial_values({1.0, 2.0}, 0.0), ModelError);
}

TEST(Templates, MissingParameter) {
  EXPECT_THROW(models::sir({{"beta", 0.5}}), ModelError);
  EXPECT_THROW(models::by_name("sirs"), ModelError);
}

TEST(Templates, ProportionSirMatchesScaledCounts) {
  auto p = models::sir();
  const SymbolTable& table = p.symbols();
  expect_rows(p.ode_equations(), {"-beta*S*I", "beta*S*I - gamma*I", "gamma*I"}, table);
}

TEST(Print, PlainAndLatex) {
  auto m = sir_from_transitions();
  const std::string plain = m.print_ode();
  EXPECT_NE(plain.find("S' = "), std::string::npos);
  EXPECT_NE(plain.find("R' = "), std::string::npos);
  const std::string latex = m.print_ode(true);
  EXPECT_NE(latex.find("\\frac{dS}{dt}"), std::string::npos);
  EXPECT_NE(latex.find("\\beta"), std::string::npos);
}
