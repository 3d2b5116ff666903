#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/model.hpp"

namespace odekit::models {

using ParameterMap = std::map<std::string, double>;

namespace detail {

/// An empty map leaves the model unbound (symbolic use); otherwise every
/// declared parameter must be supplied.
inline OdeModel bind(OdeModel m, const ParameterMap& values) {
  if (values.empty()) return m;
  for (const auto& p : m.parameters()) {
    if (!values.count(p)) throw ModelError("missing parameter '" + p + "'");
  }
  m.set_parameters(values);
  return m;
}

}  // namespace detail

/// SIR in proportions: S -> I at beta*S*I, I -> R at gamma*I.
inline OdeModel sir(const ParameterMap& values = {}) {
  SymbolTable table({"S", "I", "R"}, {"beta", "gamma"});
  return detail::bind(OdeModel::build(table, {Transition("S", "beta*S*I", TransitionType::T, "I"),
                                              Transition("I", "gamma*I", TransitionType::T, "R")}),
                      values);
}

/// SIR in counts with total population N.
inline OdeModel sir_n(const ParameterMap& values = {}) {
  SymbolTable table({"S", "I", "R"}, {"beta", "gamma", "N"});
  return detail::bind(OdeModel::build(table, {Transition("S", "beta*S*I/N", TransitionType::T, "I"),
                                              Transition("I", "gamma*I", TransitionType::T, "R")}),
                      values);
}

/// SIR in counts with a constant birth flux B into S and per-capita death mu
/// out of S and I.
inline OdeModel sir_birth_death(const ParameterMap& values = {}) {
  SymbolTable table({"S", "I", "R"}, {"beta", "gamma", "N", "B", "mu"});
  return detail::bind(OdeModel::build(table,
                                      {Transition("S", "beta*S*I/N", TransitionType::T, "I"),
                                       Transition("I", "gamma*I", TransitionType::T, "R")},
                                      {},
                                      {Transition("S", "B", TransitionType::B),
                                       Transition("S", "mu*S", TransitionType::D),
                                       Transition("I", "mu*I", TransitionType::D)}),
                      values);
}

/// SEIR in proportions with incubation rate alpha.
inline OdeModel seir(const ParameterMap& values = {}) {
  SymbolTable table({"S", "E", "I", "R"}, {"beta", "alpha", "gamma"});
  return detail::bind(OdeModel::build(table, {Transition("S", "beta*S*I", TransitionType::T, "E"),
                                              Transition("E", "alpha*E", TransitionType::T, "I"),
                                              Transition("I", "gamma*I", TransitionType::T, "R")}),
                      values);
}

/// Vector-host SIS given as explicit equations. Deaths enter with a minus
/// sign in both susceptible classes.
inline OdeModel sis_vector_host(const ParameterMap& values = {}) {
  SymbolTable table({"S_v", "S_h", "I_v", "I_h"}, {"beta_v", "beta_h", "mu_v", "mu_h", "lambda_v", "lambda_h", "gamma"});
  std::vector<Transition> odes{
      Transition("S_h", "lambda_h-mu_h*S_h-beta_h*S_h*I_v+gamma*I_h"),
      Transition("S_v", "lambda_v-mu_v*S_v-beta_v*S_v*I_h"),
      Transition("I_h", "beta_h*S_h*I_v-(mu_h+gamma)*I_h"),
      Transition("I_v", "beta_v*S_v*I_h-mu_v*I_v"),
  };
  return detail::bind(OdeModel::build(table, {}, odes), values);
}

/// SIR given as explicit equations (counts, with N).
inline OdeModel sir_explicit(const ParameterMap& values = {}) {
  SymbolTable table({"S", "I", "R"}, {"beta", "gamma", "N"});
  std::vector<Transition> odes{
      Transition("S", "-beta*S*I/N"),
      Transition("I", "beta*S*I/N-gamma*I"),
      Transition("R", "gamma*I"),
  };
  return detail::bind(OdeModel::build(table, {}, odes), values);
}

struct Template {
  std::string name;
  std::function<OdeModel(const ParameterMap&)> build;
};

inline const std::vector<Template>& catalog() {
  static const std::vector<Template> all{
      {"sir", sir},
      {"sir_n", sir_n},
      {"sir_birth_death", sir_birth_death},
      {"seir", seir},
      {"sis_vector_host", sis_vector_host},
      {"sir_explicit", sir_explicit},
  };
  return all;
}

inline OdeModel by_name(const std::string& name, const ParameterMap& values = {}) {
  for (const auto& t : catalog()) {
    if (t.name == name) return t.build(values);
  }
  throw ModelError("no built-in model named '" + name + "'");
}

}  // namespace odekit::models
