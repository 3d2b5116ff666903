#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "odekit/canonical.hpp"
#include "odekit/differentiate.hpp"
#include "odekit/error.hpp"
#include "odekit/evaluate.hpp"
#include "odekit/expr.hpp"
#include "odekit/parse.hpp"
#include "odekit/print.hpp"

namespace odekit {

/// T moves mass between states, ODE is an explicit right-hand side term,
/// B and D are births into and deaths out of a single state.
enum class TransitionType { T, ODE, B, D };

inline const char* to_string(TransitionType type) {
  switch (type) {
    case TransitionType::T: return "T";
    case TransitionType::ODE: return "ODE";
    case TransitionType::B: return "B";
    case TransitionType::D: return "D";
  }
  return "?";
}

inline TransitionType parse_transition_type(const std::string& text) {
  std::string upper = text;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "T" || upper == "TRANSITION") return TransitionType::T;
  if (upper == "ODE") return TransitionType::ODE;
  if (upper == "B" || upper == "BIRTH") return TransitionType::B;
  if (upper == "D" || upper == "DEATH") return TransitionType::D;
  throw ModelError("unknown transition type '" + text + "'");
}

/// A typed process acting on one or more states. Repeating a state in
/// `origin` or `destination` gives it a stoichiometric coefficient (A+A->B).
struct Transition {
  std::vector<std::string> origin;
  std::vector<std::string> destination;
  std::string equation;
  TransitionType type = TransitionType::ODE;

  Transition() = default;
  Transition(std::string origin_state, std::string equation_text, TransitionType kind = TransitionType::ODE,
             std::string destination_state = {})
      : origin{std::move(origin_state)}, equation(std::move(equation_text)), type(kind) {
    if (!destination_state.empty()) destination.push_back(std::move(destination_state));
  }
  Transition(std::vector<std::string> origins, std::string equation_text, TransitionType kind,
             std::vector<std::string> destinations = {})
      : origin(std::move(origins)), destination(std::move(destinations)), equation(std::move(equation_text)),
        type(kind) {}
};

/// One jump channel: its propensity and the integer state change it applies.
struct Channel {
  Expr rate;
  std::vector<int> change;
  std::string label;
};

using ExprMatrix = std::vector<std::vector<Expr>>;

namespace detail {

struct CompiledModel {
  std::size_t num_states = 0;
  std::size_t num_parameters = 0;
  std::vector<Program> rhs;
  struct Entry {
    int row;
    int col;
    Program program;
  };
  std::vector<Entry> jacobian;
  std::vector<Entry> grad;
  std::vector<Program> rates;
};

inline std::unordered_map<std::string, int> slot_map(const SymbolTable& table) {
  std::unordered_map<std::string, int> slots;
  int k = 0;
  for (const auto& s : table.states()) slots[s] = k++;
  for (const auto& p : table.parameters()) slots[p] = k++;
  slots[SymbolTable::kTime] = k;
  return slots;
}

}  // namespace detail

/// A compiled ODE system: symbolic rhs, Jacobian, and parameter gradient in
/// declaration order, plus mutable parameter values and initial condition.
class OdeModel {
 public:
  /// Assembles a model. Each list only accepts transitions of its kind:
  /// `transitions` takes T, `odes` takes ODE, `birth_death` takes B and D.
  static OdeModel build(const SymbolTable& table, const std::vector<Transition>& transitions,
                        const std::vector<Transition>& odes = {}, const std::vector<Transition>& birth_death = {}) {
    if (table.num_states() == 0) throw ModelError("model has no states");
    if (transitions.empty() && odes.empty() && birth_death.empty()) throw ModelError("model has no dynamics");
    OdeModel m;
    m.table_ = table;
    m.transitions_ = transitions;
    m.odes_ = odes;
    m.birth_death_ = birth_death;
    m.parameter_values_.assign(table.num_parameters(), std::nullopt);
    m.assemble();
    return m;
  }

  const SymbolTable& symbols() const { return table_; }
  const std::vector<std::string>& states() const { return table_.states(); }
  const std::vector<std::string>& parameters() const { return table_.parameters(); }
  std::size_t num_states() const { return table_.num_states(); }
  std::size_t num_parameters() const { return table_.num_parameters(); }

  const std::vector<Transition>& transitions() const { return transitions_; }
  const std::vector<Transition>& odes() const { return odes_; }
  const std::vector<Transition>& birth_death() const { return birth_death_; }

  const std::vector<Expr>& ode_equations() const { return rhs_; }
  const ExprMatrix& jacobian_equations() const { return jacobian_; }
  const ExprMatrix& grad_equations() const { return grad_; }

  /// Transition-form models (no ODE-kind terms) can be simulated as jump processes.
  bool is_transition_form() const { return odes_.empty(); }
  const std::vector<Channel>& channels() const { return channels_; }

  Eigen::MatrixXi stoichiometry() const {
    Eigen::MatrixXi s = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(num_states()),
                                              static_cast<Eigen::Index>(channels_.size()));
    for (std::size_t j = 0; j < channels_.size(); ++j) {
      for (std::size_t i = 0; i < num_states(); ++i) {
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = channels_[j].change[i];
      }
    }
    return s;
  }

  bool is_time_dependent() const {
    return std::any_of(rhs_.begin(), rhs_.end(), [](const Expr& e) { return depends_on(e, SymbolTable::kTime); });
  }

  /// True iff every second partial derivative of the rhs in the states is identically zero.
  bool is_linear() const {
    for (const auto& row : jacobian_) {
      for (const auto& entry : row) {
        for (const auto& s : states()) {
          if (!is_identically_zero(differentiate(entry, s))) return false;
        }
      }
    }
    return true;
  }

  // --- bindings -------------------------------------------------------------

  void set_parameters(const std::map<std::string, double>& values) {
    for (const auto& [name, v] : values) {
      const int k = table_.parameter_index(name);
      if (k < 0) throw UnknownSymbolError(name);
      parameter_values_[static_cast<std::size_t>(k)] = v;
    }
  }

  bool has_parameter_values() const {
    return std::all_of(parameter_values_.begin(), parameter_values_.end(), [](const auto& v) { return v.has_value(); });
  }

  std::optional<double> parameter_value(const std::string& name) const {
    const int k = table_.parameter_index(name);
    if (k < 0) throw UnknownSymbolError(name);
    return parameter_values_[static_cast<std::size_t>(k)];
  }

  /// Parameter values in declaration order; throws when any is unset.
  std::vector<double> parameter_vector() const {
    std::vector<double> out;
    for (std::size_t k = 0; k < parameter_values_.size(); ++k) {
      if (!parameter_values_[k]) throw ModelError("parameter '" + parameters()[k] + "' has no value");
      out.push_back(*parameter_values_[k]);
    }
    return out;
  }

  std::map<std::string, double> parameter_map() const {
    std::map<std::string, double> out;
    for (std::size_t k = 0; k < parameter_values_.size(); ++k) {
      if (parameter_values_[k]) out[parameters()[k]] = *parameter_values_[k];
    }
    return out;
  }

  void set_initial_values(std::vector<double> state, double t0) {
    if (state.size() != num_states()) {
      throw ModelError("initial state has " + std::to_string(state.size()) + " entries, model has " +
                       std::to_string(num_states()) + " states");
    }
    initial_state_ = std::move(state);
    initial_time_ = t0;
  }
  bool has_initial_values() const { return initial_state_.has_value(); }
  const std::vector<double>& initial_state() const {
    if (!initial_state_) throw ModelError("initial values are not set");
    return *initial_state_;
  }
  double initial_time() const { return initial_time_; }

  std::shared_ptr<const detail::CompiledModel> compiled() const { return compiled_; }

  /// One `state' = expression` line per state.
  std::string print_ode(bool latex = false) const {
    std::string out;
    for (std::size_t i = 0; i < num_states(); ++i) {
      if (latex) {
        out += "\\frac{d" + detail::latex_symbol(states()[i]) + "}{dt} &= " + to_latex(rhs_[i]) + " \\\\\n";
      } else {
        out += states()[i] + "' = " + to_string(rhs_[i]) + "\n";
      }
    }
    return out;
  }

 private:
  OdeModel() = default;

  Expr parse_equation(const Transition& tr) const { return parse(tr.equation, table_); }

  std::size_t require_state(const std::string& name) const {
    const int i = table_.state_index(name);
    if (i < 0) throw ModelError("transition refers to unknown state '" + name + "'");
    return static_cast<std::size_t>(i);
  }

  void assemble() {
    const std::size_t n = num_states();
    std::vector<std::vector<Expr>> contributions(n);
    std::vector<bool> has_ode(n, false);

    auto fail_type = [](const Transition& tr, const char* list) {
      throw ModelError(std::string("wrongly typed transition in argument list: ") + to_string(tr.type) +
                       " transition given to the " + list + " list");
    };

    for (const auto& tr : transitions_) {
      if (tr.type != TransitionType::T) fail_type(tr, "transition");
      if (tr.origin.empty() || tr.destination.empty()) {
        throw ModelError("a T transition needs both an origin and a destination");
      }
      for (const auto& o : tr.origin) {
        if (std::find(tr.destination.begin(), tr.destination.end(), o) != tr.destination.end()) {
          throw ModelError("transition origin and destination overlap on '" + o + "'");
        }
      }
      Expr rate = parse_equation(tr);
      Channel ch{rate, std::vector<int>(n, 0), join(tr.origin) + "->" + join(tr.destination)};
      for (const auto& o : tr.origin) ch.change[require_state(o)] -= 1;
      for (const auto& d : tr.destination) ch.change[require_state(d)] += 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (ch.change[i] != 0) contributions[i].push_back(make_product({Expr(ch.change[i]), rate}));
      }
      channels_.push_back(std::move(ch));
    }
    for (const auto& tr : odes_) {
      if (tr.type != TransitionType::ODE) fail_type(tr, "ode");
      if (tr.origin.size() != 1 || !tr.destination.empty()) {
        throw ModelError("an ODE equation applies to exactly one state and has no destination");
      }
      const std::size_t i = require_state(tr.origin.front());
      if (has_ode[i]) throw ModelError("duplicate ODE equation for state '" + tr.origin.front() + "'");
      has_ode[i] = true;
      contributions[i].push_back(parse_equation(tr));
    }
    for (const auto& tr : birth_death_) {
      if (tr.type != TransitionType::B && tr.type != TransitionType::D) fail_type(tr, "birth_death");
      if (tr.origin.size() != 1 || !tr.destination.empty()) {
        throw ModelError("birth and death processes act on exactly one state and have no destination");
      }
      const std::size_t i = require_state(tr.origin.front());
      Expr rate = parse_equation(tr);
      const int sign = tr.type == TransitionType::B ? 1 : -1;
      Channel ch{rate, std::vector<int>(n, 0), std::string(to_string(tr.type)) + ":" + tr.origin.front()};
      ch.change[i] = sign;
      contributions[i].push_back(sign > 0 ? rate : -rate);
      channels_.push_back(std::move(ch));
    }
    if (!odes_.empty()) channels_.clear();

    rhs_.clear();
    for (auto& c : contributions) rhs_.push_back(make_sum(std::move(c)));

    jacobian_.assign(n, {});
    grad_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& s : states()) jacobian_[i].push_back(simplify(differentiate(rhs_[i], s)));
      for (const auto& p : parameters()) grad_[i].push_back(simplify(differentiate(rhs_[i], p)));
    }
    compile();
  }

  void compile() {
    auto slots = detail::slot_map(table_);
    auto c = std::make_shared<detail::CompiledModel>();
    c->num_states = num_states();
    c->num_parameters = num_parameters();
    for (const auto& e : rhs_) c->rhs.emplace_back(e, slots);
    for (std::size_t i = 0; i < num_states(); ++i) {
      for (std::size_t j = 0; j < num_states(); ++j) {
        if (!jacobian_[i][j].is_zero()) {
          c->jacobian.push_back({static_cast<int>(i), static_cast<int>(j), Program(jacobian_[i][j], slots)});
        }
      }
      for (std::size_t k = 0; k < num_parameters(); ++k) {
        if (!grad_[i][k].is_zero()) {
          c->grad.push_back({static_cast<int>(i), static_cast<int>(k), Program(grad_[i][k], slots)});
        }
      }
    }
    for (const auto& ch : channels_) c->rates.emplace_back(ch.rate, slots);
    compiled_ = std::move(c);
  }

  static std::string join(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
    return out;
  }

  SymbolTable table_;
  std::vector<Transition> transitions_;
  std::vector<Transition> odes_;
  std::vector<Transition> birth_death_;
  std::vector<Expr> rhs_;
  ExprMatrix jacobian_;
  ExprMatrix grad_;
  std::vector<Channel> channels_;
  std::vector<std::optional<double>> parameter_values_;
  std::optional<std::vector<double>> initial_state_;
  double initial_time_ = 0.0;
  std::shared_ptr<const detail::CompiledModel> compiled_;
};

/// Numeric evaluation of a model's compiled programs at a fixed parameter
/// vector. Holds scratch space, so each thread uses its own instance.
class ModelEvaluator {
 public:
  ModelEvaluator(const OdeModel& model, std::span<const double> parameters)
      : compiled_(model.compiled()),
        n_(model.num_states()),
        slots_(model.num_states() + model.num_parameters() + 1, 0.0) {
    set_parameters(parameters);
  }

  explicit ModelEvaluator(const OdeModel& model) : ModelEvaluator(model, model.parameter_vector()) {}

  void set_parameters(std::span<const double> parameters) {
    if (parameters.size() != compiled_->num_parameters) {
      throw ModelError("expected " + std::to_string(compiled_->num_parameters) + " parameter values, got " +
                       std::to_string(parameters.size()));
    }
    std::copy(parameters.begin(), parameters.end(), slots_.begin() + static_cast<std::ptrdiff_t>(n_));
  }

  std::size_t num_states() const { return n_; }
  std::size_t num_parameters() const { return compiled_->num_parameters; }

  void rhs(double t, const double* x, double* out) {
    load(t, x);
    for (std::size_t i = 0; i < n_; ++i) out[i] = compiled_->rhs[i].eval(slots_);
  }

  Eigen::VectorXd rhs(double t, const Eigen::VectorXd& x) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(n_));
    rhs(t, x.data(), out.data());
    return out;
  }

  void jacobian(double t, const double* x, Eigen::MatrixXd& out) {
    load(t, x);
    out.setZero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (const auto& e : compiled_->jacobian) out(e.row, e.col) = e.program.eval(slots_);
  }

  /// Full #states x #parameters matrix of d rhs / d parameter.
  void grad(double t, const double* x, Eigen::MatrixXd& out) {
    load(t, x);
    out.setZero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(compiled_->num_parameters));
    for (const auto& e : compiled_->grad) out(e.row, e.col) = e.program.eval(slots_);
  }

  void propensities(double t, const double* x, double* out) {
    load(t, x);
    for (std::size_t j = 0; j < compiled_->rates.size(); ++j) out[j] = compiled_->rates[j].eval(slots_);
  }

 private:
  void load(double t, const double* x) {
    std::copy(x, x + n_, slots_.begin());
    slots_.back() = t;
  }

  std::shared_ptr<const detail::CompiledModel> compiled_;
  std::size_t n_;
  std::vector<double> slots_;
};

/// Adds birth/death processes (and the parameters they need) to a model,
/// keeping existing bindings.
inline OdeModel add_birth_death(const OdeModel& m, const std::vector<std::string>& new_parameters,
                                const std::vector<Transition>& processes) {
  SymbolTable table = m.symbols().with_parameters(new_parameters);
  std::vector<Transition> bd = m.birth_death();
  bd.insert(bd.end(), processes.begin(), processes.end());
  OdeModel out = OdeModel::build(table, m.transitions(), m.odes(), bd);
  out.set_parameters(m.parameter_map());
  if (m.has_initial_values()) out.set_initial_values(m.initial_state(), m.initial_time());
  return out;
}

/// Rebuilds a model as explicit ODE equations (one per state) from its rhs.
inline OdeModel to_explicit_odes(const OdeModel& m) {
  std::vector<Transition> odes;
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    odes.emplace_back(m.states()[i], to_string(m.ode_equations()[i]), TransitionType::ODE);
  }
  OdeModel out = OdeModel::build(m.symbols(), {}, odes, {});
  out.set_parameters(m.parameter_map());
  if (m.has_initial_values()) out.set_initial_values(m.initial_state(), m.initial_time());
  return out;
}

/// Decomposes the rhs into transitions between states and birth/death
/// processes. A negative term in state i that matches a positive term in
/// exactly one other state j becomes a transition i->j; leftovers become
/// births (positive) or deaths (negative). A term matching several
/// candidates is reported as ambiguous rather than guessed.
inline OdeModel unroll(const OdeModel& m) {
  const std::size_t n = m.num_states();
  struct Term {
    std::string key;
    Expr monomial;
    bool used = false;
  };
  std::vector<std::vector<Term>> positive(n);
  std::vector<std::vector<Term>> negative(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& term : expand_to_terms(m.ode_equations()[i])) {
      Term t{to_string(term.monomial), term.monomial, false};
      (term.sign > 0 ? positive[i] : negative[i]).push_back(std::move(t));
    }
  }

  // match negative terms to positive terms in other states
  struct Match {
    std::size_t from;
    std::size_t neg_index;
    std::size_t to;
    std::size_t pos_index;
  };
  std::vector<Match> matches;
  std::map<std::pair<std::size_t, std::size_t>, int> claims;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < negative[i].size(); ++a) {
      std::vector<Match> candidates;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        for (std::size_t b = 0; b < positive[j].size(); ++b) {
          if (positive[j][b].key == negative[i][a].key) candidates.push_back({i, a, j, b});
        }
      }
      if (candidates.size() > 1) {
        std::string names;
        for (const auto& c : candidates) names += (names.empty() ? "" : ", ") + m.states()[c.to];
        throw ModelError("ambiguous transition: term " + negative[i][a].key + " leaving '" + m.states()[i] +
                         "' matches terms in states " + names);
      }
      if (candidates.size() == 1) {
        matches.push_back(candidates.front());
        claims[{candidates.front().to, candidates.front().pos_index}] += 1;
      }
    }
  }
  for (const auto& [target, count] : claims) {
    if (count > 1) {
      throw ModelError("ambiguous transition: term " + positive[target.first][target.second].key + " entering '" +
                       m.states()[target.first] + "' is matched by several outgoing terms");
    }
  }

  std::vector<Transition> transitions;
  std::vector<Transition> birth_death;
  for (const auto& mt : matches) {
    negative[mt.from][mt.neg_index].used = true;
    positive[mt.to][mt.pos_index].used = true;
    transitions.emplace_back(m.states()[mt.from], negative[mt.from][mt.neg_index].key, TransitionType::T,
                             m.states()[mt.to]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& t : positive[i]) {
      if (!t.used) birth_death.emplace_back(m.states()[i], t.key, TransitionType::B);
    }
    for (const auto& t : negative[i]) {
      if (!t.used) birth_death.emplace_back(m.states()[i], t.key, TransitionType::D);
    }
  }
  if (transitions.empty() && birth_death.empty()) {
    // x' = 0 everywhere: keep a structurally empty model by emitting a zero-rate death
    birth_death.emplace_back(m.states().front(), "0", TransitionType::D);
  }
  OdeModel out = OdeModel::build(m.symbols(), transitions, {}, birth_death);
  out.set_parameters(m.parameter_map());
  if (m.has_initial_values()) out.set_initial_values(m.initial_state(), m.initial_time());
  return out;
}

}  // namespace odekit
