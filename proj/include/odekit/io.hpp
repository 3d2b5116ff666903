#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "odekit/confidence.hpp"
#include "odekit/error.hpp"
#include "odekit/estimation.hpp"
#include "odekit/model.hpp"
#include "odekit/random.hpp"

namespace odekit {

using json = nlohmann::ordered_json;

/// A model plus the parts of a model file that OdeModel does not hold.
struct ModelFile {
  OdeModel model;
  std::map<std::string, Distribution> distributions;
};

namespace detail {

inline std::string pointer_child(const std::string& at, const std::string& key) {
  std::string escaped;
  for (char c : key) {
    if (c == '~') escaped += "~0";
    else if (c == '/') escaped += "~1";
    else escaped += c;
  }
  return at + "/" + escaped;
}
inline std::string pointer_child(const std::string& at, std::size_t index) { return at + "/" + std::to_string(index); }

[[noreturn]] inline void schema_fail(const std::string& at, const std::string& what) {
  throw SchemaError((at.empty() ? std::string("/") : at) + ": " + what);
}

inline const json& require(const json& obj, const std::string& at, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(at, std::string("missing required field '") + key + "'");
  return *it;
}

inline std::string expect_string(const json& v, const std::string& at) {
  if (!v.is_string()) schema_fail(at, "expected a string");
  return v.get<std::string>();
}

inline double expect_number(const json& v, const std::string& at) {
  if (!v.is_number()) schema_fail(at, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) schema_fail(at, "number is not finite");
  return x;
}

/// A plain list of names, or {"bases": [...], "types": [...]} expanded
/// base-major into base_type.
inline std::vector<std::string> name_list(const json& v, const std::string& at) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(expect_string(v[i], pointer_child(at, i)));
  } else if (v.is_object()) {
    for (const auto& [key, _] : v.items()) {
      if (key != "bases" && key != "types") schema_fail(pointer_child(at, key), "unknown field");
    }
    const json& bases = require(v, at, "bases");
    const json& types = require(v, at, "types");
    if (!bases.is_array()) schema_fail(at + "/bases", "expected an array");
    if (!types.is_array() || types.empty()) schema_fail(at + "/types", "expected a non-empty array");
    for (std::size_t i = 0; i < bases.size(); ++i) {
      const std::string b = expect_string(bases[i], pointer_child(at + "/bases", i));
      for (std::size_t j = 0; j < types.size(); ++j) {
        out.push_back(b + "_" + expect_string(types[j], pointer_child(at + "/types", j)));
      }
    }
  } else {
    schema_fail(at, "expected an array of names or a {bases, types} template");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!SymbolTable::valid_name(out[i])) schema_fail(at, "'" + out[i] + "' is not a valid name");
    for (std::size_t j = 0; j < i; ++j) {
      if (out[i] == out[j]) schema_fail(at, "duplicate name '" + out[i] + "'");
    }
  }
  return out;
}

inline std::vector<std::string> state_refs(const json& v, const std::string& at, const SymbolTable& table) {
  std::vector<std::string> out;
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array() && !v.empty()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(expect_string(v[i], pointer_child(at, i)));
  } else {
    schema_fail(at, "expected a state name or a non-empty array of state names");
  }
  for (const auto& s : out) {
    if (!table.is_state(s)) schema_fail(at, "unknown state '" + s + "'");
  }
  return out;
}

inline json refs_to_json(const std::vector<std::string>& names) {
  if (names.size() == 1) return names.front();
  return names;
}

inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError(path + ": cannot write file");
  out << content;
  if (!out) throw SchemaError(path + ": write failed");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// model files

inline ModelFile model_from_json(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) schema_fail("", "expected an object");
  static const char* known[] = {"name", "states", "parameters", "transitions", "parameter_values",
                                "initial_condition", "parameter_distributions"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
      schema_fail(pointer_child("", key), "unknown field");
    }
  }

  const auto states = name_list(require(doc, "", "states"), "/states");
  if (states.empty()) schema_fail("/states", "at least one state is required");
  std::vector<std::string> params;
  if (doc.contains("parameters")) params = name_list(doc["parameters"], "/parameters");
  SymbolTable table = [&] {
    try {
      return SymbolTable(states, params);
    } catch (const Error& e) {
      schema_fail("/parameters", e.what());
    }
  }();

  const json& trs = require(doc, "", "transitions");
  if (!trs.is_array() || trs.empty()) schema_fail("/transitions", "expected a non-empty array");
  std::vector<Transition> t_list, ode_list, bd_list;
  for (std::size_t i = 0; i < trs.size(); ++i) {
    const std::string at = pointer_child("/transitions", i);
    const json& rec = trs[i];
    if (!rec.is_object()) schema_fail(at, "expected an object");
    for (const auto& [key, _] : rec.items()) {
      if (key != "origin" && key != "destination" && key != "equation" && key != "type") {
        schema_fail(pointer_child(at, key), "unknown field");
      }
    }
    Transition tr;
    try {
      tr.type = parse_transition_type(expect_string(require(rec, at, "type"), at + "/type"));
    } catch (const ModelError& e) {
      schema_fail(at + "/type", e.what());
    }
    tr.origin = state_refs(require(rec, at, "origin"), at + "/origin", table);
    if (rec.contains("destination")) {
      if (tr.type != TransitionType::T) schema_fail(at + "/destination", "only T transitions have a destination");
      tr.destination = state_refs(rec["destination"], at + "/destination", table);
    } else if (tr.type == TransitionType::T) {
      schema_fail(at, "T transition needs a destination");
    }
    if (tr.type != TransitionType::T && tr.origin.size() != 1) {
      schema_fail(at + "/origin", std::string(to_string(tr.type)) + " transition acts on exactly one state");
    }
    tr.equation = expect_string(require(rec, at, "equation"), at + "/equation");
    try {
      parse(tr.equation, table);
    } catch (const Error& e) {
      schema_fail(at + "/equation", e.kind() + ": " + e.what());
    }
    (tr.type == TransitionType::T ? t_list : tr.type == TransitionType::ODE ? ode_list : bd_list).push_back(tr);
  }

  ModelFile out{OdeModel::build(table, t_list, ode_list, bd_list), {}};

  if (doc.contains("parameter_values")) {
    const json& pv = doc["parameter_values"];
    if (!pv.is_object()) schema_fail("/parameter_values", "expected an object");
    std::map<std::string, double> values;
    for (const auto& [key, v] : pv.items()) {
      const std::string at = pointer_child("/parameter_values", key);
      if (!table.is_parameter(key)) schema_fail(at, "unknown parameter");
      values[key] = expect_number(v, at);
    }
    out.model.set_parameters(values);
  }

  if (doc.contains("initial_condition")) {
    const json& ic = doc["initial_condition"];
    if (!ic.is_object()) schema_fail("/initial_condition", "expected an object");
    for (const auto& [key, _] : ic.items()) {
      if (key != "values" && key != "t0") schema_fail(pointer_child("/initial_condition", key), "unknown field");
    }
    const json& vals = require(ic, "/initial_condition", "values");
    std::vector<double> x0(states.size(), 0.0);
    if (vals.is_array()) {
      if (vals.size() != states.size()) {
        schema_fail("/initial_condition/values", "expected " + std::to_string(states.size()) + " values");
      }
      for (std::size_t i = 0; i < vals.size(); ++i) {
        x0[i] = expect_number(vals[i], pointer_child("/initial_condition/values", i));
      }
    } else if (vals.is_object()) {
      // by name; states not listed start at zero
      for (const auto& [key, v] : vals.items()) {
        const std::string at = pointer_child("/initial_condition/values", key);
        const int k = table.state_index(key);
        if (k < 0) schema_fail(at, "unknown state");
        x0[static_cast<std::size_t>(k)] = expect_number(v, at);
      }
    } else {
      schema_fail("/initial_condition/values", "expected an array or an object keyed by state");
    }
    double t0 = 0.0;
    if (ic.contains("t0")) t0 = expect_number(ic["t0"], "/initial_condition/t0");
    out.model.set_initial_values(x0, t0);
  }

  if (doc.contains("parameter_distributions")) {
    const json& pd = doc["parameter_distributions"];
    if (!pd.is_object()) schema_fail("/parameter_distributions", "expected an object");
    for (const auto& [key, spec] : pd.items()) {
      const std::string at = pointer_child("/parameter_distributions", key);
      if (!table.is_parameter(key)) schema_fail(at, "unknown parameter");
      if (!spec.is_object()) schema_fail(at, "expected an object");
      const std::string family = expect_string(require(spec, at, "distribution"), at + "/distribution");
      std::map<std::string, double> args;
      for (const auto& [akey, av] : spec.items()) {
        if (akey == "distribution") continue;
        args[akey] = expect_number(av, pointer_child(at, akey));
      }
      try {
        out.distributions.emplace(key, Distribution::from_name(family, args));
      } catch (const DomainError& e) {
        schema_fail(at, e.what());
      }
    }
  }
  return out;
}

inline ModelFile parse_model_file(const std::string& text, const std::string& source = "<input>") {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(source + ": " + detail::line_column(text, e.byte) + ": malformed JSON");
  }
  try {
    return model_from_json(doc);
  } catch (const SchemaError& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

inline ModelFile load_model_file(const std::string& path) { return parse_model_file(detail::read_file(path), path); }

inline OdeModel load_model(const std::string& path) { return load_model_file(path).model; }

inline json model_to_json(const OdeModel& m, const std::map<std::string, Distribution>& distributions = {}) {
  json doc;
  doc["states"] = m.states();
  doc["parameters"] = m.parameters();
  json trs = json::array();
  auto emit = [&](const std::vector<Transition>& list) {
    for (const auto& tr : list) {
      json rec;
      rec["origin"] = detail::refs_to_json(tr.origin);
      if (!tr.destination.empty()) rec["destination"] = detail::refs_to_json(tr.destination);
      rec["equation"] = tr.equation;
      rec["type"] = to_string(tr.type);
      trs.push_back(std::move(rec));
    }
  };
  emit(m.transitions());
  emit(m.odes());
  emit(m.birth_death());
  doc["transitions"] = std::move(trs);
  const auto values = m.parameter_map();
  if (!values.empty()) doc["parameter_values"] = values;
  if (m.has_initial_values()) doc["initial_condition"] = {{"values", m.initial_state()}, {"t0", m.initial_time()}};
  if (!distributions.empty()) {
    json pd = json::object();
    for (const auto& [name, d] : distributions) {
      json spec = d.arguments();
      spec["distribution"] = d.name();
      pd[name] = std::move(spec);
    }
    doc["parameter_distributions"] = std::move(pd);
  }
  return doc;
}

inline std::string model_to_string(const OdeModel& m, const std::map<std::string, Distribution>& distributions = {}) {
  return model_to_json(m, distributions).dump(2) + "\n";
}

inline void save_model(const OdeModel& m, const std::string& path,
                       const std::map<std::string, Distribution>& distributions = {}) {
  detail::write_file(path, model_to_string(m, distributions));
}

// ---------------------------------------------------------------------------
// delimited text

/// Shortest form is not needed; 17 significant digits round-trip a double.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Header `t,<columns>`, then one row per time.
inline std::string table_csv(const std::vector<std::string>& columns, const std::vector<double>& times,
                             const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(times.size()) != values.rows() ||
      static_cast<Eigen::Index>(columns.size()) != values.cols()) {
    throw SchemaError("table shape does not match its header");
  }
  std::string out = "t";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    out += format_number(times[i]);
    for (Eigen::Index j = 0; j < values.cols(); ++j) out += "," + format_number(values(static_cast<Eigen::Index>(i), j));
    out += "\n";
  }
  return out;
}

/// Whole-string decimal parse; subnormals are accepted.
inline bool parse_number(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = first + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && first != last;
}

struct Observations {
  std::vector<double> t;
  std::vector<std::string> states;
  Eigen::MatrixXd y;
};

inline Observations parse_observations(const std::string& text, const std::string& source = "<input>") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) -> void {
    throw SchemaError(source + ": line " + std::to_string(lineno) + ": " + what);
  };
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t\r");
      const auto b = cell.find_last_not_of(" \t\r");
      cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };

  Observations obs;
  std::vector<std::vector<double>> rows;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = split(line);
    if (!header) {
      if (cells.empty() || cells[0] != "t") fail("header must start with 't'");
      if (cells.size() < 2) fail("header names no states");
      obs.states.assign(cells.begin() + 1, cells.end());
      header = true;
      continue;
    }
    if (cells.size() != obs.states.size() + 1) {
      fail("expected " + std::to_string(obs.states.size() + 1) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0;
      if (!parse_number(cells[c], v) || !std::isfinite(v)) {
        fail("field " + std::to_string(c + 1) + " '" + cells[c] + "' is not a finite number");
      }
      row.push_back(v);
    }
    if (!rows.empty() && !(row[0] > rows.back()[0])) fail("times must be strictly increasing");
    rows.push_back(std::move(row));
  }
  if (!header) throw SchemaError(source + ": empty file");
  if (rows.empty()) throw SchemaError(source + ": no observation rows");
  obs.y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(obs.states.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    obs.t.push_back(rows[i][0]);
    for (std::size_t j = 0; j < obs.states.size(); ++j) {
      obs.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j + 1];
    }
  }
  return obs;
}

inline Observations load_observations(const std::string& path) {
  return parse_observations(detail::read_file(path), path);
}

// ---------------------------------------------------------------------------
// result summaries

inline json fit_summary(const FitResult& f, const std::vector<std::string>& names, LossKind loss) {
  json theta = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) theta[names[i]] = f.theta[i];
  return {{"theta", theta},   {"cost", f.cost},         {"converged", f.converged},
          {"iterations", f.iterations}, {"loss", to_string(loss)}, {"message", f.message}};
}

inline json interval_summary(const IntervalResult& r) {
  json params = json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    json p{{"name", r.names[i]}, {"estimate", r.estimate[i]}, {"lower", r.lower[i]}, {"upper", r.upper[i]}};
    if (r.method == CiMethod::Profile) {
      p["lower_open"] = static_cast<bool>(r.lower_open[i]);
      p["upper_open"] = static_cast<bool>(r.upper_open[i]);
    }
    params.push_back(std::move(p));
  }
  json out{{"method", to_string(r.method)}, {"alpha", r.alpha}, {"parameters", params}};
  if (r.method == CiMethod::Asymptotic) out["used_jtj"] = r.used_jtj;
  if (r.method == CiMethod::Bootstrap) {
    out["seed"] = r.seed;
    if (!r.replicates.empty()) out["replicates"] = r.replicates;
  }
  return out;
}

}  // namespace odekit
