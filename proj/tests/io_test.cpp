#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "odekit/common_models.hpp"
#include "odekit/integrator.hpp"
#include "odekit/io.hpp"

using namespace odekit;

namespace {

void expect_same_model(const OdeModel& a, const OdeModel& b) {
  ASSERT_EQ(a.states(), b.states());
  ASSERT_EQ(a.parameters(), b.parameters());
  for (std::size_t i = 0; i < a.num_states(); ++i) {
    EXPECT_TRUE(canonical_equal(a.ode_equations()[i], b.ode_equations()[i]))
        << a.states()[i] << ": " << to_string(a.ode_equations()[i]) << " vs " << to_string(b.ode_equations()[i]);
  }
  EXPECT_EQ(a.transitions().size(), b.transitions().size());
  EXPECT_EQ(a.odes().size(), b.odes().size());
  EXPECT_EQ(a.birth_death().size(), b.birth_death().size());
  EXPECT_EQ(a.parameter_map(), b.parameter_map());
  ASSERT_EQ(a.has_initial_values(), b.has_initial_values());
  if (a.has_initial_values()) {
    EXPECT_EQ(a.initial_state(), b.initial_state());
    EXPECT_EQ(a.initial_time(), b.initial_time());
  }
}

std::string schema_message(const std::string& text) {
  try {
    parse_model_file(text, "m.json");
  } catch (const SchemaError& e) {
    return e.what();
  }
  return "<no error>";
}

std::filesystem::path models_dir() { return std::filesystem::path(ODEKIT_SOURCE_DIR) / "models"; }

// Random model documents. Some records are deliberately broken so both the
// accepting and the rejecting side of the loader get exercised.
struct RandomModel {
  json doc;
  SymbolTable table;
  std::vector<Transition> t, ode, bd;
};

RandomModel random_model(std::mt19937_64& rng, bool allow_invalid) {
  std::uniform_int_distribution<int> n_states(1, 4), n_params(1, 3), n_tr(1, 5), kind(0, 3), coin(0, 9);
  RandomModel r;
  std::vector<std::string> states, params;
  const int ns = n_states(rng), np = n_params(rng);
  for (int i = 0; i < ns; ++i) states.push_back("x" + std::to_string(i));
  for (int i = 0; i < np; ++i) params.push_back("k" + std::to_string(i));
  r.table = SymbolTable(states, params);
  std::uniform_int_distribution<int> pick_s(0, ns - 1), pick_p(0, np - 1);
  r.doc = {{"states", states}, {"parameters", params}, {"transitions", json::array()}};
  const int m = n_tr(rng);
  for (int i = 0; i < m; ++i) {
    int kd = kind(rng);
    std::string origin = states[static_cast<std::size_t>(pick_s(rng))];
    std::string dest = states[static_cast<std::size_t>(pick_s(rng))];
    std::string eq = params[static_cast<std::size_t>(pick_p(rng))] + "*" + origin;
    if (allow_invalid && coin(rng) == 0) eq += "*undeclared";
    if (kd == 0 && ns < 2) kd = 2;
    Transition tr;
    json rec{{"origin", origin}, {"equation", eq}};
    switch (kd) {
      case 0:
        // origin == dest survives only when invalid cases are allowed
        if (!allow_invalid) {
          while (dest == origin) dest = states[static_cast<std::size_t>(pick_s(rng))];
        }
        tr = Transition(origin, eq, TransitionType::T, dest);
        rec["destination"] = dest;
        rec["type"] = "T";
        r.t.push_back(tr);
        break;
      case 1:
        // at most one ODE per state unless invalid cases are allowed
        if (!allow_invalid &&
            std::any_of(r.ode.begin(), r.ode.end(), [&](const Transition& o) { return o.origin.front() == origin; })) {
          continue;
        }
        r.ode.emplace_back(origin, eq, TransitionType::ODE);
        rec["type"] = "ODE";
        break;
      default:
        r.bd.emplace_back(origin, eq, kd == 2 ? TransitionType::B : TransitionType::D);
        rec["type"] = kd == 2 ? "B" : "D";
    }
    r.doc["transitions"].push_back(rec);
  }
  if (r.doc["transitions"].empty()) {
    r.doc["transitions"].push_back({{"origin", states[0]}, {"equation", params[0]}, {"type", "B"}});
    r.bd.emplace_back(states[0], params[0], TransitionType::B);
  }
  return r;
}

}  // namespace

TEST(ModelFile, SirFileBuildsTheCountSir) {
  const ModelFile f = load_model_file((models_dir() / "sir.json").string());
  const OdeModel ref = models::sir_n();
  ASSERT_EQ(f.model.states(), ref.states());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(canonical_equal(f.model.ode_equations()[i], ref.ode_equations()[i]));
  EXPECT_EQ(*f.model.parameter_value("N"), 7781984.0);
  EXPECT_EQ(f.model.initial_state()[1], 123 * (5.0 / 30.0));
  ASSERT_EQ(f.distributions.size(), 2u);
  EXPECT_DOUBLE_EQ(f.distributions.at("beta").mean(), 3.6);
  EXPECT_DOUBLE_EQ(f.distributions.at("gamma").mean(), 0.2);
}

TEST(ModelFile, TemplatedStatesExpandBaseMajor) {
  const ModelFile f = load_model_file((models_dir() / "sis_vector_host.json").string());
  EXPECT_EQ(f.model.states(), (std::vector<std::string>{"S_v", "S_h", "I_v", "I_h"}));
  expect_same_model(f.model, models::sis_vector_host());

  const ModelFile g = parse_model_file(R"j({
    "states": {"bases": ["S", "I"], "types": ["1", "2", "3"]},
    "parameters": {"bases": ["beta"], "types": ["1", "2", "3"]},
    "transitions": [{"origin": "S_1", "destination": "I_1", "equation": "beta_1*S_1*(I_1+I_2+I_3)", "type": "T"}]
  })j");
  EXPECT_EQ(g.model.states(), (std::vector<std::string>{"S_1", "S_2", "S_3", "I_1", "I_2", "I_3"}));
  EXPECT_EQ(g.model.parameters(), (std::vector<std::string>{"beta_1", "beta_2", "beta_3"}));
}

TEST(ModelFile, BundledModelsAgreeWithCatalog) {
  expect_same_model(load_model((models_dir() / "sir_proportion.json").string()),
                    [] {
                      OdeModel m = models::sir({{"beta", 0.5}, {"gamma", 1.0 / 3.0}});
                      m.set_initial_values({1.0, 1.27e-6, 0.0}, 0.0);
                      return m;
                    }());
  const OdeModel bd = load_model((models_dir() / "sir_birth_death.json").string());
  const OdeModel ref = models::sir_birth_death();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(canonical_equal(bd.ode_equations()[i], ref.ode_equations()[i]));
  EXPECT_DOUBLE_EQ(*bd.parameter_value("mu"), (126372.0 / 365.0) / 7781984.0);
}

TEST(ModelFile, RoundTripCatalog) {
  for (const auto& t : models::catalog()) {
    OdeModel m = t.build({});
    std::vector<double> x0(m.num_states());
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = 0.1 * static_cast<double>(i + 1) + 1.0 / 3.0;
    m.set_initial_values(x0, 0.25);
    std::map<std::string, double> p;
    for (std::size_t k = 0; k < m.num_parameters(); ++k) p[m.parameters()[k]] = 1.0 / static_cast<double>(k + 7);
    m.set_parameters(p);

    const std::string text = model_to_string(m);
    const ModelFile back = parse_model_file(text);
    expect_same_model(m, back.model);
    // stable: a second pass emits identical bytes
    EXPECT_EQ(model_to_string(back.model), text) << t.name;

    // unrolled form too, where it exists
    try {
      const OdeModel u = unroll(m);
      expect_same_model(u, parse_model_file(model_to_string(u)).model);
    } catch (const ModelError&) {
    }
  }
}

TEST(ModelFile, RoundTripDistributionsAndFile) {
  ModelFile f = load_model_file((models_dir() / "sir.json").string());
  const auto path = std::filesystem::temp_directory_path() / "odekit_io_roundtrip.json";
  save_model(f.model, path.string(), f.distributions);
  const ModelFile g = load_model_file(path.string());
  expect_same_model(f.model, g.model);
  ASSERT_EQ(g.distributions.size(), 2u);
  for (const auto& [name, d] : f.distributions) {
    EXPECT_EQ(g.distributions.at(name).name(), d.name());
    EXPECT_EQ(g.distributions.at(name).arguments(), d.arguments());
  }
  std::filesystem::remove(path);
}

TEST(ModelFile, LoaderAcceptsExactlyWhatBuildAccepts) {
  std::mt19937_64 rng(99);
  int accepted = 0, rejected = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const RandomModel r = random_model(rng, rep % 2 == 1);
    bool direct_ok = true;
    std::optional<OdeModel> direct;
    try {
      direct = OdeModel::build(r.table, r.t, r.ode, r.bd);
    } catch (const Error&) {
      direct_ok = false;
    }
    bool file_ok = true;
    std::optional<ModelFile> loaded;
    try {
      loaded = model_from_json(r.doc);
    } catch (const Error&) {
      file_ok = false;
    }
    ASSERT_EQ(direct_ok, file_ok) << r.doc.dump();
    if (direct_ok) {
      ++accepted;
      expect_same_model(*direct, loaded->model);
      expect_same_model(*direct, parse_model_file(model_to_string(*direct)).model);
    } else {
      ++rejected;
    }
  }
  EXPECT_GT(accepted, 100);
  EXPECT_GT(rejected, 20);
}

TEST(ModelFile, SchemaErrorsNameTheField) {
  EXPECT_NE(schema_message(R"({"states": [], "transitions": []})").find("/states"), std::string::npos);
  EXPECT_NE(schema_message(R"({"transitions": []})").find("missing required field 'states'"), std::string::npos);

  const std::string base = R"({"states": ["S", "I"], "parameters": ["b"], "transitions": [)";
  auto with = [&](const std::string& records, const std::string& extra = "") {
    return schema_message(base + records + "]" + extra + "}");
  };
  EXPECT_NE(with(R"({"origin": "S", "destination": "Q", "equation": "b*S", "type": "T"})")
                .find("/transitions/0/destination: unknown state 'Q'"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "destination": "I", "equation": "b*S", "type": "T"},
                    {"origin": "I", "equation": "b*(I", "type": "D"})")
                .find("/transitions/1/equation"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b*S*z", "type": "D"})").find("unknown symbol 'z'"), std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "X"})").find("/transitions/0/type"), std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "T"})").find("needs a destination"), std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "destination": "I", "equation": "b", "type": "B"})")
                .find("/transitions/0/destination"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "B", "rate": 1})").find("/transitions/0/rate: unknown field"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "B"})", R"(, "parameter_values": {"c": 1})")
                .find("/parameter_values/c: unknown parameter"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "B"})", R"(, "parameter_values": {"b": "x"})")
                .find("/parameter_values/b: expected a number"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "B"})", R"(, "initial_condition": {"values": [1]})")
                .find("/initial_condition/values: expected 2 values"),
            std::string::npos);
  EXPECT_NE(with(R"({"origin": "S", "equation": "b", "type": "B"})",
                 R"(, "parameter_distributions": {"b": {"distribution": "gamma", "shape": -1}})")
                .find("/parameter_distributions/b"),
            std::string::npos);
  EXPECT_NE(schema_message(R"({"states": ["S", "S"], "transitions": []})").find("duplicate name 'S'"), std::string::npos);
  EXPECT_NE(schema_message(R"({"states": ["S"], "parameters": ["S"], "transitions": []})").find("/parameters"),
            std::string::npos);

  // malformed JSON reports a line
  const std::string msg = schema_message("{\n  \"states\": [\"S\"],\n  \"transitions\": [,]\n}");
  EXPECT_NE(msg.find("m.json: line 3"), std::string::npos) << msg;
}

TEST(ModelFile, InitialValuesByName) {
  const ModelFile f = parse_model_file(R"({
    "states": ["S", "I", "R"], "parameters": ["b"],
    "transitions": [{"origin": "S", "destination": "I", "equation": "b*S*I", "type": "T"}],
    "initial_condition": {"values": {"I": 2, "S": 5}, "t0": 1.5}
  })");
  EXPECT_EQ(f.model.initial_state(), (std::vector<double>{5, 2, 0}));
  EXPECT_EQ(f.model.initial_time(), 1.5);
}

TEST(Csv, TableFormatAndRoundTrip) {
  Eigen::MatrixXd v(2, 2);
  v << 0.1, 1.0 / 3.0, 1e300, -2.5e-310;
  const std::string text = table_csv({"A", "B"}, {0.0, 0.5}, v);
  EXPECT_EQ(text,
            "t,A,B\n"
            "0,0.10000000000000001,0.33333333333333331\n"
            "0.5,1.0000000000000001e+300,-2.5000000000000171e-310\n");
  const Observations obs = parse_observations(text);
  EXPECT_EQ(obs.states, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(obs.t, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(obs.y, v);  // bitwise
  EXPECT_THROW(table_csv({"A"}, {0.0, 0.5}, v), SchemaError);
}

TEST(Csv, RandomValuesRoundTripExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> ex(-300, 300);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd v(7, 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::ldexp(mant(rng), ex(rng));
    std::vector<double> t(7);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * 0.1;
    const Observations obs = parse_observations(table_csv({"a", "b", "c"}, t, v));
    EXPECT_EQ(obs.y, v);
    EXPECT_EQ(obs.t, t);
  }
}

TEST(Csv, ObservationErrors) {
  auto message = [](const std::string& text) {
    try {
      parse_observations(text, "obs.csv");
    } catch (const SchemaError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  EXPECT_NE(message("").find("empty file"), std::string::npos);
  EXPECT_NE(message("time,R\n1,2\n").find("line 1: header must start with 't'"), std::string::npos);
  EXPECT_NE(message("t\n1\n").find("names no states"), std::string::npos);
  EXPECT_NE(message("t,R\n1,2\n2,3,4\n").find("line 3: expected 2 fields"), std::string::npos);
  EXPECT_NE(message("t,R\n1,2\n2,abc\n").find("line 3: field 2 'abc'"), std::string::npos);
  EXPECT_NE(message("t,R\n1,2\n1,3\n").find("line 3: times must be strictly increasing"), std::string::npos);
  EXPECT_NE(message("t,R\n1,nan\n").find("not a finite number"), std::string::npos);
  EXPECT_NE(message("t,R\n").find("no observation rows"), std::string::npos);
  // CRLF and blank lines are tolerated
  const Observations obs = parse_observations("t, R\r\n\r\n1, 2\r\n3,4\r\n");
  EXPECT_EQ(obs.states, std::vector<std::string>{"R"});
  EXPECT_EQ(obs.y(1, 0), 4.0);
}
