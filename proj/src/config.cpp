#include "srec/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace srec {

using nlohmann::json;

namespace {

// Reads keys off one JSON object and rejects anything it did not consume.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  std::string key(const std::string& k) const { return where_.empty() ? k : where_ + "." + k; }

  const json* find(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& k) {
    const json* v = find(k);
    if (!v) throw ConfigError(key(k) + ": missing required key");
    return *v;
  }

  void number(const std::string& k, double& out) {
    if (const json* v = find(k)) out = as_number(*v, key(k));
  }

  void integer(const std::string& k, int& out) {
    if (const json* v = find(k)) out = as_int(*v, key(k));
  }

  void seed(const std::string& k, std::uint64_t& out) {
    if (const json* v = find(k)) out = as_seed(*v, key(k));
  }

  void string(const std::string& k, std::string& out) {
    if (const json* v = find(k)) {
      if (!v->is_string()) throw ConfigError(key(k) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key(it.key()) + ": unknown key");
  }

  static double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where + ": must be finite");
    return x;
  }

  static int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    const auto x = v.get<long long>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(where + ": out of range");
    return static_cast<int>(x);
  }

  static std::uint64_t as_seed(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(where + ": expected a non-negative integer");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

// Library validators throw std::invalid_argument; rethrow as ConfigError.
template <typename F>
void checked(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

ComplianceSpec compliance_from_json(const json& j, const std::string& where) {
  ComplianceSpec c;
  ObjectReader r(j, where);
  r.integer("num_periods", c.num_periods);
  r.integer("steps_per_period", c.steps_per_period);
  r.number("period_length", c.period_length);
  r.number("penalty", c.penalty);
  r.number("requirement", c.requirement);
  if (c.num_periods < 1) throw ConfigError(r.key("num_periods") + ": must be >= 1");
  if (c.steps_per_period < 1) throw ConfigError(r.key("steps_per_period") + ": must be >= 1");
  c.fill_baseline(500.0);
  if (const json* h = r.find("baseline_rate")) {
    if (h->is_array()) {
      c.baseline_rate.clear();
      for (std::size_t i = 0; i < h->size(); ++i)
        c.baseline_rate.push_back(
            ObjectReader::as_number((*h)[i], r.key("baseline_rate") + "[" + std::to_string(i) + "]"));
    } else {
      c.fill_baseline(ObjectReader::as_number(*h, r.key("baseline_rate")));
    }
  }
  r.finish();
  return c;
}

ModelParams model_from_json(const json& j, const std::string& where) {
  ModelParams m;
  ObjectReader r(j, where);
  r.number("mu", m.mu);
  r.number("sigma", m.sigma);
  r.number("nu", m.nu);
  r.number("eta", m.eta);
  r.number("psi", m.psi);
  r.number("zeta", m.zeta);
  r.number("gamma", m.gamma);
  r.finish();
  return m;
}

SolveConfig solve_from_json(const json& j, const std::string& where) {
  SolveConfig s;
  ObjectReader r(j, where);
  r.integer("n_scenarios", s.n_scenarios);
  r.number("tolerance", s.tolerance);
  r.integer("max_iterations", s.max_iterations);
  r.number("g_max", s.g_max);
  r.number("gamma_max", s.gamma_max);
  r.seed("seed", s.seed);
  r.number("max_flagged_fraction", s.max_flagged_fraction);
  if (const json* g = r.find("grid")) {
    ObjectReader gr(*g, r.key("grid"));
    gr.integer("b_nodes", s.grid.b_nodes);
    gr.integer("s_nodes", s.grid.s_nodes);
    gr.finish();
  }
  r.finish();
  return s;
}

namespace {

SimulateConfig simulate_from_json(const json& j) {
  SimulateConfig s;
  ObjectReader r(j, "simulate");
  r.number("s0", s.s0);
  r.number("b0", s.b0);
  r.integer("paths", s.paths);
  r.seed("seed", s.seed);
  r.integer("save_paths", s.save_paths);
  r.finish();
  return s;
}

ImpactScenario impact_from_json(const json& j, const std::string& where) {
  ImpactScenario s;
  ObjectReader r(j, where);
  s.eta = ObjectReader::as_number(r.require("eta"), r.key("eta"));
  s.psi = ObjectReader::as_number(r.require("psi"), r.key("psi"));
  r.finish();
  return s;
}

CostScenario cost_from_json(const json& j, const std::string& where) {
  CostScenario s;
  ObjectReader r(j, where);
  s.zeta = ObjectReader::as_number(r.require("zeta"), r.key("zeta"));
  s.gamma = ObjectReader::as_number(r.require("gamma"), r.key("gamma"));
  r.finish();
  return s;
}

template <typename T, typename F>
std::vector<T> list_from_json(const json& j, const std::string& where, F&& item) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(item(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

SensitivityConfig sensitivity_from_json(const json& j) {
  SensitivityConfig s;
  ObjectReader r(j, "sensitivity");
  if (const json* v = r.find("base")) s.base = impact_from_json(*v, r.key("base"));
  if (const json* v = r.find("price_impact"))
    s.price_impact = list_from_json<ImpactScenario>(*v, r.key("price_impact"), impact_from_json);
  if (const json* v = r.find("cost_sweep"))
    s.cost_sweep = list_from_json<CostScenario>(*v, r.key("cost_sweep"), cost_from_json);
  r.number("slice_price", s.slice_price);
  if (const json* v = r.find("slice_steps"))
    s.slice_steps = list_from_json<int>(*v, r.key("slice_steps"), ObjectReader::as_int);
  r.finish();
  return s;
}

CheckConfig check_from_json(const json& j) {
  CheckConfig c;
  ObjectReader r(j, "check");
  r.integer("paths", c.paths);
  r.seed("seed", c.seed);
  r.number("bound_tolerance", c.bound_tolerance);
  r.number("regime_tolerance", c.regime_tolerance);
  if (const json* v = r.find("probes")) {
    c.probes = list_from_json<ProbeSpec>(*v, r.key("probes"), [](const json& p, const std::string& where) {
      ProbeSpec out;
      ObjectReader pr(p, where);
      out.step = ObjectReader::as_int(pr.require("step"), pr.key("step"));
      out.banked = ObjectReader::as_number(pr.require("b"), pr.key("b"));
      out.price = ObjectReader::as_number(pr.require("S"), pr.key("S"));
      pr.finish();
      return out;
    });
  }
  r.finish();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  checked([&] {
    compliance.validate();
    model.validate();
    solve.validate(compliance, model);
  });
  if (!std::isfinite(simulate.s0) || simulate.s0 < 0.0 || simulate.s0 > compliance.penalty)
    throw ConfigError("simulate.s0: must lie in [0, penalty]");
  if (!std::isfinite(simulate.b0) || simulate.b0 < 0.0) throw ConfigError("simulate.b0: must be >= 0");
  if (simulate.paths < 1) throw ConfigError("simulate.paths: must be >= 1");
  if (simulate.save_paths < 0) throw ConfigError("simulate.save_paths: must be >= 0");
  for (std::size_t i = 0; i < sensitivity.price_impact.size(); ++i) {
    const auto& s = sensitivity.price_impact[i];
    const std::string k = "sensitivity.price_impact[" + std::to_string(i) + "]";
    if (s.eta < 0.0) throw ConfigError(k + ".eta: must be >= 0");
    if (s.psi < 0.0) throw ConfigError(k + ".psi: must be >= 0");
  }
  if (sensitivity.base.eta < 0.0) throw ConfigError("sensitivity.base.eta: must be >= 0");
  if (sensitivity.base.psi < 0.0) throw ConfigError("sensitivity.base.psi: must be >= 0");
  for (std::size_t i = 0; i < sensitivity.cost_sweep.size(); ++i) {
    const auto& s = sensitivity.cost_sweep[i];
    const std::string k = "sensitivity.cost_sweep[" + std::to_string(i) + "]";
    if (!(s.zeta > 0.0)) throw ConfigError(k + ".zeta: must be > 0");
    if (!(s.gamma > 0.0)) throw ConfigError(k + ".gamma: must be > 0");
  }
  if (sensitivity.slice_price < 0.0 || sensitivity.slice_price > compliance.penalty)
    throw ConfigError("sensitivity.slice_price: must lie in [0, penalty]");
  for (std::size_t i = 0; i < sensitivity.slice_steps.size(); ++i) {
    const int k = sensitivity.slice_steps[i];
    if (k < 0 || k >= compliance.total_steps())
      throw ConfigError("sensitivity.slice_steps[" + std::to_string(i) + "]: outside the decision steps");
  }
  if (check.paths < 2) throw ConfigError("check.paths: must be >= 2");
  if (!(check.bound_tolerance >= 0.0)) throw ConfigError("check.bound_tolerance: must be >= 0");
  if (!(check.regime_tolerance >= 0.0)) throw ConfigError("check.regime_tolerance: must be >= 0");
  if (output.empty()) throw ConfigError("output: must not be empty");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  if (j.is_null()) return c;
  ObjectReader r(j, "");
  if (const json* v = r.find("compliance")) c.compliance = compliance_from_json(*v);
  if (const json* v = r.find("model")) c.model = model_from_json(*v);
  if (const json* v = r.find("solve")) c.solve = solve_from_json(*v);
  if (const json* v = r.find("simulate")) c.simulate = simulate_from_json(*v);
  if (const json* v = r.find("sensitivity")) c.sensitivity = sensitivity_from_json(*v);
  if (const json* v = r.find("check")) c.check = check_from_json(*v);
  r.string("output", c.output);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ComplianceSpec& c) {
  return json{{"num_periods", c.num_periods},     {"steps_per_period", c.steps_per_period},
              {"period_length", c.period_length}, {"penalty", c.penalty},
              {"requirement", c.requirement},     {"baseline_rate", c.baseline_rate}};
}

json to_json(const ModelParams& m) {
  return json{{"mu", m.mu},   {"sigma", m.sigma}, {"nu", m.nu},      {"eta", m.eta},
              {"psi", m.psi}, {"zeta", m.zeta},   {"gamma", m.gamma}};
}

json to_json(const SolveConfig& s) {
  return json{{"n_scenarios", s.n_scenarios},
              {"tolerance", s.tolerance},
              {"max_iterations", s.max_iterations},
              {"g_max", s.g_max},
              {"gamma_max", s.gamma_max},
              {"seed", s.seed},
              {"max_flagged_fraction", s.max_flagged_fraction},
              {"grid", {{"b_nodes", s.grid.b_nodes}, {"s_nodes", s.grid.s_nodes}}}};
}

json to_json(const RunConfig& r) {
  json impacts = json::array();
  for (const auto& s : r.sensitivity.price_impact) impacts.push_back({{"eta", s.eta}, {"psi", s.psi}});
  json costs = json::array();
  for (const auto& s : r.sensitivity.cost_sweep) costs.push_back({{"zeta", s.zeta}, {"gamma", s.gamma}});
  json probes = json::array();
  for (const auto& p : r.check.probes) probes.push_back({{"step", p.step}, {"b", p.banked}, {"S", p.price}});
  return json{
      {"compliance", to_json(r.compliance)},
      {"model", to_json(r.model)},
      {"solve", to_json(r.solve)},
      {"simulate",
       {{"s0", r.simulate.s0},
        {"b0", r.simulate.b0},
        {"paths", r.simulate.paths},
        {"seed", r.simulate.seed},
        {"save_paths", r.simulate.save_paths}}},
      {"sensitivity",
       {{"base", {{"eta", r.sensitivity.base.eta}, {"psi", r.sensitivity.base.psi}}},
        {"price_impact", impacts},
        {"cost_sweep", costs},
        {"slice_price", r.sensitivity.slice_price},
        {"slice_steps", r.sensitivity.slice_steps}}},
      {"check",
       {{"paths", r.check.paths},
        {"seed", r.check.seed},
        {"bound_tolerance", r.check.bound_tolerance},
        {"regime_tolerance", r.check.regime_tolerance},
        {"probes", probes}}},
      {"output", r.output},
  };
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string policy_hash(const ComplianceSpec& c, const ModelParams& m, const SolveConfig& s) {
  return config_hash(json{{"compliance", to_json(c)}, {"model", to_json(m)}, {"solve", to_json(s)}});
}

}  // namespace srec
