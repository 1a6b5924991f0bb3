#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "srec/model.hpp"
#include "srec/solver.hpp"

namespace srec {

struct SimulateConfig {
  double s0 = 150.0;
  double b0 = 0.0;
  int paths = 1000;
  std::uint64_t seed = 7;
  int save_paths = 5;  // individual path CSVs written
};

struct ImpactScenario {
  double eta = 0.0;
  double psi = 0.0;
};

struct CostScenario {
  double zeta = 0.6;
  double gamma = 0.6;
};

struct SensitivityConfig {
  ImpactScenario base{0.01, 0.01};
  std::vector<ImpactScenario> price_impact{{0.0, 0.0}, {0.01, 0.01}, {0.02, 0.02}};
  std::vector<CostScenario> cost_sweep{{0.2, 0.2}, {0.6, 0.6}, {1.0, 1.0}};
  double slice_price = 150.0;
  std::vector<int> slice_steps{0, 10, 20, 30, 40, 49};
};

struct ProbeSpec {
  int step = 0;
  double banked = 0.0;
  double price = 0.0;
};

struct CheckConfig {
  int paths = 2000;
  std::uint64_t seed = 11;
  double bound_tolerance = 1.0;
  double regime_tolerance = 5.0;
  std::vector<ProbeSpec> probes;  // empty selects the default probe set
};

/// Everything a CLI run needs. Every field has a default, so `{}` is the base
/// single-period experiment.
struct RunConfig {
  ComplianceSpec compliance;
  ModelParams model;
  SolveConfig solve;
  SimulateConfig simulate;
  SensitivityConfig sensitivity;
  CheckConfig check;
  std::string output = "out";

  void validate() const;
};

/// Thrown for malformed configuration; the message names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

nlohmann::json to_json(const ComplianceSpec& c);
nlohmann::json to_json(const ModelParams& m);
nlohmann::json to_json(const SolveConfig& s);
nlohmann::json to_json(const RunConfig& r);

ComplianceSpec compliance_from_json(const nlohmann::json& j, const std::string& where = "compliance");
ModelParams model_from_json(const nlohmann::json& j, const std::string& where = "model");
SolveConfig solve_from_json(const nlohmann::json& j, const std::string& where = "solve");

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

/// Hash of exactly the inputs that determine a solved policy.
std::string policy_hash(const ComplianceSpec& c, const ModelParams& m, const SolveConfig& s);

}  // namespace srec
