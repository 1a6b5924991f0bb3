#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "srec/grid.hpp"
#include "srec/model.hpp"
#include "srec/random.hpp"

namespace srec {

struct SolveConfig {
  int n_scenarios = 100;
  double tolerance = 1e-2;  // optimizer tolerance, SREC/year
  int max_iterations = 400;
  double g_max = 0.0;       // 0 selects 2 (P / zeta + max h)
  double gamma_max = 0.0;   // 0 selects 2 P / gamma
  std::uint64_t seed = 20200807;
  double max_flagged_fraction = 0.01;
  GridOptions grid;

  void validate(const ComplianceSpec& spec, const ModelParams& params) const;
  double resolved_g_max(const ComplianceSpec& spec, const ModelParams& params) const;
  double resolved_gamma_max(const ComplianceSpec& spec, const ModelParams& params) const;

  friend bool operator==(const SolveConfig&, const SolveConfig&) = default;
};

/// Value and optimal controls for every decision step on one state grid.
///
/// `value` has one more entry than the control surfaces: value[K] is the
/// boundary after the last decision step, P (R - b)_+ for a single period and
/// zero for several (penalties are then charged inside the step expectation).
struct Policy {
  ComplianceSpec spec;
  ModelParams params;
  SolveConfig cfg;
  StateGrid grid;
  std::vector<double> times;
  std::vector<Surface> value;
  std::vector<Surface> g_opt;
  std::vector<Surface> gamma_opt;
  std::vector<int> compliance_indices;
  std::string config_hash;  // set by callers that track provenance

  int steps() const { return static_cast<int>(g_opt.size()); }

  /// Interpolated optimal controls at an arbitrary state.
  Control control(int step, double banked, double price) const;
};

struct SolveReport {
  long long nodes = 0;
  long long flagged = 0;    // optimizer hit its iteration cap
  long long box_bound = 0;  // optimum on a box face other than g = 0
  double seconds = 0.0;
  Eigen::Index b_nodes = 0;
  Eigen::Index s_nodes = 0;
  int steps = 0;
};

class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, SolveReport report)
      : std::runtime_error(what), report_(report) {}
  const SolveReport& report() const { return report_; }

 private:
  SolveReport report_;
};

/// Everything needed to evaluate the Bellman objective at one decision step.
///
/// The noise block is folded into per-scenario state offsets once, so one
/// objective evaluation is a pass of bilinear lookups over the scenarios.
class StepProblem {
 public:
  StepProblem(const ComplianceSpec& spec, const ModelParams& params, const StateGrid& grid, int step,
              const Surface* next_value, const NoiseBlock& noise);

  double stage_cost(double price, double g, double trade) const;
  double expected_continuation(double banked, double price, double g, double trade) const;
  /// Standard error of the scenario average in `expected_continuation`.
  double continuation_std_error(double banked, double price, double g, double trade) const;
  double objective(double banked, double price, double g, double trade) const {
    return stage_cost(price, g, trade) + expected_continuation(banked, price, g, trade);
  }

  int step() const { return step_; }
  bool final_step() const { return final_; }
  double baseline() const { return h_; }

 private:
  const ComplianceSpec* spec_;
  const ModelParams* params_;
  const StateGrid* grid_;
  const Surface* next_;
  int step_;
  bool compliance_;
  bool final_;
  double dt_;
  double h_;
  template <typename Visit>
  void for_each_scenario(double banked, double price, double g, double trade, Visit&& visit) const;

  Eigen::VectorXd inventory_shift_;
  Eigen::VectorXd price_shift_;
};

double expected_continuation(const ComplianceSpec& spec, const ModelParams& params, const StateGrid& grid, int step,
                             double banked, double price, double g, double trade, const Surface* next_value,
                             const NoiseBlock& noise);

double bellman_objective(const ComplianceSpec& spec, const ModelParams& params, const StateGrid& grid, int step,
                         double banked, double price, double g, double trade, const Surface* next_value,
                         const NoiseBlock& noise);

struct GridpointResult {
  double g = 0.0;
  double trade = 0.0;
  double value = 0.0;
  bool converged = true;
  bool box_bound = false;
};

/// Optional warm starts for a node: the same node one step later and the
/// neighbouring node already solved at this step.
struct WarmStarts {
  bool has_later = false;
  Control later;
  bool has_neighbour = false;
  Control neighbour;
};

GridpointResult optimize_gridpoint(const StepProblem& problem, double banked, double price, const SolveConfig& cfg,
                                   const ComplianceSpec& spec, const ModelParams& params,
                                   const WarmStarts& warm = {});

struct ClosedFormResult {
  double g = 0.0;
  double trade = 0.0;
  double value = 0.0;
};

/// Exact minimiser of the single-period last-step objective with Gaussian
/// generation noise, used as an oracle for the sampled solver.
ClosedFormResult last_step_closed_form(double banked, double price, const ComplianceSpec& spec,
                                       const ModelParams& params);

Policy solve(const ComplianceSpec& spec, const ModelParams& params, const SolveConfig& cfg, int threads = 1,
             SolveReport* report = nullptr);

}  // namespace srec
