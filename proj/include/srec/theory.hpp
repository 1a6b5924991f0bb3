#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srec/solver.hpp"

namespace srec {

/// Conditional expectations behind the optimality conditions, estimated by
/// simulating the policy forward from one state to the end of its period.
struct AdjointEstimate {
  double prob_noncompliance = 0.0;       // P(b_end < R), b_end before submission
  double expected_future_trading = 0.0;  // E[sum of trade dt], current step included
  double prob_std_error = 0.0;
  double trading_std_error = 0.0;
  double trading_condition_std_error = 0.0;  // of P 1{b_end < R} - eta sum(trade dt)
  double marginal_benefit_std_error = 0.0;   // of P 1{b_end < R} + psi sum(trade dt)
  int paths = 0;
};

AdjointEstimate estimate_adjoints(const Policy& policy, int step, double banked, double price, int n_paths,
                                  std::uint64_t seed);

struct Probe {
  int step = 0;
  double banked = 0.0;
  double price = 0.0;
};

enum class Regime { GenerateAboveBaseline, Shutdown, Violation };

const char* to_string(Regime r);

struct ProbeResidual {
  Probe probe;
  AdjointEstimate adjoint;
  double g = 0.0;
  double trade = 0.0;
  double threshold_floor = 0.0;  // 5% of P

  double trading_residual = 0.0;  // P p - eta E - S - gamma trade
  double trading_threshold = 0.0;
  bool trading_ok = true;

  double marginal_benefit = 0.0;     // K = P p + psi E
  double generation_residual = 0.0;  // subgradient residual of the generation condition
  double generation_threshold = 0.0;
  Regime verdict = Regime::Violation;
  bool regime_ok = true;
};

struct ResidualReport {
  std::vector<ProbeResidual> rows;
  int trading_violations = 0;
  int regime_violations = 0;
};

struct CheckOptions {
  int n_paths = 2000;
  std::uint64_t seed = 11;
  double regime_tolerance = 5.0;  // SREC/year
  int threads = 1;
};

/// Every row carries both residuals; the single-condition variants only count
/// violations of their own condition.
ResidualReport check_optimality(const Policy& policy, const std::vector<Probe>& probes, const CheckOptions& opt);
ResidualReport check_trading_condition(const Policy& policy, const std::vector<Probe>& probes,
                                       const CheckOptions& opt);
ResidualReport check_generation_condition(const Policy& policy, const std::vector<Probe>& probes,
                                          const CheckOptions& opt);

/// Twenty interior probes spread over the first four fifths of a period.
std::vector<Probe> default_probes(const Policy& policy);

struct BoundsReport {
  long long nodes = 0;
  long long g_violations = 0;
  long long trade_violations = 0;
  double g_min = 0.0;
  double g_max = 0.0;
  double trade_min = 0.0;
  double trade_max = 0.0;
  double g_upper = 0.0;  // P / zeta + max h
};

/// Nodewise g in [0, P/zeta + h] and trade in [-S/gamma, (P - S)/gamma], each
/// widened by `tol`.
BoundsReport check_control_bounds(const Policy& policy, double tol = 1.0);

void write_residual_csv(const std::string& path, const ResidualReport& report);

}  // namespace srec
