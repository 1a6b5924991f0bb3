#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srec/solver.hpp"

namespace srec {

/// State at a decision time, the controls applied there and the generation
/// shock that moved the inventory to the next step. The last row of a path is
/// the end state with zero controls.
struct PathStep {
  int step = 0;
  double t = 0.0;
  double price = 0.0;
  double banked = 0.0;
  double g = 0.0;
  double trade = 0.0;
  double iic = 0.0;
  double noise = 0.0;  // nu sqrt(dt) eps
};

struct PeriodOutcome {
  double generation = 0.0;  // sum of g dt
  double trading = 0.0;     // sum of trade dt
  double banked_end = 0.0;  // before the requirement is submitted
  double penalty = 0.0;
  double cost = 0.0;        // incurred costs plus penalty
  double profit() const { return -cost; }
};

struct PathRecord {
  std::uint64_t seed = 0;
  std::vector<PathStep> steps;
  std::vector<PeriodOutcome> periods;

  double generation() const;
  double trading() const;
  double banked_end() const { return periods.back().banked_end; }
  double profit() const;
};

/// Forward simulation under any feedback rule `control(step, banked, price)`.
/// Draw order per step is (eps, z) from one normal stream seeded with `seed`.
template <typename Controller>
PathRecord simulate_controlled(const ComplianceSpec& spec, const ModelParams& params, Controller&& control, double s0,
                               double b0, std::uint64_t seed) {
  if (!(s0 >= 0.0 && s0 <= spec.penalty)) throw std::invalid_argument("simulate: s0 must lie in [0, penalty]");
  if (!(b0 >= 0.0)) throw std::invalid_argument("simulate: b0 must be >= 0");
  const int K = spec.total_steps();
  const double dt = spec.dt();
  const double sqdt = std::sqrt(dt);
  NormalStream rng(seed);

  PathRecord rec;
  rec.seed = seed;
  rec.steps.reserve(static_cast<std::size_t>(K + 1));
  rec.periods.resize(static_cast<std::size_t>(spec.num_periods));

  double s = s0, b = b0;
  for (int k = 0; k < K; ++k) {
    const Control c = control(k, b, s);
    const double cost = iic(c.gen_rate, c.trade_rate, s, spec.baseline(k), params, dt);
    const double eps = rng();
    const double z = rng();
    rec.steps.push_back({k, k * dt, s, b, c.gen_rate, c.trade_rate, cost, params.nu * sqdt * eps});

    PeriodOutcome& period = rec.periods[static_cast<std::size_t>(spec.period_of(k))];
    period.generation += c.gen_rate * dt;
    period.trading += c.trade_rate * dt;
    period.cost += cost;

    s = step_price(s, c.gen_rate, c.trade_rate, params, dt, eps, z, spec.penalty);
    b = accrue_inventory(b, c.gen_rate, c.trade_rate, params.nu, dt, eps);
    if (spec.is_compliance_step(k)) {
      period.banked_end = b;
      period.penalty = terminal_penalty(b, spec.requirement, spec.penalty);
      period.cost += period.penalty;
      if (k + 1 < K) b = settle_compliance(b, spec.requirement);
    }
  }
  rec.steps.push_back({K, K * dt, s, b, 0.0, 0.0, 0.0, 0.0});
  return rec;
}

/// Forward simulation of the interpolated optimal policy. Draw order per
/// step is (eps, z) from one normal stream seeded with `seed`, so policies
/// simulated with the same seed see identical shocks.
PathRecord simulate_path(const Policy& policy, double s0, double b0, std::uint64_t seed);

/// Seed for path `index` of an ensemble.
std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t index);

std::vector<PathRecord> simulate_ensemble(const Policy& policy, double s0, double b0, int n_paths,
                                          std::uint64_t master_seed, int threads = 1);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1)
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // raw, 3 for a normal
};

/// Moments and quartiles (linear interpolation between order statistics).
/// A constant sample has NaN skewness and kurtosis.
Summary summarize(std::span<const double> x);

/// Named per-path quantities summarised over an ensemble: banked_end,
/// generation, trading and profit for the whole horizon, plus the same per
/// period when there is more than one.
using EnsembleStats = std::vector<std::pair<std::string, Summary>>;
EnsembleStats ensemble_stats(const std::vector<PathRecord>& paths);

struct PairedDifference {
  std::string quantity;
  double mean = 0.0;
  double std = 0.0;
  double std_error = 0.0;
};

/// Scenario minus baseline over paths simulated with identical seeds.
std::vector<PairedDifference> compare_paths(const std::vector<PathRecord>& baseline,
                                            const std::vector<PathRecord>& scenario);

/// Simulates every scenario policy on the same seeds as `base` and returns
/// the paired differences per scenario. All policies must share the
/// compliance rules and solver settings.
std::vector<std::vector<PairedDifference>> compare_price_impact(const Policy& base,
                                                                const std::vector<const Policy*>& scenarios,
                                                                double s0, double b0, int n_paths,
                                                                std::uint64_t master_seed, int threads = 1);

void write_path_csv(const std::string& path, const PathRecord& record);
void write_stats_csv(const std::string& path, const std::vector<std::pair<std::string, EnsembleStats>>& scenarios);
void write_difference_csv(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<PairedDifference>>>& scenarios);

}  // namespace srec
