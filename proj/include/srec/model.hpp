#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace srec {

/// Price and generation dynamics plus the two cost curvatures.
///
/// Units: rates are SREC/year, prices $/SREC, time in years. Defaults are
/// the base experiment (mu=0, sigma=10, nu=10, eta=psi=0.01, zeta=gamma=0.6).
struct ModelParams {
  double mu = 0.0;      // price drift
  double sigma = 10.0;  // price volatility
  double nu = 10.0;     // generation noise volatility
  double eta = 0.01;    // price impact of trading
  double psi = 0.01;    // price impact of generation
  double zeta = 0.6;    // generation cost curvature
  double gamma = 0.6;   // trading cost curvature

  void validate() const {
    auto need = [](bool ok, const char* key, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("model.") + key + ": " + what);
    };
    need(std::isfinite(mu), "mu", "must be finite");
    need(std::isfinite(sigma) && sigma >= 0.0, "sigma", "must be >= 0");
    need(std::isfinite(nu) && nu >= 0.0, "nu", "must be >= 0");
    need(std::isfinite(eta) && eta >= 0.0, "eta", "must be >= 0");
    need(std::isfinite(psi) && psi >= 0.0, "psi", "must be >= 0");
    need(std::isfinite(zeta) && zeta > 0.0, "zeta", "must be > 0");
    need(std::isfinite(gamma) && gamma > 0.0, "gamma", "must be > 0");
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Market rules: N compliance periods of length T, each split into n
/// decision steps. The baseline rate is stored per decision step over the
/// whole horizon so a time-varying baseline needs no interface change.
struct ComplianceSpec {
  int num_periods = 1;
  int steps_per_period = 50;
  double period_length = 1.0;
  double penalty = 300.0;
  double requirement = 500.0;
  std::vector<double> baseline_rate = std::vector<double>(50, 500.0);

  double dt() const { return period_length / steps_per_period; }
  int total_steps() const { return num_periods * steps_per_period; }

  double baseline(int step) const { return baseline_rate.at(static_cast<std::size_t>(step)); }
  double max_baseline() const {
    return baseline_rate.empty() ? 0.0 : *std::max_element(baseline_rate.begin(), baseline_rate.end());
  }

  /// True when the transition out of decision step `step` lands on a period end.
  bool is_compliance_step(int step) const { return (step + 1) % steps_per_period == 0; }
  int period_of(int step) const { return step / steps_per_period; }
  int step_in_period(int step) const { return step % steps_per_period; }

  /// Resize a constant baseline to the horizon implied by n and N.
  void fill_baseline(double rate) {
    baseline_rate.assign(static_cast<std::size_t>(std::max(total_steps(), 0)), rate);
  }

  void validate() const {
    auto need = [](bool ok, const char* key, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("compliance.") + key + ": " + what);
    };
    need(num_periods >= 1, "num_periods", "must be >= 1");
    need(steps_per_period >= 1, "steps_per_period", "must be >= 1");
    need(std::isfinite(period_length) && period_length > 0.0, "period_length", "must be > 0");
    need(std::isfinite(penalty) && penalty >= 0.0, "penalty", "must be >= 0");
    need(std::isfinite(requirement) && requirement >= 0.0, "requirement", "must be >= 0");
    need(baseline_rate.size() == static_cast<std::size_t>(total_steps()), "baseline_rate",
         "must have one entry per decision step");
    for (double h : baseline_rate) need(std::isfinite(h) && h >= 0.0, "baseline_rate", "must be finite and >= 0");
  }

  friend bool operator==(const ComplianceSpec&, const ComplianceSpec&) = default;
};

struct State {
  double banked = 0.0;
  double price = 0.0;
};

struct Control {
  double gen_rate = 0.0;
  double trade_rate = 0.0;  // positive buys
};

// ---------------------------------------------------------------------------
// Stage costs
// ---------------------------------------------------------------------------

/// Rental cost of generating above baseline: zeta/2 * ((g - h)_+)^2 per year.
template <typename Scalar>
Scalar generation_cost_rate(Scalar g, Scalar h, Scalar zeta) {
  if (g < Scalar(0)) throw std::domain_error("generation_cost_rate: negative generation rate");
  const Scalar excess = std::max(g - h, Scalar(0));
  return Scalar(0.5) * zeta * excess * excess;
}

/// Cash spent on trading plus the speed penalty, per year. Negative is revenue.
template <typename Scalar>
Scalar trading_cost_rate(Scalar trade, Scalar price, Scalar gamma) {
  return trade * price + Scalar(0.5) * gamma * trade * trade;
}

template <typename Scalar>
Scalar terminal_penalty(Scalar banked, Scalar requirement, Scalar penalty) {
  return penalty * std::max(requirement - banked, Scalar(0));
}

/// Instantaneous incurred cost over one step.
template <typename Scalar>
Scalar iic(Scalar g, Scalar trade, Scalar price, Scalar h, const ModelParams& p, Scalar dt) {
  return (generation_cost_rate(g, h, Scalar(p.zeta)) + trading_cost_rate(trade, price, Scalar(p.gamma))) * dt;
}

// ---------------------------------------------------------------------------
// One-step transitions
// ---------------------------------------------------------------------------

/// Euler step of the impacted price, floored at 0 and capped at the penalty.
template <typename Scalar>
Scalar step_price(Scalar price, Scalar g, Scalar trade, const ModelParams& p, Scalar dt, Scalar eps, Scalar z,
                  Scalar cap) {
  const Scalar sqdt = std::sqrt(dt);
  const Scalar next = price + (Scalar(p.mu) + Scalar(p.eta) * trade - Scalar(p.psi) * g) * dt -
                      Scalar(p.psi) * Scalar(p.nu) * sqdt * eps + Scalar(p.sigma) * sqdt * z;
  return std::min(std::max(next, Scalar(0)), cap);
}

/// Inventory after one step of acquisition and generation noise, before any
/// compliance settlement. Clamped at zero.
template <typename Scalar>
Scalar accrue_inventory(Scalar banked, Scalar g, Scalar trade, Scalar nu, Scalar dt, Scalar eps) {
  return std::max(banked + (g + trade) * dt + nu * std::sqrt(dt) * eps, Scalar(0));
}

/// Submit the requirement; the surplus is banked.
template <typename Scalar>
Scalar settle_compliance(Scalar pre_reset, Scalar requirement) {
  return std::max(pre_reset - requirement, Scalar(0));
}

template <typename Scalar>
Scalar step_inventory(Scalar banked, Scalar g, Scalar trade, Scalar nu, Scalar dt, Scalar eps,
                      bool compliance_event, Scalar requirement) {
  const Scalar next = accrue_inventory(banked, g, trade, nu, dt, eps);
  return compliance_event ? settle_compliance(next, requirement) : next;
}

}  // namespace srec
