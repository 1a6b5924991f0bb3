#include "srec/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ios>
#include <limits>
#include <stdexcept>
#include <thread>

namespace srec {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, x.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

void validate_probe(const Policy& policy, const Probe& p) {
  if (p.step < 0 || p.step >= policy.steps()) throw std::invalid_argument("probe outside grid: step");
  if (!(p.banked >= 0.0 && p.banked <= policy.grid.b_max())) throw std::invalid_argument("probe outside grid: b");
  if (!(p.price >= 0.0 && p.price <= policy.grid.s_max())) throw std::invalid_argument("probe outside grid: S");
}

enum Conditions : unsigned { kTrading = 1, kGeneration = 2 };

ResidualReport run_checks(const Policy& policy, const std::vector<Probe>& probes, const CheckOptions& opt,
                          unsigned which) {
  for (const auto& p : probes) validate_probe(policy, p);
  const double P = policy.spec.penalty;
  const ModelParams& m = policy.params;

  ResidualReport rep;
  rep.rows.resize(probes.size());
  auto one = [&](std::size_t i) {
    const Probe& p = probes[i];
    ProbeResidual& r = rep.rows[i];
    r.probe = p;
    r.adjoint = estimate_adjoints(policy, p.step, p.banked, p.price, opt.n_paths,
                                  derive_seed(opt.seed, static_cast<std::uint64_t>(Stream::Adjoint), i));
    const Control c = policy.control(p.step, p.banked, p.price);
    r.g = c.gen_rate;
    r.trade = c.trade_rate;
    r.threshold_floor = 0.05 * P;
    const AdjointEstimate& a = r.adjoint;

    r.trading_residual =
        P * a.prob_noncompliance - m.eta * a.expected_future_trading - p.price - m.gamma * c.trade_rate;
    r.trading_threshold = std::max(r.threshold_floor, 3.0 * a.trading_condition_std_error);
    r.trading_ok = !(which & kTrading) || std::abs(r.trading_residual) <= r.trading_threshold;

    const double h = policy.spec.baseline(p.step);
    const double tol = opt.regime_tolerance;
    r.marginal_benefit = P * a.prob_noncompliance + m.psi * a.expected_future_trading;
    r.generation_threshold = std::max(r.threshold_floor, 3.0 * a.marginal_benefit_std_error);
    // Subgradient condition of min over g >= 0 of zeta/2 ((g - h)_+)^2 - K g:
    // above baseline zeta (g - h) = K, at zero K <= 0, in between K = 0.
    if (c.gen_rate >= h - tol) {
      r.generation_residual = m.zeta * std::max(c.gen_rate - h, 0.0) - r.marginal_benefit;
    } else if (c.gen_rate <= tol) {
      r.generation_residual = std::max(r.marginal_benefit, 0.0);
    } else {
      r.generation_residual = -r.marginal_benefit;
    }
    if (std::abs(r.generation_residual) > r.generation_threshold)
      r.verdict = Regime::Violation;
    else
      r.verdict = c.gen_rate >= 0.5 * h ? Regime::GenerateAboveBaseline : Regime::Shutdown;
    r.regime_ok = !(which & kGeneration) || r.verdict != Regime::Violation;
  };

  const int threads = std::clamp(opt.threads, 1, std::max<int>(1, static_cast<int>(probes.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < probes.size(); ++i) one(i);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < probes.size(); i += static_cast<std::size_t>(threads))
          one(i);
      });
  }
  for (const auto& r : rep.rows) {
    rep.trading_violations += r.trading_ok ? 0 : 1;
    rep.regime_violations += r.regime_ok ? 0 : 1;
  }
  return rep;
}

}  // namespace

const char* to_string(Regime r) {
  switch (r) {
    case Regime::GenerateAboveBaseline:
      return "generate-above-baseline";
    case Regime::Shutdown:
      return "shutdown";
    case Regime::Violation:
      break;
  }
  return "violation";
}

AdjointEstimate estimate_adjoints(const Policy& policy, int step, double banked, double price, int n_paths,
                                  std::uint64_t seed) {
  validate_probe(policy, {step, banked, price});
  if (n_paths < 2) throw std::invalid_argument("estimate_adjoints: need at least 2 paths");
  const ComplianceSpec& spec = policy.spec;
  const ModelParams& m = policy.params;
  const double dt = spec.dt();
  const int last = (spec.period_of(step) + 1) * spec.steps_per_period - 1;

  std::vector<double> shortfall, trading, cond, benefit;
  shortfall.reserve(static_cast<std::size_t>(n_paths));
  trading.reserve(static_cast<std::size_t>(n_paths));
  for (int i = 0; i < n_paths; ++i) {
    NormalStream rng(derive_seed(seed, static_cast<std::uint64_t>(Stream::Path), static_cast<std::uint64_t>(i)));
    double s = price, b = banked, traded = 0.0;
    for (int k = step; k <= last; ++k) {
      const Control c = policy.control(k, b, s);
      traded += c.trade_rate * dt;
      const double eps = rng();
      const double z = rng();
      s = step_price(s, c.gen_rate, c.trade_rate, m, dt, eps, z, spec.penalty);
      b = accrue_inventory(b, c.gen_rate, c.trade_rate, m.nu, dt, eps);
    }
    const double miss = b < spec.requirement ? 1.0 : 0.0;
    shortfall.push_back(miss);
    trading.push_back(traded);
    cond.push_back(spec.penalty * miss - m.eta * traded);
    benefit.push_back(spec.penalty * miss + m.psi * traded);
  }

  AdjointEstimate a;
  a.paths = n_paths;
  const MeanSe p = mean_se(shortfall), e = mean_se(trading);
  a.prob_noncompliance = p.mean;
  a.prob_std_error = p.se;
  a.expected_future_trading = e.mean;
  a.trading_std_error = e.se;
  a.trading_condition_std_error = mean_se(cond).se;
  a.marginal_benefit_std_error = mean_se(benefit).se;
  return a;
}

ResidualReport check_optimality(const Policy& policy, const std::vector<Probe>& probes, const CheckOptions& opt) {
  return run_checks(policy, probes, opt, kTrading | kGeneration);
}

ResidualReport check_trading_condition(const Policy& policy, const std::vector<Probe>& probes,
                                       const CheckOptions& opt) {
  return run_checks(policy, probes, opt, kTrading);
}

ResidualReport check_generation_condition(const Policy& policy, const std::vector<Probe>& probes,
                                          const CheckOptions& opt) {
  return run_checks(policy, probes, opt, kGeneration);
}

std::vector<Probe> default_probes(const Policy& policy) {
  const int n = policy.spec.steps_per_period;
  const double R = policy.spec.requirement;
  const double P = policy.spec.penalty;
  const double fractions[] = {0.1, 0.3, 0.5, 0.7};
  const double bs[] = {0.2 * R, 0.5 * R, 0.8 * R, 1.1 * R, 1.4 * R};
  const double ss[] = {P / 3.0, P / 2.0, 2.0 * P / 3.0, P / 2.0, P / 3.0};
  std::vector<Probe> out;
  for (double f : fractions)
    for (int i = 0; i < 5; ++i) out.push_back({static_cast<int>(f * n), bs[i], ss[i]});
  return out;
}

BoundsReport check_control_bounds(const Policy& policy, double tol) {
  const double P = policy.spec.penalty;
  const double gamma = policy.params.gamma;
  BoundsReport r;
  r.g_upper = P / policy.params.zeta + policy.spec.max_baseline();
  r.g_min = r.trade_min = std::numeric_limits<double>::infinity();
  r.g_max = r.trade_max = -std::numeric_limits<double>::infinity();
  const auto& grid = policy.grid;
  for (int k = 0; k < policy.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double g_hi = P / policy.params.zeta + policy.spec.baseline(k) + tol;
    for (Eigen::Index i = 0; i < grid.nb(); ++i)
      for (Eigen::Index j = 0; j < grid.ns(); ++j) {
        const double g = policy.g_opt[ku](i, j);
        const double t = policy.gamma_opt[ku](i, j);
        const double s = grid.s_nodes[j];
        ++r.nodes;
        r.g_min = std::min(r.g_min, g);
        r.g_max = std::max(r.g_max, g);
        r.trade_min = std::min(r.trade_min, t);
        r.trade_max = std::max(r.trade_max, t);
        if (g < -tol || g > g_hi) ++r.g_violations;
        if (t < -s / gamma - tol || t > (P - s) / gamma + tol) ++r.trade_violations;
      }
  }
  return r;
}

void write_residual_csv(const std::string& path, const ResidualReport& report) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::ios_base::failure("cannot open " + path + " for writing");
  std::fputs(
      "t_idx,b,S,g,gamma,prob_noncompliance,prob_se,expected_trading,expected_trading_se,trading_residual,"
      "trading_threshold,trading_ok,marginal_benefit,marginal_benefit_se,generation_residual,verdict,paths\n",
      f);
  for (const auto& r : report.rows)
    std::fprintf(f, "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%d,%.12g,%.12g,%.12g,%s,%d\n",
                 r.probe.step, r.probe.banked, r.probe.price, r.g, r.trade, r.adjoint.prob_noncompliance,
                 r.adjoint.prob_std_error, r.adjoint.expected_future_trading, r.adjoint.trading_std_error,
                 r.trading_residual, r.trading_threshold, r.trading_ok ? 1 : 0, r.marginal_benefit,
                 r.adjoint.marginal_benefit_std_error, r.generation_residual, to_string(r.verdict), r.adjoint.paths);
  const bool failed = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || failed) throw std::ios_base::failure("write failed for " + path);
}

}  // namespace srec
