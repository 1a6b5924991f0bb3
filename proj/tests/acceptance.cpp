// Acceptance run: solves the base experiment and its variants once, then
// prints one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "srec/policy_io.hpp"
#include "srec/simulate.hpp"
#include "srec/solver.hpp"
#include "srec/theory.hpp"

using namespace srec;

namespace {

int g_failed = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

Policy timed_solve(const char* label, const ComplianceSpec& c, const ModelParams& m, const SolveConfig& s,
                   int threads) {
  SolveReport rep;
  Policy p = solve(c, m, s, threads, &rep);
  std::printf("  solved %-22s %ldx%ld x %d steps in %.1f s (%lld flagged, %lld on box faces)\n", label,
              static_cast<long>(rep.b_nodes), static_cast<long>(rep.s_nodes), rep.steps, rep.seconds, rep.flagged,
              rep.box_bound);
  std::fflush(stdout);
  return p;
}

bool same_bits(const Surface& a, const Surface& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_policy(const Policy& a, const Policy& b) {
  if (a.value.size() != b.value.size() || a.g_opt.size() != b.g_opt.size()) return false;
  for (std::size_t k = 0; k < a.value.size(); ++k)
    if (!same_bits(a.value[k], b.value[k])) return false;
  for (std::size_t k = 0; k < a.g_opt.size(); ++k)
    if (!same_bits(a.g_opt[k], b.g_opt[k]) || !same_bits(a.gamma_opt[k], b.gamma_opt[k])) return false;
  return true;
}

const Summary& stat(const EnsembleStats& s, const std::string& name) {
  for (const auto& [n, v] : s)
    if (n == name) return v;
  throw std::runtime_error("missing statistic " + name);
}

const PairedDifference& diff(const std::vector<PairedDifference>& d, const std::string& name) {
  for (const auto& x : d)
    if (x.quantity == name) return x;
  throw std::runtime_error("missing difference " + name);
}

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

// ---------------------------------------------------------------------------

void terminal_boundary(const Policy& base) {
  const auto& g = base.grid;
  const Surface& v = base.value.back();
  long long bad = 0;
  for (Eigen::Index i = 0; i < g.nb(); ++i)
    for (Eigen::Index j = 0; j < g.ns(); ++j)
      if (v(i, j) != terminal_penalty(g.b_nodes[i], base.spec.requirement, base.spec.penalty)) ++bad;
  report(1, bad == 0, fmt("V(T,b,S) = P(R-b)+ exactly at %lld of %lld nodes", g.nb() * g.ns() - bad, g.nb() * g.ns()));
}

void control_bounds(const Policy& base, double smoke_seconds, long long smoke_flagged) {
  double g_lo = INFINITY, g_hi = -INFINITY, t_lo = INFINITY, t_hi = -INFINITY;
  long long outside = 0, nodes = 0;
  for (int k = 0; k < base.steps(); ++k) {
    const auto& gk = base.g_opt[static_cast<std::size_t>(k)];
    const auto& tk = base.gamma_opt[static_cast<std::size_t>(k)];
    g_lo = std::min(g_lo, gk.minCoeff());
    g_hi = std::max(g_hi, gk.maxCoeff());
    t_lo = std::min(t_lo, tk.minCoeff());
    t_hi = std::max(t_hi, tk.maxCoeff());
    outside += ((gk.array() < 0.0) || (gk.array() > 1001.0) || (tk.array() < -501.0) || (tk.array() > 501.0)).count();
    nodes += gk.size();
  }
  const bool pass = outside == 0 && smoke_seconds < 60.0 && smoke_flagged == 0;
  report(2, pass,
         fmt("g in [%.3f, %.3f] (bound [0, 1001]), gamma in [%.3f, %.3f] (bound [-501, 501]), %lld of %lld node "
             "values outside; 101x32 smoke solve %.1f s (limit 60 s), %lld flagged",
             g_lo, g_hi, t_lo, t_hi, outside, nodes, smoke_seconds, smoke_flagged));
}

void regime_dichotomy(const Policy& base) {
  long long nodes = 0, settled = 0, final_shutdown = 0;
  const int K = base.steps();
  for (int k = 0; k < K; ++k) {
    const double h = base.spec.baseline(k);
    const auto& gk = base.g_opt[static_cast<std::size_t>(k)];
    nodes += gk.size();
    settled += ((gk.array() >= h - 5.0) || (gk.array() <= 5.0)).count();
    if (k == K - 1) final_shutdown = (gk.array() <= 5.0).count();
  }
  const double frac = static_cast<double>(settled) / static_cast<double>(nodes);
  report(3, frac >= 0.99 && final_shutdown == 0,
         fmt("%.4f%% of nodes have g >= h-5 or g <= 5 (need 99%%); %lld shutdown nodes at the final step (need 0)",
             100.0 * frac, final_shutdown));
}

void table3(const std::vector<PathRecord>& paths) {
  const EnsembleStats st = ensemble_stats(paths);
  const Summary& b = stat(st, "banked_end");
  const Summary& g = stat(st, "generation");
  const Summary& t = stat(st, "trading");
  const Summary& p = stat(st, "profit");
  auto sd_ok = [](double x, double ref) { return std::abs(x - ref) <= 0.3 * ref; };
  const bool means = within(b.mean, 501.61, 2.0) && within(g.mean, 621.95, 5.0) && within(t.mean, -120.10, 5.0) &&
                     within(p.mean, 8730.0, 500.0);
  const bool sds = sd_ok(b.std, 1.62) && sd_ok(g.std, 6.59) && sd_ok(t.std, 6.31) && sd_ok(p.std, 940.0);
  report(4, means && sds,
         fmt("means b_T %.2f (501.61+-2), int g %.2f (621.95+-5), int gamma %.2f (-120.10+-5), profit %.0f "
             "(8730+-500); std %.2f/%.2f/%.2f/%.0f (1.62/6.59/6.31/940 +-30%%)",
             b.mean, g.mean, t.mean, p.mean, b.std, g.std, t.std, p.std));
}

void table4(const std::vector<PathRecord>& base_paths, const Policy& none, const Policy& strong, double s0, int n,
            std::uint64_t seed, int threads) {
  const auto d0 = compare_paths(base_paths, simulate_ensemble(none, s0, 0.0, n, seed, threads));
  const auto d2 = compare_paths(base_paths, simulate_ensemble(strong, s0, 0.0, n, seed, threads));
  const double g0 = diff(d0, "generation").mean, t0 = diff(d0, "trading").mean, p0 = diff(d0, "profit").mean;
  const double g2 = diff(d2, "generation").mean, p2 = diff(d2, "profit").mean;
  const bool pass = within(g0, 3.69, 1.5) && within(t0, -4.07, 1.5) && within(p0, 440.0, 150.0) &&
                    within(g2, -4.04, 1.5) && within(p2, -430.0, 150.0);
  report(5, pass,
         fmt("(0,0): d int g %+.2f (+3.69+-1.5), d int gamma %+.2f (-4.07+-1.5), d profit %+.0f (+440+-150); "
             "(0.02,0.02): d int g %+.2f (-4.04+-1.5), d profit %+.0f (-430+-150)",
             g0, t0, p0, g2, p2));
}

void multi_period(const Policy& base, const Policy& five) {
  const int n = base.spec.steps_per_period;
  const int offset = 4 * n;
  // control ranges of the analytic bounds: g in [0, P/zeta + h], gamma in [-P/gamma, P/gamma]
  const double g_tol = 0.01 * (base.spec.penalty / base.params.zeta + base.spec.max_baseline());
  const double t_tol = 0.01 * (2.0 * base.spec.penalty / base.params.gamma);
  long long nodes = 0, close = 0;
  double worst_g = 0.0, worst_t = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto& g1 = base.g_opt[static_cast<std::size_t>(k)];
    const auto& t1 = base.gamma_opt[static_cast<std::size_t>(k)];
    const auto& g5 = five.g_opt[static_cast<std::size_t>(offset + k)];
    const auto& t5 = five.gamma_opt[static_cast<std::size_t>(offset + k)];
    const auto dg = (g1 - g5).cwiseAbs();
    const auto dt = (t1 - t5).cwiseAbs();
    worst_g = std::max(worst_g, dg.maxCoeff());
    worst_t = std::max(worst_t, dt.maxCoeff());
    close += ((dg.array() <= g_tol) && (dt.array() <= t_tol)).count();
    nodes += g1.size();
  }
  const double frac = static_cast<double>(close) / static_cast<double>(nodes);
  report(6, frac >= 0.99,
         fmt("period 5 of N=5 matches the single-period controls on %.4f%% of nodes (need 99%%; tol g %.1f, gamma "
             "%.1f); max |dg| %.3g, max |dgamma| %.3g",
             100.0 * frac, g_tol, t_tol, worst_g, worst_t));
}

void last_step_oracle(const Policy& base) {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<Eigen::Index> bi(0, base.grid.nb() - 1), sj(0, base.grid.ns() - 1);
  const int K = base.steps();
  const auto& v = base.value[static_cast<std::size_t>(K - 1)];
  int agree = 0;
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const Eigen::Index i = bi(rng), j = sj(rng);
    const ClosedFormResult cf = last_step_closed_form(base.grid.b_nodes[i], base.grid.s_nodes[j], base.spec, base.params);
    const double rel = std::abs(v(i, j) - cf.value) / std::max(std::abs(cf.value), 1.0);
    worst = std::max(worst, rel);
    agree += rel <= 0.005 ? 1 : 0;
  }
  report(7, agree == 100,
         fmt("%d of 100 sampled final-step nodes agree with the closed form within 0.5%% (worst %.4f%%)", agree,
             100.0 * worst));
}

void optimality_residuals(const Policy& base, int threads) {
  CheckOptions opt;
  opt.n_paths = 2000;
  opt.seed = 11;
  opt.threads = threads;
  const ResidualReport rep = check_optimality(base, default_probes(base), opt);
  double worst = 0.0;
  for (const auto& r : rep.rows) worst = std::max(worst, std::abs(r.trading_residual) / r.trading_threshold);
  report(8, rep.rows.size() == 20 && rep.trading_violations == 0 && rep.regime_violations == 0,
         fmt("%zu probes: %d trading residuals over threshold (worst at %.0f%% of its threshold), %d inconsistent "
             "generation verdicts",
             rep.rows.size(), rep.trading_violations, 100.0 * worst, rep.regime_violations));
}

void properties(const Policy& base, const Policy& smoke, const Policy& smoke_threads,
                const std::vector<PathRecord>& paths, double s0, int n_paths, std::uint64_t seed, int threads) {
  // value non-increasing in b, up to two Monte Carlo standard errors of the node estimates
  const auto& g = base.grid;
  long long mono_bad = 0;
  for (int k = 0; k < base.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const NoiseBlock noise = make_noise_block(base.cfg.seed, base.spec.step_in_period(k), base.cfg.n_scenarios);
    const StepProblem prob(base.spec, base.params, g, k, &base.value[ku + 1], noise);
    for (Eigen::Index j = 0; j < g.ns(); ++j) {
      double se_prev = prob.continuation_std_error(g.b_nodes[0], g.s_nodes[j], base.g_opt[ku](0, j),
                                                   base.gamma_opt[ku](0, j));
      for (Eigen::Index i = 1; i < g.nb(); ++i) {
        const double se = prob.continuation_std_error(g.b_nodes[i], g.s_nodes[j], base.g_opt[ku](i, j),
                                                      base.gamma_opt[ku](i, j));
        if (base.value[ku](i, j) > base.value[ku](i - 1, j) + 2.0 * std::max(se, se_prev)) ++mono_bad;
        se_prev = se;
      }
    }
  }

  // dominance over fixed benchmarks on the same shocks
  struct Bench {
    const char* name;
    Control c;
  };
  const double h = base.spec.baseline(0);
  const Bench benches[] = {{"do-nothing", {h, 0.0}},
                           {"max generation", {base.spec.penalty / base.params.zeta + h, 0.0}},
                           {"buy the gap", {h, 50.0}},
                           {"sell at baseline", {h, -100.0}}};
  int dominated = 0;
  std::string worst_bench;
  for (const auto& bch : benches) {
    std::vector<double> d;
    for (int i = 0; i < n_paths; ++i) {
      const PathRecord r = simulate_controlled(
          base.spec, base.params, [&](int, double, double) { return bch.c; }, s0, 0.0,
          path_seed(seed, static_cast<std::uint64_t>(i)));
      d.push_back(paths[static_cast<std::size_t>(i)].profit() - r.profit());
    }
    const Summary s = summarize(d);
    if (s.mean >= -2.0 * s.std / std::sqrt(static_cast<double>(s.count)))
      ++dominated;
    else
      worst_bench = bch.name;
  }

  const bool det_solve = same_policy(smoke, smoke_threads);
  const auto e1 = simulate_ensemble(smoke, s0, 0.0, 64, seed, 1);
  const auto e4 = simulate_ensemble(smoke, s0, 0.0, 64, seed, std::max(threads, 4));
  bool det_sim = true;
  for (std::size_t i = 0; i < e1.size(); ++i) det_sim = det_sim && e1[i].profit() == e4[i].profit();

  const auto file = std::filesystem::temp_directory_path() / "srec_acceptance_policy.bin";
  write_policy(file.string(), base);
  const bool round_trip = same_policy(base, read_policy(file.string()));
  std::filesystem::remove(file);

  report(9, mono_bad == 0 && dominated == 4 && det_solve && det_sim && round_trip,
         fmt("monotone in b: %lld violations; dominates %d of 4 benchmarks%s%s; bitwise identical across threads: "
             "solve %s, simulate %s; policy file round trip %s",
             mono_bad, dominated, worst_bench.empty() ? "" : ", fails against ", worst_bench.c_str(),
             det_solve ? "yes" : "no", det_sim ? "yes" : "no", round_trip ? "identical" : "differs"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const int threads = worker_count();
  const ComplianceSpec spec;
  const ModelParams params;
  const SolveConfig cfg;
  const double s0 = 150.0;
  const int n_paths = 1000;
  const std::uint64_t seed = 7;
  std::printf("acceptance run with %d worker thread(s)\n", threads);

  SolveConfig smoke_cfg = cfg;
  smoke_cfg.grid = {101, 32};
  SolveReport smoke_rep;
  const Policy smoke = solve(spec, params, smoke_cfg, 1, &smoke_rep);
  const Policy smoke_threads = solve(spec, params, smoke_cfg, 4);

  const Policy base = timed_solve("base", spec, params, cfg, threads);
  terminal_boundary(base);
  control_bounds(base, smoke_rep.seconds, smoke_rep.flagged);
  regime_dichotomy(base);
  last_step_oracle(base);
  optimality_residuals(base, threads);

  const auto base_paths = simulate_ensemble(base, s0, 0.0, n_paths, seed, threads);
  table3(base_paths);
  properties(base, smoke, smoke_threads, base_paths, s0, n_paths, seed, threads);

  ModelParams none = params, strong = params;
  none.eta = none.psi = 0.0;
  strong.eta = strong.psi = 0.02;
  const Policy p_none = timed_solve("eta=psi=0", spec, none, cfg, threads);
  const Policy p_strong = timed_solve("eta=psi=0.02", spec, strong, cfg, threads);
  table4(base_paths, p_none, p_strong, s0, n_paths, seed, threads);
  {
    double g_hi = 0.0;
    for (const auto& g : p_none.g_opt) g_hi = std::max(g_hi, g.maxCoeff());
    std::printf("  note: without price impact max g = %.3f\n", g_hi);
  }

  ComplianceSpec five = spec;
  five.num_periods = 5;
  five.fill_baseline(500.0);
  const Policy p_five = timed_solve("N=5", five, params, cfg, threads);
  multi_period(base, p_five);

  std::printf("%d of 9 criteria failed; total %.0f s\n", g_failed, seconds_since(t0));
  return g_failed;
}
