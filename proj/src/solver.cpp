#include "srec/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "srec/optimize.hpp"

namespace srec {

void SolveConfig::validate(const ComplianceSpec& spec, const ModelParams& params) const {
  auto need = [](bool ok, const char* key, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("solve.") + key + ": " + what);
  };
  need(n_scenarios >= 1, "n_scenarios", "must be >= 1");
  need(std::isfinite(tolerance) && tolerance > 0.0, "tolerance", "must be > 0");
  need(max_iterations >= 1, "max_iterations", "must be >= 1");
  need(std::isfinite(g_max) && g_max >= 0.0, "g_max", "must be >= 0 (0 selects the default)");
  need(std::isfinite(gamma_max) && gamma_max >= 0.0, "gamma_max", "must be >= 0 (0 selects the default)");
  need(max_flagged_fraction >= 0.0 && max_flagged_fraction <= 1.0, "max_flagged_fraction", "must lie in [0, 1]");
  need(resolved_g_max(spec, params) > spec.max_baseline(), "g_max", "must exceed the baseline rate");
  need(resolved_gamma_max(spec, params) > 0.0, "gamma_max", "must be > 0");
}

double SolveConfig::resolved_g_max(const ComplianceSpec& spec, const ModelParams& params) const {
  return g_max > 0.0 ? g_max : 2.0 * (spec.penalty / params.zeta + spec.max_baseline());
}

double SolveConfig::resolved_gamma_max(const ComplianceSpec& spec, const ModelParams& params) const {
  return gamma_max > 0.0 ? gamma_max : 2.0 * spec.penalty / params.gamma;
}

Control Policy::control(int step, double banked, double price) const {
  const auto k = static_cast<std::size_t>(step);
  return {std::max(interp(g_opt.at(k), grid, banked, price), 0.0), interp(gamma_opt.at(k), grid, banked, price)};
}

// ---------------------------------------------------------------------------

StepProblem::StepProblem(const ComplianceSpec& spec, const ModelParams& params, const StateGrid& grid, int step,
                         const Surface* next_value, const NoiseBlock& noise)
    : spec_(&spec),
      params_(&params),
      grid_(&grid),
      next_(next_value),
      step_(step),
      compliance_(spec.is_compliance_step(step)),
      final_(step == spec.total_steps() - 1),
      dt_(spec.dt()),
      h_(spec.baseline(step)) {
  if (!final_ && (next_ == nullptr || !grid.same_shape(*next_)))
    throw std::invalid_argument("bellman: next-step value surface missing or mis-sized");
  const double sqdt = std::sqrt(dt_);
  inventory_shift_ = params.nu * sqdt * noise.eps;
  price_shift_ = -params.psi * params.nu * sqdt * noise.eps + params.sigma * sqdt * noise.z;
}

double StepProblem::stage_cost(double price, double g, double trade) const {
  return iic(g, trade, price, h_, *params_, dt_);
}

template <typename Visit>
void StepProblem::for_each_scenario(double banked, double price, double g, double trade, Visit&& visit) const {
  const double R = spec_->requirement;
  const double P = spec_->penalty;
  const double x = banked + (g + trade) * dt_;
  const Eigen::Index n = inventory_shift_.size();
  const double* db = inventory_shift_.data();

  if (final_) {
    // Price-free boundary: only the compliance shortfall matters.
    for (Eigen::Index k = 0; k < n; ++k) visit(P * std::max(R - std::max(x + db[k], 0.0), 0.0));
    return;
  }

  const double y = price + (params_->mu + params_->eta * trade - params_->psi * g) * dt_;
  const double* ds = price_shift_.data();
  const BilinearSampler<double> next(*next_, *grid_);
  if (compliance_) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double b_pre = std::max(x + db[k], 0.0);
      const double s = std::min(std::max(y + ds[k], 0.0), P);
      visit(P * std::max(R - b_pre, 0.0) + next(std::max(b_pre - R, 0.0), s));
    }
  } else {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double s = std::min(std::max(y + ds[k], 0.0), P);
      visit(next(std::max(x + db[k], 0.0), s));
    }
  }
}

double StepProblem::expected_continuation(double banked, double price, double g, double trade) const {
  double sum = 0.0;
  for_each_scenario(banked, price, g, trade, [&](double v) { sum += v; });
  return sum / static_cast<double>(inventory_shift_.size());
}

double StepProblem::continuation_std_error(double banked, double price, double g, double trade) const {
  const auto n = static_cast<double>(inventory_shift_.size());
  if (n < 2) return 0.0;
  const double mean = expected_continuation(banked, price, g, trade);
  double ss = 0.0;
  for_each_scenario(banked, price, g, trade, [&](double v) { ss += (v - mean) * (v - mean); });
  return std::sqrt(ss / (n - 1.0) / n);
}

double expected_continuation(const ComplianceSpec& spec, const ModelParams& params, const StateGrid& grid, int step,
                             double banked, double price, double g, double trade, const Surface* next_value,
                             const NoiseBlock& noise) {
  return StepProblem(spec, params, grid, step, next_value, noise).expected_continuation(banked, price, g, trade);
}

double bellman_objective(const ComplianceSpec& spec, const ModelParams& params, const StateGrid& grid, int step,
                         double banked, double price, double g, double trade, const Surface* next_value,
                         const NoiseBlock& noise) {
  return StepProblem(spec, params, grid, step, next_value, noise).objective(banked, price, g, trade);
}

// ---------------------------------------------------------------------------

GridpointResult optimize_gridpoint(const StepProblem& problem, double banked, double price, const SolveConfig& cfg,
                                   const ComplianceSpec& spec, const ModelParams& params, const WarmStarts& warm) {
  const double h = problem.baseline();
  const double g_hi = cfg.resolved_g_max(spec, params);
  const double t_hi = cfg.resolved_gamma_max(spec, params);
  const Box2 box{Eigen::Vector2d(0.0, -t_hi), Eigen::Vector2d(g_hi, t_hi)};
  auto f = [&](const Eigen::Vector2d& u) { return problem.objective(banked, price, u[0], u[1]); };

  // Candidate starts: warm starts plus one point per regime (sell-only
  // shutdown, baseline, saturated buying at marginal benefit P).
  struct Candidate {
    Eigen::Vector2d x;
    double f;
  };
  std::vector<Candidate> cands;
  auto add = [&](double g, double t) {
    const Eigen::Vector2d x = box.project(Eigen::Vector2d(g, t));
    cands.push_back({x, f(x)});
  };
  if (warm.has_later) add(warm.later.gen_rate, warm.later.trade_rate);
  if (warm.has_neighbour) add(warm.neighbour.gen_rate, warm.neighbour.trade_rate);
  add(0.0, -price / params.gamma);
  add(h, 0.0);
  add(spec.penalty / params.zeta + h, (spec.penalty - price) / params.gamma);

  const auto best = std::min_element(cands.begin(), cands.end(), [](auto& a, auto& b) { return a.f < b.f; });

  // Values closer than this are indistinguishable ties.
  const double f_tie = 1e-12 * std::max(spec.penalty * spec.requirement, 1.0);
  const double step = std::max(10.0, 100.0 * cfg.tolerance);
  auto run = [&](const Eigen::Vector2d& x0) {
    return nelder_mead_box(f, x0, step, box, cfg.tolerance, cfg.max_iterations, f_tie);
  };
  MinimizeResult r = run(best->x);
  bool converged = r.converged;
  auto keep_better = [&](const MinimizeResult& other) {
    converged = converged && other.converged;
    if (other.f < r.f) {
      const int evals = r.evaluations + other.evaluations;
      r = other;
      r.evaluations = evals;
    }
  };

  // Probe the opposite side of the shutdown/generation split at the same
  // trading rate and descend from there only if it is already better.
  {
    const Eigen::Vector2d probe = box.project(Eigen::Vector2d(r.x[0] >= 0.5 * h ? 0.0 : h, r.x[1]));
    if (f(probe) < r.f) keep_better(run(probe));
  }
  // A simplex that collapsed onto a face can stall; restart once from there.
  if (box.on_boundary(r.x, cfg.tolerance)) keep_better(run(r.x));

  // Below baseline generation is free, so the objective can be flat in g on
  // [0, h]. An interior rate is replaced by the better endpoint when the two
  // agree to within the objective's resolution; exact ties go to g = h.
  if (r.x[0] < h) {
    const double res = 1e-7 * std::max(spec.penalty * spec.requirement, 1.0);
    const Eigen::Vector2d at_0(0.0, r.x[1]);
    const Eigen::Vector2d at_h(h, r.x[1]);
    const double f0 = f(at_0);
    const double fh = f(at_h);
    if (std::min(f0, fh) <= r.f + res) {
      const bool pick_h = fh <= f0 + f_tie;
      r.x = pick_h ? at_h : at_0;
      r.f = pick_h ? fh : f0;
    }
  }
  r.converged = converged;

  GridpointResult out;
  out.g = r.x[0];
  out.trade = r.x[1];
  out.value = r.f;
  out.converged = r.converged;
  const double edge = 10.0 * cfg.tolerance;
  out.box_bound = (g_hi - r.x[0] <= edge) || (r.x[1] + t_hi <= edge) || (t_hi - r.x[1] <= edge);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Stage cost minimised over the split of a total acquisition rate u = g + trade.
struct Split {
  double g;
  double trade;
  double cost_rate;
};

Split best_split(double u, double price, double h, const ModelParams& p) {
  double g;
  if (u + price / p.gamma >= h)
    g = (price + p.gamma * u + p.zeta * h) / (p.zeta + p.gamma);
  else
    g = std::max(u + price / p.gamma, 0.0);
  const double t = u - g;
  return {g, t, generation_cost_rate(g, h, p.zeta) + trading_cost_rate(t, price, p.gamma)};
}

// E[P (m - s eps)_+] for standard normal eps.
double expected_shortfall(double m, double s, double P) {
  if (s <= 0.0) return P * std::max(m, 0.0);
  const double a = m / s;
  return P * (m * normal_cdf(a) + s * normal_pdf(a));
}

}  // namespace

ClosedFormResult last_step_closed_form(double banked, double price, const ComplianceSpec& spec,
                                       const ModelParams& params) {
  const int last = spec.total_steps() - 1;
  const double dt = spec.dt();
  const double h = spec.baseline(last);
  const double s = params.nu * std::sqrt(dt);
  auto total = [&](double u) {
    const Split sp = best_split(u, price, h, params);
    return sp.cost_rate * dt + expected_shortfall(spec.requirement - banked - u * dt, s, spec.penalty);
  };

  // Dense scan over the acquisition rate, then golden-section refinement of
  // the bracketing cell. The objective is convex in u.
  const double lo = -2.0 * spec.penalty / params.gamma;
  const double hi = 2.0 * (spec.penalty / params.zeta + spec.max_baseline()) + 2.0 * spec.penalty / params.gamma;
  const double du = 0.1;
  const int n = static_cast<int>(std::ceil((hi - lo) / du));
  int best = 0;
  double fbest = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double v = total(lo + i * du);
    if (v < fbest) {
      fbest = v;
      best = i;
    }
  }
  double a = lo + std::max(best - 1, 0) * du;
  double b = lo + std::min(best + 1, n) * du;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = total(c), fd = total(d);
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = total(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = total(d);
    }
  }
  const double u = 0.5 * (a + b);
  const Split sp = best_split(u, price, h, params);
  return {sp.g, sp.trade, total(u)};
}

// ---------------------------------------------------------------------------

Policy solve(const ComplianceSpec& spec, const ModelParams& params, const SolveConfig& cfg, int threads,
             SolveReport* report) {
  spec.validate();
  params.validate();
  cfg.validate(spec, params);
  const auto t0 = std::chrono::steady_clock::now();

  Policy pol;
  pol.spec = spec;
  pol.params = params;
  pol.cfg = cfg;
  pol.grid = build_grid(spec, params, cfg.grid);
  const int K = spec.total_steps();
  const Eigen::Index nb = pol.grid.nb();
  const Eigen::Index ns = pol.grid.ns();

  pol.times.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) pol.times[static_cast<std::size_t>(k)] = k * spec.dt();
  for (int k = 0; k < K; ++k)
    if (spec.is_compliance_step(k)) pol.compliance_indices.push_back(k);

  pol.value.assign(static_cast<std::size_t>(K + 1), pol.grid.zeros());
  pol.g_opt.assign(static_cast<std::size_t>(K), pol.grid.zeros());
  pol.gamma_opt.assign(static_cast<std::size_t>(K), pol.grid.zeros());
  if (spec.num_periods == 1) {
    Surface& terminal = pol.value.back();
    for (Eigen::Index i = 0; i < nb; ++i)
      terminal.row(i).setConstant(terminal_penalty(pol.grid.b_nodes[i], spec.requirement, spec.penalty));
  }

  // One noise block per position within a period, shared by every node and
  // candidate control at that position.
  std::vector<NoiseBlock> blocks;
  for (int j = 0; j < spec.steps_per_period; ++j) blocks.push_back(make_noise_block(cfg.seed, j, cfg.n_scenarios));

  SolveReport rep;
  rep.b_nodes = nb;
  rep.s_nodes = ns;
  rep.steps = K;
  threads = std::max(threads, 1);

  for (int k = K - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    const StepProblem problem(spec, params, pol.grid, k, &pol.value[ku + 1], blocks[static_cast<std::size_t>(spec.step_in_period(k))]);
    const bool has_later = k + 1 < K;

    // Columns (fixed price node) are swept in b by a single worker so the
    // neighbour warm start is independent of the thread count.
    std::vector<long long> flagged(static_cast<std::size_t>(threads), 0), bound(static_cast<std::size_t>(threads), 0);
    auto work = [&](int w) {
      for (Eigen::Index j = w; j < ns; j += threads) {
        const double s = pol.grid.s_nodes[j];
        WarmStarts warm;
        for (Eigen::Index i = 0; i < nb; ++i) {
          warm.has_later = has_later;
          if (has_later) warm.later = {pol.g_opt[ku + 1](i, j), pol.gamma_opt[ku + 1](i, j)};
          const GridpointResult r = optimize_gridpoint(problem, pol.grid.b_nodes[i], s, cfg, spec, params, warm);
          pol.value[ku](i, j) = r.value;
          pol.g_opt[ku](i, j) = r.g;
          pol.gamma_opt[ku](i, j) = r.trade;
          flagged[static_cast<std::size_t>(w)] += r.converged ? 0 : 1;
          bound[static_cast<std::size_t>(w)] += r.box_bound ? 1 : 0;
          warm.has_neighbour = true;
          warm.neighbour = {r.g, r.trade};
        }
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
    }
    for (int w = 0; w < threads; ++w) {
      rep.flagged += flagged[static_cast<std::size_t>(w)];
      rep.box_bound += bound[static_cast<std::size_t>(w)];
    }
    rep.nodes += nb * ns;
  }

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (report != nullptr) *report = rep;
  if (static_cast<double>(rep.flagged) > cfg.max_flagged_fraction * static_cast<double>(rep.nodes))
    throw NumericalFailure("solve: " + std::to_string(rep.flagged) + " of " + std::to_string(rep.nodes) +
                               " nodes did not converge",
                           rep);
  return pol;
}

}  // namespace srec
