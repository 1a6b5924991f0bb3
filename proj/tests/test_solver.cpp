#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "srec/random.hpp"
#include "srec/solver.hpp"

using namespace srec;
using doctest::Approx;

namespace {

ComplianceSpec multi_period(int periods) {
  ComplianceSpec c;
  c.num_periods = periods;
  c.fill_baseline(500.0);
  return c;
}

// Independent evaluation of the last-step objective with exact Gaussian noise.
double last_step_exact(double b, double s, double g, double t, const ComplianceSpec& c, const ModelParams& p) {
  const double dt = c.dt();
  const double sd = p.nu * std::sqrt(dt);
  const double m = c.requirement - b - (g + t) * dt;
  const double a = m / sd;
  const double shortfall = c.penalty * (m * 0.5 * std::erfc(-a / std::sqrt(2.0)) +
                                        sd * std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI));
  const double gen = g > 500.0 ? 0.5 * p.zeta * (g - 500.0) * (g - 500.0) : 0.0;
  return (gen + t * s + 0.5 * p.gamma * t * t) * dt + shortfall;
}

struct Brute {
  double g, t, v;
};

Brute brute_force(double b, double s, const ComplianceSpec& c, const ModelParams& p) {
  Brute best{0, 0, INFINITY};
  for (double g = 0.0; g <= 2000.0; g += 1.0)
    for (double t = -1000.0; t <= 1000.0; t += 1.0) {
      const double v = last_step_exact(b, s, g, t, c, p);
      if (v < best.v) best = {g, t, v};
    }
  const Brute coarse = best;
  for (double g = std::max(coarse.g - 1.0, 0.0); g <= coarse.g + 1.0; g += 0.01)
    for (double t = coarse.t - 1.0; t <= coarse.t + 1.0; t += 0.01) {
      const double v = last_step_exact(b, s, g, t, c, p);
      if (v < best.v) best = {g, t, v};
    }
  return best;
}

}  // namespace

TEST_CASE("continuation of a constant surface is that constant") {
  const ComplianceSpec c;
  const ModelParams p;
  const StateGrid g = build_grid(c, p, {41, 16});
  Surface next = g.zeros();
  next.setConstant(42.5);
  const NoiseBlock noise = make_noise_block(1, 3, 100);
  CHECK(expected_continuation(c, p, g, 3, 120.0, 150.0, 700.0, -40.0, &next, noise) == Approx(42.5));
}

TEST_CASE("single zero draw reduces the continuation to the deterministic successor") {
  const ComplianceSpec c;
  const ModelParams p;
  const StateGrid g = build_grid(c, p, {41, 16});
  Surface next = g.zeros();
  for (Eigen::Index i = 0; i < g.nb(); ++i)
    for (Eigen::Index j = 0; j < g.ns(); ++j) next(i, j) = 5.0 * g.b_nodes[i] + 0.5 * g.s_nodes[j] * g.b_nodes[i];
  NoiseBlock noise{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  const double b = 200.0, s = 150.0, gen = 800.0, t = 120.0;
  const double b1 = b + (gen + t) * c.dt();
  const double s1 = s + (p.eta * t - p.psi * gen) * c.dt();
  CHECK(expected_continuation(c, p, g, 10, b, s, gen, t, &next, noise) == Approx(interp(next, g, b1, s1)));
}

TEST_CASE("final-step continuation equals the sampled expected shortfall") {
  const ComplianceSpec c;
  const ModelParams p;
  const StateGrid g = build_grid(c, p, {41, 16});
  const NoiseBlock noise = make_noise_block(20200807, 49, 100);
  double oracle = 0.0;
  for (Eigen::Index k = 0; k < noise.size(); ++k) {
    const double b1 = std::max(10.0 * std::sqrt(0.02) * noise.eps[k], 0.0);
    oracle += 300.0 * std::max(500.0 - b1, 0.0);
  }
  oracle /= static_cast<double>(noise.size());
  CHECK(expected_continuation(c, p, g, 49, 0.0, 150.0, 0.0, 0.0, nullptr, noise) == Approx(oracle).epsilon(1e-12));
  // deep compliance: penalty is out of reach
  CHECK(bellman_objective(c, p, g, 49, 900.0, 150.0, 0.0, 0.0, nullptr, noise) == 0.0);
}

TEST_CASE("compliance step charges the pre-reset shortfall and carries the surplus") {
  const ComplianceSpec c = multi_period(2);
  const ModelParams p;
  const StateGrid g = build_grid(c, p, {41, 16});
  Surface next = g.zeros();
  for (Eigen::Index i = 0; i < g.nb(); ++i)
    for (Eigen::Index j = 0; j < g.ns(); ++j) next(i, j) = 1000.0 - g.b_nodes[i] + g.s_nodes[j];
  const NoiseBlock noise = make_noise_block(9, 49, 50);
  const double b = 495.0, s = 100.0, gen = 600.0, t = 50.0, dt = c.dt();
  double oracle = 0.0;
  for (Eigen::Index k = 0; k < noise.size(); ++k) {
    const double pre = std::max(b + (gen + t) * dt + p.nu * std::sqrt(dt) * noise.eps[k], 0.0);
    const double s1 = std::clamp(s + (p.eta * t - p.psi * gen) * dt - p.psi * p.nu * std::sqrt(dt) * noise.eps[k] +
                                     p.sigma * std::sqrt(dt) * noise.z[k],
                                 0.0, 300.0);
    oracle += 300.0 * std::max(500.0 - pre, 0.0) + (1000.0 - std::max(pre - 500.0, 0.0) + s1);
  }
  oracle /= static_cast<double>(noise.size());
  CHECK(expected_continuation(c, p, g, 49, b, s, gen, t, &next, noise) == Approx(oracle).epsilon(1e-12));
}

TEST_CASE("objective is stage cost plus continuation") {
  const ComplianceSpec c;
  const ModelParams p;
  const StateGrid g = build_grid(c, p, {41, 16});
  Surface next = g.zeros();
  next.setRandom();
  const NoiseBlock noise = make_noise_block(3, 7, 100);
  const double b = 321.0, s = 77.0, gen = 910.0, t = -35.0;
  const double stage = iic(gen, t, s, 500.0, p, c.dt());
  CHECK(bellman_objective(c, p, g, 7, b, s, gen, t, &next, noise) ==
        Approx(stage + expected_continuation(c, p, g, 7, b, s, gen, t, &next, noise)));
  Surface zero = g.zeros();
  CHECK(bellman_objective(c, p, g, 7, b, s, 500.0, 0.0, &zero, noise) == 0.0);
}

TEST_CASE("with a zero continuation the optimum sells at S / gamma") {
  const ComplianceSpec c;
  const ModelParams p;
  const StateGrid g = build_grid(c, p, {41, 16});
  const Surface zero = g.zeros();
  const NoiseBlock noise = make_noise_block(3, 7, 100);
  const StepProblem prob(c, p, g, 7, &zero, noise);
  const GridpointResult r = optimize_gridpoint(prob, 300.0, 150.0, SolveConfig{}, c, p);
  CHECK(r.converged);
  CHECK(r.trade == Approx(-250.0).epsilon(1e-4));
  // generation below baseline is free, so any g in [0, h] is optimal
  CHECK(r.g >= 0.0);
  CHECK(r.g <= 500.0 + 1e-6);
  CHECK(r.value == Approx(-150.0 * 150.0 / (2.0 * 0.6) * 0.02));
}

TEST_CASE("closed form last step against brute force search") {
  const ComplianceSpec c;
  const ModelParams p;
  for (auto [b, s] : {std::pair{500.0, 150.0}, {0.0, 0.0}, {490.0, 60.0}}) {
    const ClosedFormResult cf = last_step_closed_form(b, s, c, p);
    const Brute bf = brute_force(b, s, c, p);
    CHECK(cf.value <= bf.v + 1e-9);
    CHECK(cf.value == Approx(bf.v).epsilon(1e-7));
    CHECK(cf.g == Approx(bf.g).epsilon(1e-3));
    CHECK(cf.trade == Approx(bf.t).epsilon(1e-3));
  }
  const ClosedFormResult full = last_step_closed_form(0.0, 0.0, c, p);
  CHECK(full.g == Approx(1000.0).epsilon(1e-4));
  CHECK(full.trade == Approx(500.0).epsilon(1e-4));
  const ClosedFormResult rich = last_step_closed_form(1500.0, 150.0, c, p);
  CHECK(rich.trade == Approx(-250.0).epsilon(1e-6));
  CHECK(rich.g <= 500.0);
  CHECK(rich.value < 0.0);
}

TEST_CASE("sampled last step tracks the closed form") {
  const ComplianceSpec c;
  const ModelParams p;
  const SolveConfig cfg;
  const StateGrid g = build_grid(c, p, {41, 16});
  const NoiseBlock noise = make_noise_block(cfg.seed, 49, cfg.n_scenarios);
  const StepProblem prob(c, p, g, 49, nullptr, noise);
  for (auto [b, s] : {std::pair{0.0, 150.0}, {300.0, 100.0}, {495.0, 150.0}, {800.0, 250.0}}) {
    const GridpointResult r = optimize_gridpoint(prob, b, s, cfg, c, p);
    const ClosedFormResult cf = last_step_closed_form(b, s, c, p);
    CHECK(std::abs(r.value - cf.value) <= 0.005 * std::max(std::abs(cf.value), 1.0));
    // below baseline the split is not unique once the penalty is out of reach
    if (cf.g >= 500.0) CHECK(r.g == Approx(cf.g).epsilon(0.01).scale(1000.0));
    CHECK(r.trade == Approx(cf.trade).epsilon(0.01).scale(1000.0));
  }
}

TEST_CASE("solved policy: boundary, signs, regimes and monotonicity") {
  const Policy& pol = test::small_policy();
  const StateGrid& g = pol.grid;
  const int K = pol.steps();
  REQUIRE(K == 50);
  REQUIRE(pol.value.size() == 51);
  CHECK(pol.compliance_indices == std::vector<int>{49});

  for (Eigen::Index i = 0; i < g.nb(); ++i)
    for (Eigen::Index j = 0; j < g.ns(); ++j)
      CHECK(pol.value.back()(i, j) == 300.0 * std::max(500.0 - g.b_nodes[i], 0.0));

  // generation is at or above baseline or shut down, except next to a switch
  auto on = [](double x) { return x >= 495.0; };
  auto off = [](double x) { return x <= 5.0; };
  for (int k = 0; k < K; ++k) {
    const auto& gk = pol.g_opt[static_cast<std::size_t>(k)];
    CHECK(gk.minCoeff() >= 0.0);
    for (Eigen::Index i = 0; i < g.nb(); ++i)
      for (Eigen::Index j = 0; j < g.ns(); ++j) {
        if (on(gk(i, j)) || off(gk(i, j))) continue;
        // nearest settled nodes on either side in b must be in opposite regimes
        auto settled = [&](Eigen::Index step) {
          for (Eigen::Index x = i + step; x >= 0 && x < g.nb(); x += step)
            if (on(gk(x, j)) || off(gk(x, j))) return on(gk(x, j)) ? 1 : -1;
          return 0;
        };
        const int lo = settled(-1), hi = settled(1);
        CHECK_MESSAGE(lo * hi == -1, "interior rate away from a switch at step ", k);
      }
  }
  CHECK(pol.g_opt.back().minCoeff() >= 495.0);

  // more inventory never costs more, and purchases fall as the price rises
  for (int k = 0; k < K; ++k) {
    const auto& v = pol.value[static_cast<std::size_t>(k)];
    const auto& t = pol.gamma_opt[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < g.ns(); ++j)
      for (Eigen::Index i = 1; i < g.nb(); ++i) CHECK(v(i, j) <= v(i - 1, j) + 1.0);
    for (Eigen::Index i = 0; i < g.nb(); ++i)
      for (Eigen::Index j = 1; j < g.ns(); ++j) CHECK(t(i, j) <= t(i, j - 1) + 1.0);
  }

  // large inventory early on: shut down and sell
  const Control rich = pol.control(0, 1000.0, 150.0);
  CHECK(rich.gen_rate <= 5.0);
  CHECK(rich.trade_rate < 0.0);
}

TEST_CASE("solve is bitwise identical across thread counts") {
  const Policy& one = test::small_policy();
  const Policy three = solve(ComplianceSpec{}, ModelParams{}, test::small_config(), 3);
  for (int k = 0; k < one.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    CHECK((one.value[ku].array() == three.value[ku].array()).all());
    CHECK((one.g_opt[ku].array() == three.g_opt[ku].array()).all());
    CHECK((one.gamma_opt[ku].array() == three.gamma_opt[ku].array()).all());
  }
}

TEST_CASE("multi-period boundary is zero and compliance steps are listed") {
  ComplianceSpec c = multi_period(2);
  c.steps_per_period = 4;
  c.fill_baseline(500.0);
  SolveConfig cfg;
  cfg.grid = {21, 8};
  const Policy pol = solve(c, ModelParams{}, cfg);
  CHECK(pol.value.back().isZero(0.0));
  CHECK(pol.compliance_indices == std::vector<int>{3, 7});
  CHECK(pol.times.size() == 8);
}

TEST_CASE("solver configuration is validated") {
  SolveConfig cfg;
  cfg.n_scenarios = 0;
  CHECK_THROWS_WITH_AS(solve(ComplianceSpec{}, ModelParams{}, cfg), doctest::Contains("solve.n_scenarios"),
                       std::invalid_argument);
  cfg = SolveConfig{};
  cfg.g_max = 400.0;
  CHECK_THROWS_WITH_AS(solve(ComplianceSpec{}, ModelParams{}, cfg), doctest::Contains("solve.g_max"),
                       std::invalid_argument);
}

TEST_CASE("a starved optimizer is reported as a numerical failure") {
  ComplianceSpec c;
  c.steps_per_period = 2;
  c.fill_baseline(500.0);
  SolveConfig cfg;
  cfg.grid = {11, 5};
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-9;
  CHECK_THROWS_AS(solve(c, ModelParams{}, cfg), NumericalFailure);
  cfg.max_flagged_fraction = 1.0;
  SolveReport rep;
  CHECK_NOTHROW(solve(c, ModelParams{}, cfg, 1, &rep));
  CHECK(rep.flagged > 0);
}
