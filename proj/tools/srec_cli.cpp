#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "srec/config.hpp"
#include "srec/policy_io.hpp"
#include "srec/simulate.hpp"
#include "srec/solver.hpp"
#include "srec/theory.hpp"

namespace fs = std::filesystem;
using namespace srec;

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

struct Options {
  std::string config;
  std::string policy;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  std::optional<double> s0;
  std::optional<double> b0;
  int threads = 1;
};

RunConfig load(const Options& o) {
  RunConfig cfg = o.config.empty() ? parse_config(nlohmann::json::object()) : load_config(o.config);
  if (o.paths) {
    cfg.simulate.paths = *o.paths;
    cfg.check.paths = *o.paths;
  }
  if (o.s0) cfg.simulate.s0 = *o.s0;
  if (o.b0) cfg.simulate.b0 = *o.b0;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Options& o, const RunConfig& cfg) {
  fs::path dir = o.out.empty() ? fs::path(cfg.output) : fs::path(o.out);
  fs::create_directories(dir);
  return dir;
}

Policy load_policy(const Options& o) {
  if (o.policy.empty()) throw std::invalid_argument("--policy is required");
  return read_policy(o.policy);
}

void print_report(const SolveReport& r) {
  std::printf("solved %d steps on %ldx%ld grid: %lld nodes, %lld flagged, %lld on box faces, %.1f s\n", r.steps,
              static_cast<long>(r.b_nodes), static_cast<long>(r.s_nodes), r.nodes, r.flagged, r.box_bound, r.seconds);
}

Policy solve_tracked(const ComplianceSpec& c, const ModelParams& m, const SolveConfig& s, int threads) {
  SolveReport rep;
  Policy pol = solve(c, m, s, threads, &rep);
  pol.config_hash = policy_hash(c, m, s);
  print_report(rep);
  return pol;
}

// Solved policies are cached under the output directory by input hash.
Policy cached_solve(const fs::path& dir, const ComplianceSpec& c, const ModelParams& m, const SolveConfig& s,
                    int threads) {
  const std::string hash = policy_hash(c, m, s);
  const fs::path file = dir / "cache" / (hash + ".bin");
  if (fs::exists(file)) {
    Policy pol = read_policy(file.string());
    if (pol.config_hash == hash) {
      std::printf("reusing cached policy %s\n", file.string().c_str());
      return pol;
    }
  }
  fs::create_directories(file.parent_path());
  Policy pol = solve_tracked(c, m, s, threads);
  write_policy(file.string(), pol);
  return pol;
}

int cmd_solve(const Options& o) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.solve.seed = *o.seed;
  const fs::path dir = out_dir(o, cfg);
  SolveReport rep;
  Policy pol = solve(cfg.compliance, cfg.model, cfg.solve, o.threads, &rep);
  pol.config_hash = policy_hash(cfg.compliance, cfg.model, cfg.solve);
  print_report(rep);
  write_policy((dir / "policy.bin").string(), pol);
  std::ofstream meta(dir / "solve_report.json");
  meta << nlohmann::json{{"nodes", rep.nodes},
                         {"flagged", rep.flagged},
                         {"box_bound", rep.box_bound},
                         {"seconds", rep.seconds},
                         {"config_hash", pol.config_hash}}
              .dump(2)
       << "\n";
  if (!meta) throw std::ios_base::failure("write failed for solve_report.json");
  std::printf("wrote %s\n", (dir / "policy.bin").string().c_str());
  return kOk;
}

int cmd_simulate(const Options& o) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.simulate.seed = *o.seed;
  const Policy pol = load_policy(o);
  const fs::path dir = out_dir(o, cfg);
  const auto& sc = cfg.simulate;
  const auto paths = simulate_ensemble(pol, sc.s0, sc.b0, sc.paths, sc.seed, o.threads);
  const EnsembleStats stats = ensemble_stats(paths);
  write_stats_csv((dir / "stats.csv").string(), {{"policy", stats}});
  for (int i = 0; i < std::min(sc.save_paths, sc.paths); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "path_%03d.csv", i);
    write_path_csv((dir / name).string(), paths[static_cast<std::size_t>(i)]);
  }
  for (const auto& [q, s] : stats) std::printf("%-14s mean %12.4f  std %10.4f\n", q.c_str(), s.mean, s.std);
  return kOk;
}

std::string impact_name(const ImpactScenario& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "eta=%g;psi=%g", s.eta, s.psi);
  return buf;
}

std::string cost_name(const CostScenario& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "zeta=%g;gamma=%g", s.zeta, s.gamma);
  return buf;
}

int cmd_sensitivity(const Options& o) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.simulate.seed = *o.seed;
  const fs::path dir = out_dir(o, cfg);
  const auto& sc = cfg.simulate;
  const auto& sens = cfg.sensitivity;

  auto with_impact = [&](const ImpactScenario& s) {
    ModelParams m = cfg.model;
    m.eta = s.eta;
    m.psi = s.psi;
    return m;
  };

  const Policy base = cached_solve(dir, cfg.compliance, with_impact(sens.base), cfg.solve, o.threads);
  const auto base_paths = simulate_ensemble(base, sc.s0, sc.b0, sc.paths, sc.seed, o.threads);

  std::vector<std::pair<std::string, EnsembleStats>> stats;
  std::vector<std::pair<std::string, std::vector<PairedDifference>>> diffs;
  for (const auto& s : sens.price_impact) {
    const Policy pol = cached_solve(dir, cfg.compliance, with_impact(s), cfg.solve, o.threads);
    const auto paths = simulate_ensemble(pol, sc.s0, sc.b0, sc.paths, sc.seed, o.threads);
    stats.emplace_back(impact_name(s), ensemble_stats(paths));
    diffs.emplace_back(impact_name(s), compare_paths(base_paths, paths));
  }
  write_stats_csv((dir / "price_impact_stats.csv").string(), stats);
  write_difference_csv((dir / "price_impact_diff.csv").string(), diffs);

  stats.clear();
  std::FILE* f = std::fopen((dir / "cost_slices.csv").string().c_str(), "w");
  if (!f) throw std::ios_base::failure("cannot open cost_slices.csv for writing");
  std::fputs("zeta,gamma,t_idx,b,S,g,trade\n", f);
  for (const auto& s : sens.cost_sweep) {
    ModelParams m = with_impact(sens.base);
    m.zeta = s.zeta;
    m.gamma = s.gamma;
    const Policy pol = cached_solve(dir, cfg.compliance, m, cfg.solve, o.threads);
    stats.emplace_back(cost_name(s), ensemble_stats(simulate_ensemble(pol, sc.s0, sc.b0, sc.paths, sc.seed, o.threads)));
    for (int k : sens.slice_steps)
      for (Eigen::Index i = 0; i < pol.grid.nb(); ++i) {
        const double b = pol.grid.b_nodes[i];
        const Control c = pol.control(k, b, sens.slice_price);
        std::fprintf(f, "%.12g,%.12g,%d,%.12g,%.12g,%.12g,%.12g\n", s.zeta, s.gamma, k, b, sens.slice_price, c.gen_rate,
                     c.trade_rate);
      }
  }
  if (std::fclose(f) != 0) throw std::ios_base::failure("write failed for cost_slices.csv");
  write_stats_csv((dir / "cost_sweep_stats.csv").string(), stats);

  for (const auto& [name, d] : diffs) {
    std::printf("%s:", name.c_str());
    for (const auto& x : d) std::printf("  d%s %.3f", x.quantity.c_str(), x.mean);
    std::printf("\n");
  }
  return kOk;
}

int cmd_check(const Options& o) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.check.seed = *o.seed;
  const Policy pol = load_policy(o);
  const fs::path dir = out_dir(o, cfg);
  std::vector<Probe> probes;
  for (const auto& p : cfg.check.probes) probes.push_back({p.step, p.banked, p.price});
  if (probes.empty()) probes = default_probes(pol);

  CheckOptions opt;
  opt.n_paths = cfg.check.paths;
  opt.seed = cfg.check.seed;
  opt.regime_tolerance = cfg.check.regime_tolerance;
  opt.threads = o.threads;
  const ResidualReport rep = check_optimality(pol, probes, opt);
  write_residual_csv((dir / "residuals.csv").string(), rep);
  const BoundsReport b = check_control_bounds(pol, cfg.check.bound_tolerance);
  std::printf("probes %zu: trading violations %d, regime violations %d\n", rep.rows.size(), rep.trading_violations,
              rep.regime_violations);
  std::printf("bounds: g in [%.3f, %.3f] (limit %.3f), trade in [%.3f, %.3f], violations g %lld trade %lld\n", b.g_min,
              b.g_max, b.g_upper, b.trade_min, b.trade_max, b.g_violations, b.trade_violations);
  const bool bad = rep.trading_violations > 0 || rep.regime_violations > 0 || b.g_violations > 0 ||
                   b.trade_violations > 0;
  return bad ? kNumerical : kOk;
}

int cmd_export(const Options& o) {
  const Policy pol = load_policy(o);
  fs::path target = o.out.empty() ? fs::path("policy.csv") : fs::path(o.out);
  if (fs::is_directory(target) || target.extension() != ".csv") {
    fs::create_directories(target);
    target /= "policy.csv";
  }
  export_policy_csv(target.string(), pol);
  std::printf("wrote %s\n", target.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SREC generation and trading: solve, simulate and verify optimal policies"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool policy, bool sim) {
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    if (policy) sub->add_option("--policy", o.policy, "policy file from `solve`")->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "override the seed of this stage");
    if (sim) {
      sub->add_option("--paths", o.paths, "number of simulated paths");
      sub->add_option("--s0", o.s0, "initial price");
      sub->add_option("--b0", o.b0, "initial banked SRECs");
    }
  };

  auto* solve_cmd = app.add_subcommand("solve", "solve the dynamic program and write policy.bin");
  add_common(solve_cmd, false, false);
  auto* sim_cmd = app.add_subcommand("simulate", "simulate paths under a solved policy");
  add_common(sim_cmd, true, true);
  auto* sens_cmd = app.add_subcommand("sensitivity", "price-impact scenarios and cost-curvature sweep");
  add_common(sens_cmd, false, true);
  auto* check_cmd = app.add_subcommand("check", "optimality residuals and control bounds");
  add_common(check_cmd, true, true);
  auto* export_cmd = app.add_subcommand("export", "write a policy as CSV");
  export_cmd->add_option("--policy", o.policy, "policy file")->required();
  export_cmd->add_option("--out", o.out, "CSV file or directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*solve_cmd) return cmd_solve(o);
    if (*sim_cmd) return cmd_simulate(o);
    if (*sens_cmd) return cmd_sensitivity(o);
    if (*check_cmd) return cmd_check(o);
    if (*export_cmd) return cmd_export(o);
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const PolicyFormatError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::ios_base::failure& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  }
  return kValidation;
}
