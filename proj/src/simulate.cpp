#include "srec/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ios>
#include <limits>
#include <stdexcept>
#include <thread>

namespace srec {

namespace {

// Neumaier compensated sum.
double accurate_sum(std::span<const double> x) {
  double s = 0.0, c = 0.0;
  for (double v : x) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::FILE* open_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::ios_base::failure("cannot open " + path + " for writing");
  return f;
}

void close_csv(std::FILE* f, const std::string& path) {
  const bool failed = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || failed) throw std::ios_base::failure("write failed for " + path);
}

}  // namespace

double PathRecord::generation() const {
  double s = 0.0;
  for (const auto& p : periods) s += p.generation;
  return s;
}

double PathRecord::trading() const {
  double s = 0.0;
  for (const auto& p : periods) s += p.trading;
  return s;
}

double PathRecord::profit() const {
  double s = 0.0;
  for (const auto& p : periods) s += p.profit();
  return s;
}

PathRecord simulate_path(const Policy& policy, double s0, double b0, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(policy.spec.total_steps());
  if (policy.g_opt.size() != n || policy.gamma_opt.size() != n || policy.value.size() != n + 1)
    throw std::invalid_argument("simulate: policy surfaces do not match its compliance rules");
  for (std::size_t k = 0; k < n; ++k)
    if (!policy.grid.same_shape(policy.g_opt[k]) || !policy.grid.same_shape(policy.gamma_opt[k]))
      throw std::invalid_argument("simulate: policy surfaces do not match its grid");
  return simulate_controlled(
      policy.spec, policy.params, [&](int k, double b, double s) { return policy.control(k, b, s); }, s0, b0, seed);
}

std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t index) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(Stream::Path), index);
}

std::vector<PathRecord> simulate_ensemble(const Policy& policy, double s0, double b0, int n_paths,
                                          std::uint64_t master_seed, int threads) {
  if (n_paths < 1) throw std::invalid_argument("simulate: need at least one path");
  std::vector<PathRecord> out(static_cast<std::size_t>(n_paths));
  threads = std::clamp(threads, 1, n_paths);
  auto work = [&](int w) {
    for (int i = w; i < n_paths; i += threads)
      out[static_cast<std::size_t>(i)] = simulate_path(policy, s0, b0, path_seed(master_seed, static_cast<std::uint64_t>(i)));
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }
  return out;
}

Summary summarize(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("summarize: empty sample");
  Summary s;
  s.count = x.size();
  const double n = static_cast<double>(x.size());
  s.mean = accurate_sum(x) / n;

  std::vector<double> d2, d3, d4;
  d2.reserve(x.size());
  d3.reserve(x.size());
  d4.reserve(x.size());
  for (double v : x) {
    const double d = v - s.mean;
    d2.push_back(d * d);
    d3.push_back(d * d * d);
    d4.push_back(d * d * d * d);
  }
  const double m2 = accurate_sum(d2) / n;
  const double m3 = accurate_sum(d3) / n;
  const double m4 = accurate_sum(d4) / n;
  s.std = x.size() > 1 ? std::sqrt(accurate_sum(d2) / (n - 1.0)) : 0.0;
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2);
  } else {
    s.skewness = s.kurtosis = std::numeric_limits<double>::quiet_NaN();
  }

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  return s;
}

namespace {

using Extractor = double (*)(const PathRecord&, int);

struct Quantity {
  const char* name;
  Extractor total;
  Extractor period;
};

const Quantity kQuantities[] = {
    {"banked_end", [](const PathRecord& r, int) { return r.banked_end(); },
     [](const PathRecord& r, int p) { return r.periods[static_cast<std::size_t>(p)].banked_end; }},
    {"generation", [](const PathRecord& r, int) { return r.generation(); },
     [](const PathRecord& r, int p) { return r.periods[static_cast<std::size_t>(p)].generation; }},
    {"trading", [](const PathRecord& r, int) { return r.trading(); },
     [](const PathRecord& r, int p) { return r.periods[static_cast<std::size_t>(p)].trading; }},
    {"profit", [](const PathRecord& r, int) { return r.profit(); },
     [](const PathRecord& r, int p) { return r.periods[static_cast<std::size_t>(p)].profit(); }},
};

std::vector<double> collect(const std::vector<PathRecord>& paths, Extractor f, int period) {
  std::vector<double> v;
  v.reserve(paths.size());
  for (const auto& p : paths) v.push_back(f(p, period));
  return v;
}

}  // namespace

EnsembleStats ensemble_stats(const std::vector<PathRecord>& paths) {
  if (paths.empty()) throw std::invalid_argument("ensemble_stats: no paths");
  EnsembleStats out;
  for (const auto& q : kQuantities) out.emplace_back(q.name, summarize(collect(paths, q.total, 0)));
  const int periods = static_cast<int>(paths.front().periods.size());
  if (periods > 1)
    for (int p = 0; p < periods; ++p)
      for (const auto& q : kQuantities)
        out.emplace_back(std::string(q.name) + "_p" + std::to_string(p + 1), summarize(collect(paths, q.period, p)));
  return out;
}

std::vector<PairedDifference> compare_paths(const std::vector<PathRecord>& baseline,
                                            const std::vector<PathRecord>& scenario) {
  if (baseline.size() != scenario.size() || baseline.empty())
    throw std::invalid_argument("compare_paths: ensembles must be non-empty and of equal size");
  for (std::size_t i = 0; i < baseline.size(); ++i)
    if (baseline[i].seed != scenario[i].seed) throw std::invalid_argument("compare_paths: paths are not paired by seed");

  std::vector<PairedDifference> out;
  for (const auto& q : kQuantities) {
    std::vector<double> d;
    d.reserve(baseline.size());
    for (std::size_t i = 0; i < baseline.size(); ++i) d.push_back(q.total(scenario[i], 0) - q.total(baseline[i], 0));
    const Summary s = summarize(d);
    out.push_back({q.name, s.mean, s.std, s.std / std::sqrt(static_cast<double>(s.count))});
  }
  return out;
}

std::vector<std::vector<PairedDifference>> compare_price_impact(const Policy& base,
                                                                const std::vector<const Policy*>& scenarios,
                                                                double s0, double b0, int n_paths,
                                                                std::uint64_t master_seed, int threads) {
  for (const Policy* p : scenarios)
    if (p == nullptr || !(p->spec == base.spec) || !(p->cfg == base.cfg))
      throw std::invalid_argument("compare_price_impact: scenarios must share compliance rules and solver settings");
  const auto base_paths = simulate_ensemble(base, s0, b0, n_paths, master_seed, threads);
  std::vector<std::vector<PairedDifference>> out;
  for (const Policy* p : scenarios)
    out.push_back(compare_paths(base_paths, simulate_ensemble(*p, s0, b0, n_paths, master_seed, threads)));
  return out;
}

void write_path_csv(const std::string& path, const PathRecord& record) {
  std::FILE* f = open_csv(path);
  std::fputs("step,t,S,b,g,gamma,iic,noise\n", f);
  for (const auto& s : record.steps)
    std::fprintf(f, "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", s.step, s.t, s.price, s.banked, s.g, s.trade,
                 s.iic, s.noise);
  close_csv(f, path);
}

void write_stats_csv(const std::string& path, const std::vector<std::pair<std::string, EnsembleStats>>& scenarios) {
  std::FILE* f = open_csv(path);
  std::fputs("scenario,quantity,count,mean,std,q1,median,q3,skewness,kurtosis\n", f);
  for (const auto& [name, stats] : scenarios)
    for (const auto& [q, s] : stats)
      std::fprintf(f, "%s,%s,%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", name.c_str(), q.c_str(), s.count, s.mean,
                   s.std, s.q1, s.median, s.q3, s.skewness, s.kurtosis);
  close_csv(f, path);
}

void write_difference_csv(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<PairedDifference>>>& scenarios) {
  std::FILE* f = open_csv(path);
  std::fputs("scenario,quantity,mean_diff,std_diff,std_error\n", f);
  for (const auto& [name, diffs] : scenarios)
    for (const auto& d : diffs)
      std::fprintf(f, "%s,%s,%.12g,%.12g,%.12g\n", name.c_str(), d.quantity.c_str(), d.mean, d.std, d.std_error);
  close_csv(f, path);
}

}  // namespace srec
