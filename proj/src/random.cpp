#include "srec/random.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace srec {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Fisher-Yates with an explicit bounded draw; std::shuffle and
// std::uniform_int_distribution are not specified bit-for-bit.
void permute(std::vector<int>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r = rng();
    while (r >= limit) r = rng();
    std::swap(v[i - 1], v[static_cast<std::size_t>(r % bound)]);
  }
}

double unit_open(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

double NormalStream::uniform() { return unit_open(engine_()); }

NoiseBlock make_noise_block(std::uint64_t master_seed, int step_in_period, int n_scenarios) {
  if (n_scenarios < 1) throw std::invalid_argument("noise block: n_scenarios must be >= 1");
  std::mt19937_64 rng(derive_seed(master_seed, static_cast<std::uint64_t>(Stream::SolverNoise),
                                  static_cast<std::uint64_t>(step_in_period)));
  const double n = n_scenarios;
  auto stratified = [&](Eigen::VectorXd& out) {
    std::vector<int> order(static_cast<std::size_t>(n_scenarios));
    std::iota(order.begin(), order.end(), 0);
    permute(order, rng);
    out.resize(n_scenarios);
    for (int k = 0; k < n_scenarios; ++k) out[k] = normal_quantile((order[static_cast<std::size_t>(k)] + unit_open(rng())) / n);
  };
  NoiseBlock block;
  stratified(block.eps);
  stratified(block.z);
  return block;
}

}  // namespace srec
