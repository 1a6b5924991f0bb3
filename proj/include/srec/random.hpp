#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace srec {

/// Counter-based seed derivation: SplitMix64 over (master, stream, index).
/// Every random stream in the library is keyed this way, so results depend
/// only on the master seed and never on scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

enum class Stream : std::uint64_t {
  SolverNoise = 1,
  Path = 2,
  Adjoint = 3,
};

/// Standard normal inverse CDF.
double normal_quantile(double p);
double normal_cdf(double x);
double normal_pdf(double x);

/// Standard normal variates by inversion of 53-bit uniforms. Inversion keeps
/// the stream bit-reproducible across standard library implementations.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
  double uniform();
  double operator()() { return normal_quantile(uniform()); }

 private:
  std::mt19937_64 engine_;
};

/// Fixed draws (eps for generation noise, z for price noise) reused for every
/// grid node and every candidate control at one decision step.
///
/// Each marginal is Latin-hypercube stratified: draw k sits in its own
/// probability stratum [pi(k)/n, (pi(k)+1)/n) with independent permutations
/// for eps and z.
struct NoiseBlock {
  Eigen::VectorXd eps;
  Eigen::VectorXd z;

  Eigen::Index size() const { return eps.size(); }
};

NoiseBlock make_noise_block(std::uint64_t master_seed, int step_in_period, int n_scenarios);

}  // namespace srec
