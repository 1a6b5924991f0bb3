#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "srec/model.hpp"

namespace srec {

/// Values on the (b, S) grid, one row per inventory node (b-major).
template <typename Scalar>
using SurfaceT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Surface = SurfaceT<double>;

/// Node counts for the state grid. A zero S count derives it from the
/// per-step price volatility.
struct GridOptions {
  int b_nodes = 401;
  int s_nodes = 0;

  friend bool operator==(const GridOptions&, const GridOptions&) = default;
};

class DegenerateGrid : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform tensor grid on [0, 2R] x [0, P].
template <typename Scalar>
struct StateGridT {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector b_nodes;
  Vector s_nodes;
  Scalar db = 0;
  Scalar ds = 0;

  Eigen::Index nb() const { return b_nodes.size(); }
  Eigen::Index ns() const { return s_nodes.size(); }
  Scalar b_max() const { return b_nodes[nb() - 1]; }
  Scalar s_max() const { return s_nodes[ns() - 1]; }

  SurfaceT<Scalar> zeros() const { return SurfaceT<Scalar>::Zero(nb(), ns()); }

  bool same_shape(const SurfaceT<Scalar>& s) const { return s.rows() == nb() && s.cols() == ns(); }

  friend bool operator==(const StateGridT& a, const StateGridT& b) {
    return a.b_nodes == b.b_nodes && a.s_nodes == b.s_nodes && a.db == b.db && a.ds == b.ds;
  }
};
using StateGrid = StateGridT<double>;

/// Price node count implied by a target spacing of sqrt(3 dt) * sigma: the
/// count is rounded up so both 0 and P are nodes.
inline int price_node_count(const ComplianceSpec& spec, const ModelParams& params) {
  if (!(spec.penalty > 0.0)) throw DegenerateGrid("grid: penalty must be > 0 for a price axis");
  if (!(params.sigma > 0.0))
    throw DegenerateGrid("grid: sigma = 0 gives no price spacing; set grid.s_nodes explicitly");
  const double target = std::sqrt(3.0 * spec.dt()) * params.sigma;
  return static_cast<int>(std::ceil(spec.penalty / target)) + 1;
}

template <typename Scalar = double>
StateGridT<Scalar> build_grid(const ComplianceSpec& spec, const ModelParams& params, const GridOptions& opt = {}) {
  if (opt.b_nodes < 2) throw DegenerateGrid("grid.b_nodes: need at least 2 nodes");
  if (!(spec.requirement > 0.0)) throw DegenerateGrid("grid: requirement must be > 0 for an inventory axis");
  if (!(spec.penalty > 0.0)) throw DegenerateGrid("grid: penalty must be > 0 for a price axis");
  const int ns = opt.s_nodes > 0 ? opt.s_nodes : price_node_count(spec, params);
  if (ns < 2) throw DegenerateGrid("grid.s_nodes: need at least 2 nodes");

  StateGridT<Scalar> g;
  const Scalar b_hi = Scalar(2) * Scalar(spec.requirement);
  const Scalar s_hi = Scalar(spec.penalty);
  g.b_nodes.resize(opt.b_nodes);
  g.s_nodes.resize(ns);
  for (int i = 0; i < opt.b_nodes; ++i) g.b_nodes[i] = b_hi * Scalar(i) / Scalar(opt.b_nodes - 1);
  for (int j = 0; j < ns; ++j) g.s_nodes[j] = s_hi * Scalar(j) / Scalar(ns - 1);
  g.db = b_hi / Scalar(opt.b_nodes - 1);
  g.ds = s_hi / Scalar(ns - 1);
  return g;
}

/// Bilinear lookup into a surface sampled on a uniform grid. Queries outside
/// the grid are clamped to the boundary.
template <typename Scalar>
class BilinearSampler {
 public:
  BilinearSampler(const SurfaceT<Scalar>& surface, const StateGridT<Scalar>& grid)
      : data_(surface.data()),
        nb_(grid.nb()),
        ns_(grid.ns()),
        b_hi_(grid.b_max()),
        s_hi_(grid.s_max()),
        inv_db_(Scalar(1) / grid.db),
        inv_ds_(Scalar(1) / grid.ds) {
    if (!grid.same_shape(surface)) throw std::invalid_argument("interp: surface does not match grid dimensions");
  }

  Scalar operator()(Scalar b, Scalar s) const {
    b = std::clamp(b, Scalar(0), b_hi_);
    s = std::clamp(s, Scalar(0), s_hi_);
    const Scalar pb = b * inv_db_;
    const Scalar ps = s * inv_ds_;
    Eigen::Index i = std::min(static_cast<Eigen::Index>(pb), nb_ - 2);
    Eigen::Index j = std::min(static_cast<Eigen::Index>(ps), ns_ - 2);
    const Scalar wb = pb - Scalar(i);
    const Scalar ws = ps - Scalar(j);
    const Scalar* r0 = data_ + i * ns_ + j;
    const Scalar* r1 = r0 + ns_;
    const Scalar lo = (Scalar(1) - ws) * r0[0] + ws * r0[1];
    const Scalar hi = (Scalar(1) - ws) * r1[0] + ws * r1[1];
    return (Scalar(1) - wb) * lo + wb * hi;
  }

 private:
  const Scalar* data_;
  Eigen::Index nb_;
  Eigen::Index ns_;
  Scalar b_hi_;
  Scalar s_hi_;
  Scalar inv_db_;
  Scalar inv_ds_;
};

template <typename Scalar>
Scalar interp(const SurfaceT<Scalar>& surface, const StateGridT<Scalar>& grid, Scalar b, Scalar s) {
  return BilinearSampler<Scalar>(surface, grid)(b, s);
}

}  // namespace srec
