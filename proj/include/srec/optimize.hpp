#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>

namespace srec {

struct Box2 {
  Eigen::Vector2d lo;
  Eigen::Vector2d hi;

  Eigen::Vector2d project(const Eigen::Vector2d& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
  bool on_boundary(const Eigen::Vector2d& x, double tol) const {
    return ((x - lo).array().abs() <= tol).any() || ((hi - x).array().abs() <= tol).any();
  }
};

struct MinimizeResult {
  Eigen::Vector2d x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead on a box in two variables. Trial points are projected onto
/// the box. Terminates when every vertex lies within `xtol` (max-norm) of the
/// best one, or when all three vertex values agree to within `ftol` (a flat
/// direction would otherwise never contract).
template <typename Objective>
MinimizeResult nelder_mead_box(Objective&& f, const Eigen::Vector2d& start, double step, const Box2& box,
                               double xtol, int max_iterations, double ftol = 0.0) {
  std::array<Eigen::Vector2d, 3> x;
  std::array<double, 3> fx{};
  MinimizeResult out;

  auto eval = [&](const Eigen::Vector2d& p) {
    ++out.evaluations;
    return f(p);
  };

  x[0] = box.project(start);
  for (int d = 0; d < 2; ++d) {
    Eigen::Vector2d p = x[0];
    p[d] += step;
    if (p[d] > box.hi[d]) p[d] = x[0][d] - step;
    x[d + 1] = box.project(p);
  }
  for (int k = 0; k < 3; ++k) fx[k] = eval(x[k]);

  for (int it = 0; it < max_iterations; ++it) {
    // order: best, middle, worst
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    std::array<Eigen::Vector2d, 3> xs{x[idx[0]], x[idx[1]], x[idx[2]]};
    std::array<double, 3> fs{fx[idx[0]], fx[idx[1]], fx[idx[2]]};
    x = xs;
    fx = fs;

    const double spread = std::max((x[1] - x[0]).cwiseAbs().maxCoeff(), (x[2] - x[0]).cwiseAbs().maxCoeff());
    if (spread <= xtol || fx[2] - fx[0] <= ftol) {
      out.converged = true;
      break;
    }

    const Eigen::Vector2d centroid = 0.5 * (x[0] + x[1]);
    const Eigen::Vector2d xr = box.project(centroid + (centroid - x[2]));
    const double fr = eval(xr);

    if (fr < fx[0]) {
      const Eigen::Vector2d xe = box.project(centroid + 2.0 * (centroid - x[2]));
      const double fe = eval(xe);
      if (fe < fr) {
        x[2] = xe;
        fx[2] = fe;
      } else {
        x[2] = xr;
        fx[2] = fr;
      }
      continue;
    }
    if (fr < fx[1]) {
      x[2] = xr;
      fx[2] = fr;
      continue;
    }
    const bool outside = fr < fx[2];
    const Eigen::Vector2d xc = outside ? box.project(centroid + 0.5 * (xr - centroid))
                                       : box.project(centroid + 0.5 * (x[2] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fx[2])) {
      x[2] = xc;
      fx[2] = fc;
      continue;
    }
    for (int k = 1; k < 3; ++k) {
      x[k] = x[0] + 0.5 * (x[k] - x[0]);
      fx[k] = eval(x[k]);
    }
  }

  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (fx[k] < fx[best]) best = k;
  out.x = x[best];
  out.f = fx[best];
  return out;
}

}  // namespace srec
