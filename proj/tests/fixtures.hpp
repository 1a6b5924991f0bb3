#pragma once

#include "srec/solver.hpp"

namespace srec::test {

/// Base economics on a coarse grid, solved once per test binary.
inline SolveConfig small_config() {
  SolveConfig cfg;
  cfg.grid = {41, 16};
  return cfg;
}

inline const Policy& small_policy() {
  static const Policy p = solve(ComplianceSpec{}, ModelParams{}, small_config());
  return p;
}

}  // namespace srec::test
