#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "srec/solver.hpp"

namespace srec {

inline constexpr std::uint32_t kPolicyFormatVersion = 1;

/// Unreadable, truncated or incompatible policy file.
class PolicyFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary container: 8-byte magic, u32 format version, u64 header length,
/// JSON header, then V, g, gamma for every decision step and the boundary V,
/// each a row-major block of little-endian f64.
void write_policy(const std::string& path, const Policy& policy);
Policy read_policy(const std::string& path);

/// One row per (step, b, S) node: t_idx,b,S,V,g_opt,gamma_opt. Values carry
/// 17 significant digits so the export is lossless.
void export_policy_csv(const std::string& path, const Policy& policy);

}  // namespace srec
