#include "srec/policy_io.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ios>

#include "srec/config.hpp"

namespace srec {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic{'S', 'R', 'E', 'C', 'P', 'O', 'L', '\0'};

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> buf;
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw PolicyFormatError("policy file truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

void put_surface(std::ostream& out, const Surface& s) {
  const double* p = s.data();
  for (Eigen::Index i = 0; i < s.size(); ++i) put_le(out, std::bit_cast<std::uint64_t>(p[i]));
}

Surface get_surface(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Surface s(rows, cols);
  double* p = s.data();
  for (Eigen::Index i = 0; i < s.size(); ++i) p[i] = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return s;
}

}  // namespace

void write_policy(const std::string& path, const Policy& policy) {
  const json header{{"compliance", to_json(policy.spec)},
                    {"model", to_json(policy.params)},
                    {"solve", to_json(policy.cfg)},
                    {"b_nodes", policy.grid.nb()},
                    {"s_nodes", policy.grid.ns()},
                    {"steps", policy.steps()},
                    {"seed", policy.cfg.seed},
                    {"config_hash", policy.config_hash}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot open " + path + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kPolicyFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (int k = 0; k < policy.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    put_surface(out, policy.value[ku]);
    put_surface(out, policy.g_opt[ku]);
    put_surface(out, policy.gamma_opt[ku]);
  }
  put_surface(out, policy.value.back());
  out.flush();
  if (!out) throw std::ios_base::failure("write failed for " + path);
}

Policy read_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open policy file " + path);

  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw PolicyFormatError(path + ": not a policy file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kPolicyFormatVersion)
    throw PolicyFormatError(path + ": unsupported format version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(in);
  if (len > (1ull << 30)) throw PolicyFormatError(path + ": header length out of range");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw PolicyFormatError(path + ": policy file truncated");

  Policy pol;
  try {
    const json header = json::parse(text);
    pol.spec = compliance_from_json(header.at("compliance"));
    pol.params = model_from_json(header.at("model"));
    pol.cfg = solve_from_json(header.at("solve"));
    pol.config_hash = header.at("config_hash").get<std::string>();
    pol.spec.validate();
    pol.params.validate();
    pol.grid = build_grid(pol.spec, pol.params, pol.cfg.grid);
    if (header.at("b_nodes").get<Eigen::Index>() != pol.grid.nb() ||
        header.at("s_nodes").get<Eigen::Index>() != pol.grid.ns() ||
        header.at("steps").get<int>() != pol.spec.total_steps())
      throw PolicyFormatError(path + ": header dimensions disagree with its own settings");
  } catch (const PolicyFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw PolicyFormatError(path + ": bad header: " + e.what());
  }

  const int K = pol.spec.total_steps();
  const Eigen::Index nb = pol.grid.nb(), ns = pol.grid.ns();
  for (int k = 0; k < K; ++k) {
    pol.value.push_back(get_surface(in, nb, ns));
    pol.g_opt.push_back(get_surface(in, nb, ns));
    pol.gamma_opt.push_back(get_surface(in, nb, ns));
  }
  pol.value.push_back(get_surface(in, nb, ns));
  if (in.peek() != std::char_traits<char>::eof()) throw PolicyFormatError(path + ": trailing bytes");

  for (int k = 0; k < K; ++k) {
    pol.times.push_back(k * pol.spec.dt());
    if (pol.spec.is_compliance_step(k)) pol.compliance_indices.push_back(k);
  }
  return pol;
}

void export_policy_csv(const std::string& path, const Policy& policy) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::ios_base::failure("cannot open " + path + " for writing");
  std::fputs("t_idx,b,S,V,g_opt,gamma_opt\n", f);
  const auto& g = policy.grid;
  for (int k = 0; k < policy.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    for (Eigen::Index i = 0; i < g.nb(); ++i)
      for (Eigen::Index j = 0; j < g.ns(); ++j)
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", k, g.b_nodes[i], g.s_nodes[j], policy.value[ku](i, j),
                     policy.g_opt[ku](i, j), policy.gamma_opt[ku](i, j));
  }
  const bool failed = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || failed) throw std::ios_base::failure("write failed for " + path);
}

}  // namespace srec
