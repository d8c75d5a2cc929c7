#include "sparsespike/seeding.hpp"

#include <array>
#include <random>

namespace sparsespike {

namespace {

// 64-bit FNV-1a; only used to fold the role tag into the seed material.
std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t seed_derivation(std::uint64_t master_seed, std::uint64_t instance_index, std::string_view role_tag) {
  const std::uint64_t tag = fnv1a(role_tag);
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(instance_index), static_cast<std::uint32_t>(instance_index >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Rng derived_stream(std::uint64_t master_seed, std::uint64_t instance_index, std::string_view role_tag) {
  return Rng(seed_derivation(master_seed, instance_index, role_tag));
}

}  // namespace sparsespike
