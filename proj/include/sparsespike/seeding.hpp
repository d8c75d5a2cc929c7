#pragma once

#include <cstdint>
#include <string_view>

#include "sparsespike/ensembles.hpp"

namespace sparsespike {

/// Deterministic per-task stream seed from (master seed, instance index, role tag).
/// Equal triples give equal seeds; distinct tags give unrelated streams.
std::uint64_t seed_derivation(std::uint64_t master_seed, std::uint64_t instance_index, std::string_view role_tag);

/// Engine seeded from seed_derivation(master_seed, instance_index, role_tag).
Rng derived_stream(std::uint64_t master_seed, std::uint64_t instance_index, std::string_view role_tag);

}  // namespace sparsespike
