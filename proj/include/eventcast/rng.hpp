#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace eventcast {

/// Derives an independent 64-bit seed for a labelled substream of a master seed.
///
/// Labels name the consumer ("simulation", "noise-train", "init", ...) and
/// `index` distinguishes repetitions, so changing one substream never
/// perturbs another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
    return Rng(derive_seed(master, label, index));
}

}  // namespace eventcast
