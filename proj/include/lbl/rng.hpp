#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace lbl {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; the building block of all seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based seed split: the result depends only on the parent seed and
/// the path, so adding new children never perturbs existing ones.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept;

/// Stable 64-bit hash of a label, used to name RNG streams.
std::uint64_t stream_id(std::string_view label) noexcept;

Engine make_engine(std::uint64_t seed);

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
/// Used instead of std::uniform_real_distribution so draws are identical
/// across standard library implementations.
double uniform01(Engine& engine);

/// Standard normal via Box-Muller on uniform01 (no cached state).
double standard_normal(Engine& engine);

/// Uniform integer in [0, n) by rejection sampling.
std::uint64_t uniform_index(Engine& engine, std::uint64_t n);

}  // namespace lbl
