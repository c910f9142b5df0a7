#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "mglab/numerics/tensor.hpp"

namespace mglab {

using Rng = std::mt19937_64;

/// Derives an independent generator for a named purpose ("scene", "init",
/// "noise", ...) from one experiment seed.
inline Rng substream(std::uint64_t seed, std::string_view name)
{
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

template <typename T>
Tensor<T> random_uniform(Dims dims, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(std::move(dims));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
Tensor<T> random_normal(Dims dims, Rng& rng, double stddev = 1.0)
{
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor<T> t(std::move(dims));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

/// Kaiming-uniform for a ReLU layer with the given fan-in.
template <typename T>
Tensor<T> kaiming_uniform(Dims dims, std::size_t fan_in, Rng& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return random_uniform<T>(std::move(dims), rng, -bound, bound);
}

}  // namespace mglab
