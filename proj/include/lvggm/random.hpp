#pragma once

#include <cstdint>
#include <random>

#include "lvggm/linalg.hpp"

namespace lvggm {

/// splitmix64 finalizer; used to derive independent stream seeds from a master
/// seed and a small tuple of integers (iteration, role, trial, ...).
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) noexcept
{
    return mix_seed(mix_seed(mix_seed(master ^ mix_seed(a)) ^ mix_seed(b + 0x51ull)) ^ mix_seed(c + 0xa3ull));
}

using Rng = std::mt19937_64;

/// rows x cols standard normal matrix, filled column by column.
inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = normal(rng);
    return m;
}

inline Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed)
{
    Rng rng(seed);
    return gaussian_matrix(rows, cols, rng);
}

} // namespace lvggm
