#pragma once

// Test-only reference implementations that share no code with the library
// (plain std::vector arithmetic), plus random instance generators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "lvggm/linalg.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense from_eigen(const lvggm::Matrix& m)
{
    Dense d(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return d;
}

inline lvggm::Matrix to_eigen(const Dense& d)
{
    lvggm::Matrix m(static_cast<Eigen::Index>(d.size()), d.empty() ? 0 : static_cast<Eigen::Index>(d[0].size()));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d[i][j];
    return m;
}

struct EigenPairs {
    std::vector<double> values;       // descending
    std::vector<std::vector<double>> vectors; // vectors[k] is the k-th eigenvector
};

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
inline EigenPairs jacobi_eigen(Dense a)
{
    const std::size_t n = a.size();
    Dense v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                total += a[i][j] * a[i][j];
                if (i != j)
                    off += a[i][j] * a[i][j];
            }
        if (off <= 1e-30 * std::max(total, 1e-300))
            break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0)
                    continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p];
                    const double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
    EigenPairs out;
    for (std::size_t k : order) {
        out.values.push_back(a[k][k]);
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i)
            col[i] = v[i][k];
        out.vectors.push_back(std::move(col));
    }
    return out;
}

/// Gauss-Jordan inverse with partial pivoting.
inline Dense inverse(Dense a)
{
    const std::size_t n = a.size();
    Dense inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        inv[i][i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col]))
                piv = r;
        std::swap(a[col], a[piv]);
        std::swap(inv[col], inv[piv]);
        const double d = a[col][col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col)
                continue;
            const double f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

/// log |det a| by Gaussian elimination with partial pivoting.
inline double log_abs_det(Dense a)
{
    const std::size_t n = a.size();
    double acc = 0.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col]))
                piv = r;
        std::swap(a[col], a[piv]);
        acc += std::log(std::abs(a[col][col]));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t j = col; j < n; ++j)
                a[r][j] -= f * a[col][j];
        }
    }
    return acc;
}

/// Dense NLL -log det(S + L) + <S + L, C> straight from the definition.
inline double nll(const lvggm::Matrix& s, const lvggm::Matrix& l, const lvggm::Matrix& c)
{
    const lvggm::Matrix theta = s + l;
    double inner = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j)
            inner += theta(i, j) * c(i, j);
    return -log_abs_det(from_eigen(theta)) + inner;
}

/// Brute-force PSD rank-r projection: full Jacobi EVD, clamp, truncate.
inline lvggm::Matrix psd_rank_project(const lvggm::Matrix& a, std::size_t r)
{
    const EigenPairs e = jacobi_eigen(from_eigen(0.5 * (a + a.transpose())));
    const std::size_t n = e.values.size();
    lvggm::Matrix out = lvggm::Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < std::min(r, n); ++k) {
        const double lam = std::max(0.0, e.values[k]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += lam * e.vectors[k][i] * e.vectors[k][j];
    }
    return out;
}

/// Singular values of a square matrix as sqrt(eig(A^T A)), descending.
inline std::vector<double> singular_values(const lvggm::Matrix& a)
{
    const EigenPairs e = jacobi_eigen(from_eigen(a.transpose() * a));
    std::vector<double> s;
    for (double v : e.values)
        s.push_back(std::sqrt(std::max(0.0, v)));
    return s;
}

} // namespace oracle

namespace gen {

using lvggm::Index;
using lvggm::Matrix;
using lvggm::Vector;

struct Source {
    std::mt19937_64 rng;
    explicit Source(std::uint64_t seed) : rng(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

    Matrix gaussian(Index rows, Index cols)
    {
        std::normal_distribution<double> n(0.0, 1.0);
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i)
                m(i, j) = n(rng);
        return m;
    }

    Matrix symmetric(Index p)
    {
        const Matrix g = gaussian(p, p);
        return 0.5 * (g + g.transpose());
    }

    /// G G^T / p + shift I, well conditioned for shift of order one.
    Matrix spd(Index p, double shift = 1.0)
    {
        const Matrix g = gaussian(p, p);
        return g * g.transpose() / static_cast<double>(p) + shift * Matrix::Identity(p, p);
    }

    Matrix positive_diagonal(Index p, double lo = 1.0, double hi = 2.0)
    {
        Vector d(p);
        for (Index i = 0; i < p; ++i)
            d(i) = uniform(lo, hi);
        return d.asDiagonal();
    }

    /// Sample covariance of m Gaussian draws with covariance `sigma`.
    Matrix wishart_covariance(const Matrix& sigma, Index m)
    {
        const Matrix chol = Eigen::LLT<Matrix>(sigma).matrixL();
        const Matrix x = chol * gaussian(sigma.rows(), m);
        return x * x.transpose() / static_cast<double>(m);
    }
};

} // namespace gen
