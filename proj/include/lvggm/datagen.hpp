#pragma once

// Synthetic ground truth (diagonal S*, rank-r Gaussian L*), Gaussian sampling
// from N(0, (S* + L*)^-1), and sample covariances from data files.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lvggm/linalg.hpp"
#include "lvggm/matrix_io.hpp"
#include "lvggm/random.hpp"

namespace lvggm {

struct ModelParams {
    /// S* diagonal entries are drawn uniformly from [diag_low, diag_high].
    double diag_low = 1.0;
    double diag_high = 2.0;
    /// L* = G G^T rescaled to this spectral norm.
    double lstar_spectral_norm = 1.0;
    /// Required lower bound on lambda_min(S* + L*); S* is shifted up to meet it.
    double min_eigen_margin = 0.5;

    void validate() const
    {
        if (!(diag_low > 0.0) || !(diag_high >= diag_low) || !std::isfinite(diag_high))
            throw GenerationError("diagonal range must satisfy 0 < low <= high");
        if (!(lstar_spectral_norm > 0.0) || !std::isfinite(lstar_spectral_norm))
            throw GenerationError("L* spectral norm must be positive");
        if (!(min_eigen_margin >= 0.0) || !std::isfinite(min_eigen_margin))
            throw GenerationError("eigenvalue margin must be nonnegative");
    }
};

struct SyntheticModel {
    SymMatrix s_star;
    LowRankFactor l_star;
    SymMatrix theta_star;
    SymMatrix sigma_star;
    std::uint64_t seed = 0;
    Index rank = 0;
    ModelParams params;

    Index dim() const noexcept { return s_star.dim(); }
};

/// 5% of p, rounded up.
constexpr Index auto_rank(Index p) noexcept { return (5 * p + 99) / 100; }

inline SyntheticModel gen_model(Index p, std::optional<Index> rank, std::uint64_t seed, const ModelParams& params = {})
{
    params.validate();
    if (p < 2)
        throw GenerationError("p must be at least 2, got " + std::to_string(p));
    const Index r = rank.value_or(auto_rank(p));
    if (r < 1 || r >= p)
        throw GenerationError("rank must satisfy 1 <= r < p, got r=" + std::to_string(r) + ", p=" + std::to_string(p));

    Matrix g = gaussian_matrix(p, r, derive_seed(seed, 1));
    const double top = sym_evd(SymMatrix(Matrix(g.transpose() * g))).eigenvalues(0);
    g *= std::sqrt(params.lstar_spectral_norm / top);

    Rng rng(derive_seed(seed, 2));
    std::uniform_real_distribution<double> unif(params.diag_low, params.diag_high);
    Vector diag(p);
    for (Index i = 0; i < p; ++i)
        diag(i) = params.diag_low == params.diag_high ? params.diag_low : unif(rng);

    LowRankFactor l_star(std::move(g));
    SymMatrix l_dense = l_star.materialize();
    SymMatrix theta(Matrix(Matrix(diag.asDiagonal()) + l_dense.mat()));
    const double lam_min = sym_evd(theta).eigenvalues.minCoeff();
    if (lam_min < params.min_eigen_margin) {
        diag.array() += params.min_eigen_margin - lam_min;
        theta = SymMatrix(Matrix(Matrix(diag.asDiagonal()) + l_dense.mat()));
    }

    SyntheticModel m;
    m.s_star = SymMatrix::diagonal(diag);
    m.l_star = std::move(l_star);
    try {
        const CholeskyFactor chol(theta);
        m.sigma_star = SymMatrix(chol.inverse());
    } catch (const NotPositiveDefinite&) {
        throw GenerationError("generated S* + L* is not positive definite");
    }
    m.theta_star = std::move(theta);
    m.seed = seed;
    m.rank = r;
    m.params = params;
    return m;
}

namespace detail {

/// Calls `sink(block)` with consecutive p x m blocks of samples (one sample per
/// column) drawn as chol(Sigma*) z. Sample i always uses the same normals
/// regardless of the block size.
template <class Sink>
void for_each_sample_block(const SyntheticModel& model, Index n, std::uint64_t seed, Sink&& sink)
{
    if (n < 1)
        throw ArgumentError("sample count must be positive");
    const Index p = model.dim();
    const Eigen::LLT<Matrix> llt(model.sigma_star.mat());
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("Sigma* is not positive definite");
    const Matrix lower = llt.matrixL();
    Rng rng(derive_seed(seed, 3));
    constexpr Index kBlock = 2048;
    for (Index start = 0; start < n; start += kBlock) {
        const Index m = std::min(kBlock, n - start);
        const Matrix z = gaussian_matrix(p, m, rng);
        sink(Matrix(lower.triangularView<Eigen::Lower>() * z));
    }
}

} // namespace detail

/// n x p matrix whose rows are i.i.d. N(0, Sigma*) draws.
inline Matrix draw_samples(const SyntheticModel& model, Index n, std::uint64_t seed)
{
    Matrix out(n, model.dim());
    Index row = 0;
    detail::for_each_sample_block(model, n, seed, [&](const Matrix& block) {
        out.middleRows(row, block.cols()) = block.transpose();
        row += block.cols();
    });
    return out;
}

/// (1/n) sum_i x_i x_i^T for x_i ~ N(0, Sigma*); the same draws as draw_samples().
inline SymMatrix sample_covariance(const SyntheticModel& model, Index n, std::uint64_t seed)
{
    const Index p = model.dim();
    Matrix acc = Matrix::Zero(p, p);
    detail::for_each_sample_block(model, n, seed,
                                  [&](const Matrix& block) { acc.selfadjointView<Eigen::Lower>().rankUpdate(block); });
    acc = acc.selfadjointView<Eigen::Lower>();
    acc /= static_cast<double>(n);
    return SymMatrix(std::move(acc));
}

/// (1/n) X^T X for an n x p samples matrix, optionally after removing column means.
inline SymMatrix covariance_from_samples(const Matrix& samples, bool center)
{
    const Index n = samples.rows();
    if (n < 1 || samples.cols() < 1)
        throw InsufficientData("samples matrix is empty");
    Matrix x = samples;
    if (center)
        x.rowwise() -= x.colwise().mean();
    Matrix c = Matrix::Zero(x.cols(), x.cols());
    c.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    c = c.selfadjointView<Eigen::Lower>();
    c /= static_cast<double>(n);
    return SymMatrix(std::move(c));
}

struct DatasetOptions {
    bool center = true;
    bool skip_header = false;
    /// Zero-based column subset; all columns when empty.
    std::vector<Index> columns;
};

struct Dataset {
    SymMatrix covariance;
    Index n = 0;
    Index p = 0;
};

inline Dataset load_dataset(const std::filesystem::path& path, const DatasetOptions& options = {})
{
    Matrix x = io::read_matrix(path, options.skip_header);
    if (!options.columns.empty()) {
        Matrix sub(x.rows(), static_cast<Index>(options.columns.size()));
        for (std::size_t j = 0; j < options.columns.size(); ++j) {
            const Index c = options.columns[j];
            if (c < 0 || c >= x.cols())
                throw ArgumentError("column " + std::to_string(c) + " out of range for " + std::to_string(x.cols()) +
                                    " columns");
            sub.col(static_cast<Index>(j)) = x.col(c);
        }
        x = std::move(sub);
    }
    Dataset d;
    d.n = x.rows();
    d.p = x.cols();
    d.covariance = covariance_from_samples(x, options.center);
    return d;
}

} // namespace lvggm
