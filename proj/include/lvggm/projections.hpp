#pragma once

// Low-rank projections: the exact PSD rank-r projection and the approximate
// head/tail projections built on randomized Block Krylov SVD or on Lanczos
// with full reorthogonalization.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>

#include "lvggm/linalg.hpp"
#include "lvggm/random.hpp"

namespace lvggm {

enum class ProjectionBackend { exact, block_krylov, lanczos };

inline const char* to_string(ProjectionBackend b)
{
    switch (b) {
    case ProjectionBackend::exact: return "exact";
    case ProjectionBackend::block_krylov: return "block-krylov";
    case ProjectionBackend::lanczos: return "lanczos";
    }
    return "?";
}

struct ProjectionConfig {
    /// Number of Krylov blocks; 0 selects default_krylov_depth().
    int krylov_depth = 0;
    /// Krylov block width; 0 uses the target rank.
    int block_size = 0;
    std::uint64_t seed = 0;
    /// c_T > 1 in ||A - P_W A||_F <= c_T ||A - A_r||_F.
    double tail_constant = 1.1;
    /// 0 < c_H < 1 in ||P_V A||_F >= c_H ||A_k||_F.
    double head_constant = 0.9;
    ProjectionBackend backend = ProjectionBackend::block_krylov;
    /// Lanczos iterations; 0 selects min(p, max(30, 3k)).
    int lanczos_steps = 0;
    int max_retries = 3;

    void validate() const
    {
        if (!(tail_constant > 1.0))
            throw ArgumentError("tail constant must exceed 1");
        if (!(head_constant > 0.0 && head_constant < 1.0))
            throw ArgumentError("head constant must lie in (0, 1)");
        if (krylov_depth < 0 || block_size < 0 || lanczos_steps < 0 || max_retries < 0)
            throw ArgumentError("projection depth, block size, Lanczos steps and retries must be nonnegative");
    }
};

/// max(7, ceil(log2 p)) blocks, reduced so the Krylov basis never exceeds
/// max(block, p/2) columns; past that point a dense eigendecomposition is cheaper.
inline int default_krylov_depth(Index p, Index block)
{
    const int log_p = p > 1 ? static_cast<int>(std::bit_width(static_cast<std::uint64_t>(p - 1))) : 1;
    const int depth = std::max(7, log_p);
    if (block <= 0)
        return depth;
    const Index cap = std::max<Index>(1, std::max(block, p / 2) / block);
    return static_cast<int>(std::min<Index>(depth, cap));
}

inline bool within_tail_bound(double residual, double best_residual, const ProjectionConfig& cfg)
{
    return residual <= cfg.tail_constant * best_residual + 1e-12 * std::max(1.0, residual);
}

inline bool within_head_bound(double captured, double best_captured, const ProjectionConfig& cfg)
{
    return captured >= cfg.head_constant * best_captured;
}

/// Column-orthonormal p x k basis.
struct Subspace {
    Matrix basis;
    /// Fewer than k directions were found; the rest are random orthonormal padding.
    bool degraded = false;
    /// The Krylov or Lanczos recurrence terminated early.
    bool breakdown = false;

    Index dim() const noexcept { return basis.rows(); }
    Index size() const noexcept { return basis.cols(); }
};

/// A basis together with the Rayleigh quotients z_i^T A z_i (symmetric
/// operators) or singular value estimates (general matrices), ordered by
/// decreasing magnitude.
struct RitzPairs {
    Subspace subspace;
    Vector values;
};

template <class Op>
concept SymmetricOperator = requires(const Op& op, const Matrix& x) {
    { op.dim() } -> std::convertible_to<Index>;
    { op.apply(x) } -> std::convertible_to<Matrix>;
};

/// Dense symmetric matrix as an operator.
struct DenseSymmetricOperator {
    const Matrix& a;
    Index dim() const { return a.rows(); }
    Matrix apply(const Matrix& x) const { return a * x; }
};

/// U diag(w) U^T applied without materializing it.
struct LowRankSymmetricOperator {
    const Matrix& basis;
    const Vector& weights;
    Index dim() const { return basis.rows(); }
    Matrix apply(const Matrix& x) const
    {
        return basis * (weights.asDiagonal() * (basis.transpose() * x));
    }
};

namespace detail {

/// Orthonormal basis grown block by block with two passes of block
/// Gram-Schmidt and rank-revealing QR; directions whose residual falls below
/// `rel_tol` of the incoming block's scale are dropped.
class OrthoBasis {
public:
    OrthoBasis(Index rows, Index capacity) : q_(rows, std::min(rows, capacity)) {}

    Index cols() const noexcept { return cols_; }
    Index capacity() const noexcept { return q_.cols(); }
    bool full() const noexcept { return cols_ >= q_.cols(); }
    auto basis() const { return q_.leftCols(cols_); }

    Index append(Matrix block, double rel_tol = 1e-10)
    {
        if (block.cols() == 0 || full())
            return 0;
        const double scale = block.colwise().norm().maxCoeff();
        if (!(scale > 0.0) || !std::isfinite(scale))
            return 0;
        for (int pass = 0; pass < 2 && cols_ > 0; ++pass)
            block -= basis() * (basis().transpose() * block);
        Eigen::ColPivHouseholderQR<Matrix> qr(block);
        const auto r_diag = qr.matrixQR().diagonal().cwiseAbs();
        Index rank = 0;
        while (rank < r_diag.size() && r_diag(rank) > rel_tol * scale)
            ++rank;
        rank = std::min(rank, capacity() - cols_);
        if (rank == 0)
            return 0;
        Matrix fresh = qr.householderQ() * Matrix::Identity(q_.rows(), rank);
        if (cols_ > 0)
            fresh -= basis() * (basis().transpose() * fresh);
        // One more QR keeps the appended columns orthonormal to working precision.
        Eigen::HouseholderQR<Matrix> reqr(fresh);
        fresh = reqr.householderQ() * Matrix::Identity(q_.rows(), rank);
        q_.middleCols(cols_, rank) = fresh;
        cols_ += rank;
        return rank;
    }

private:
    Matrix q_;
    Index cols_ = 0;
};

/// Completes `basis` with random orthonormal directions up to k columns.
inline void pad_basis(OrthoBasis& basis, Index k, std::uint64_t seed)
{
    Rng rng(seed);
    int guard = 0;
    while (basis.cols() < k && guard++ < 16)
        basis.append(gaussian_matrix(basis.basis().rows(), k - basis.cols(), rng));
}

/// Rayleigh-Ritz on an orthonormal basis q with aq = A q; keeps the k pairs of
/// largest |theta|.
inline RitzPairs rayleigh_ritz(const Matrix& q, const Matrix& aq, Index k)
{
    Matrix t = q.transpose() * aq;
    t = 0.5 * (t + t.transpose()).eval();
    const Spectrum s = sym_evd(SymMatrix(std::move(t)));
    const auto keep = top_by_magnitude(s.eigenvalues, k);
    const Index kk = static_cast<Index>(keep.size());
    Matrix y(q.cols(), kk);
    Vector values(kk);
    for (Index j = 0; j < kk; ++j) {
        y.col(j) = s.eigenvectors.col(keep[static_cast<std::size_t>(j)]);
        values(j) = s.eigenvalues(keep[static_cast<std::size_t>(j)]);
    }
    RitzPairs out;
    out.subspace.basis = q * y;
    out.values = std::move(values);
    return out;
}

inline void check_target(Index k, Index p, const char* who)
{
    if (k < 1 || k > p)
        throw ArgumentError(std::string(who) + ": target rank " + std::to_string(k) + " outside [1, " +
                            std::to_string(p) + "]");
}

template <SymmetricOperator Op>
RitzPairs exact_eigenspace(const Op& op, Index k)
{
    const Index p = op.dim();
    const Matrix a = op.apply(Matrix::Identity(p, p));
    const Spectrum s = sym_evd(SymMatrix(a));
    const auto keep = top_by_magnitude(s.eigenvalues, k);
    RitzPairs out;
    out.subspace.basis.resize(p, k);
    out.values.resize(k);
    for (Index j = 0; j < k; ++j) {
        out.subspace.basis.col(j) = s.eigenvectors.col(keep[static_cast<std::size_t>(j)]);
        out.values(j) = s.eigenvalues(keep[static_cast<std::size_t>(j)]);
    }
    return out;
}

} // namespace detail

/// Randomized Block Krylov iteration on a symmetric operator: basis of
/// [A P, A^2 P, ..., A^q P] for a Gaussian start block P, followed by
/// Rayleigh-Ritz. Returns the k Ritz pairs of largest |theta|.
template <SymmetricOperator Op>
RitzPairs block_krylov_eigenspace(const Op& op, Index k, const ProjectionConfig& cfg)
{
    cfg.validate();
    const Index p = op.dim();
    detail::check_target(k, p, "block Krylov");
    const Index block = cfg.block_size > 0 ? std::min<Index>(cfg.block_size, p) : k;
    const int depth = cfg.krylov_depth > 0 ? cfg.krylov_depth : default_krylov_depth(p, block);
    const Index capacity = std::min<Index>(p, static_cast<Index>(depth) * block);

    bool breakdown = false;
    detail::OrthoBasis basis(p, std::max(capacity, k));
    Matrix applied(p, basis.capacity());
    Index n_applied = 0;

    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        basis = detail::OrthoBasis(p, std::max(capacity, k));
        n_applied = 0;
        breakdown = false;
        const Matrix start = gaussian_matrix(p, block, derive_seed(cfg.seed, 0x4b52594cull, attempt));
        Index added = basis.append(op.apply(start));
        for (int level = 1; level < depth && added > 0 && basis.cols() < capacity; ++level) {
            const Index first = basis.cols() - added;
            applied.middleCols(first, added) = op.apply(basis.basis().middleCols(first, added));
            n_applied = first + added;
            added = basis.append(applied.middleCols(first, added));
        }
        if (added == 0)
            breakdown = true;
        if (basis.cols() >= k)
            break;
    }

    Subspace meta;
    meta.breakdown = breakdown;
    if (basis.cols() < k) {
        meta.degraded = true;
        detail::pad_basis(basis, k, derive_seed(cfg.seed, 0x504144ull));
    }
    const Index m = basis.cols();
    if (n_applied < m)
        applied.middleCols(n_applied, m - n_applied) = op.apply(basis.basis().middleCols(n_applied, m - n_applied));
    RitzPairs out = detail::rayleigh_ritz(basis.basis(), applied.leftCols(m), k);
    out.subspace.degraded = meta.degraded;
    out.subspace.breakdown = meta.breakdown;
    return out;
}

/// Lanczos with full reorthogonalization from a seeded random start vector.
/// On breakdown (zero beta) the recurrence stops and any missing directions are
/// random orthonormal completions.
template <SymmetricOperator Op>
RitzPairs lanczos_eigenspace(const Op& op, Index k, const ProjectionConfig& cfg)
{
    cfg.validate();
    const Index p = op.dim();
    detail::check_target(k, p, "Lanczos");
    Index steps = cfg.lanczos_steps > 0 ? cfg.lanczos_steps : std::max<Index>(30, 3 * k);
    steps = std::min(steps, p);

    Matrix v(p, steps);
    Vector alpha = Vector::Zero(steps);
    Vector beta = Vector::Zero(steps);
    Vector x = gaussian_matrix(p, 1, derive_seed(cfg.seed, 0x4c414e43ull)).col(0);
    x.normalize();
    Index m = 0;
    bool breakdown = false;
    double scale = 0.0;
    for (Index j = 0; j < steps; ++j) {
        v.col(j) = x;
        m = j + 1;
        Vector w = op.apply(x);
        alpha(j) = x.dot(w);
        for (int pass = 0; pass < 2; ++pass)
            w -= v.leftCols(m) * (v.leftCols(m).transpose() * w);
        beta(j) = w.norm();
        scale = std::max({scale, std::abs(alpha(j)), beta(j)});
        if (j + 1 == steps)
            break;
        if (!(beta(j) > 1e-12 * scale)) {
            breakdown = true;
            break;
        }
        x = w / beta(j);
    }

    RitzPairs out;
    if (m >= k) {
        Matrix t = Matrix::Zero(m, m);
        for (Index j = 0; j < m; ++j) {
            t(j, j) = alpha(j);
            if (j + 1 < m)
                t(j, j + 1) = t(j + 1, j) = beta(j);
        }
        const Spectrum s = sym_evd(SymMatrix(std::move(t)));
        const auto keep = detail::top_by_magnitude(s.eigenvalues, k);
        Matrix y(m, k);
        out.values.resize(k);
        for (Index j = 0; j < k; ++j) {
            y.col(j) = s.eigenvectors.col(keep[static_cast<std::size_t>(j)]);
            out.values(j) = s.eigenvalues(keep[static_cast<std::size_t>(j)]);
        }
        out.subspace.basis = v.leftCols(m) * y;
    } else {
        detail::OrthoBasis basis(p, k);
        basis.append(v.leftCols(m));
        detail::pad_basis(basis, k, derive_seed(cfg.seed, 0x504144ull));
        const Matrix q = basis.basis();
        out = detail::rayleigh_ritz(q, op.apply(q), k);
        out.subspace.degraded = true;
    }
    out.subspace.breakdown = breakdown;
    return out;
}

/// Backend dispatch used by the solvers: k dominant (by |eigenvalue|) Ritz
/// pairs of a symmetric operator.
template <SymmetricOperator Op>
RitzPairs dominant_eigenspace(const Op& op, Index k, const ProjectionConfig& cfg)
{
    switch (cfg.backend) {
    case ProjectionBackend::exact: detail::check_target(k, op.dim(), "exact projection"); return detail::exact_eigenspace(op, k);
    case ProjectionBackend::block_krylov: return block_krylov_eigenspace(op, k, cfg);
    case ProjectionBackend::lanczos: return lanczos_eigenspace(op, k, cfg);
    }
    throw ArgumentError("unknown projection backend");
}

namespace detail {

/// Top-r eigenpairs with negative eigenvalues clamped to zero, in orthonormal form.
inline SymLowRank psd_project_eigen(const SymMatrix& a, Index r)
{
    check_rank(r, a.dim(), "psd_rank_r_project");
    const Spectrum s = sym_evd(a);
    Vector w = s.eigenvalues.head(r).cwiseMax(0.0);
    return SymLowRank(s.eigenvectors.leftCols(r), std::move(w));
}

} // namespace detail

/// Euclidean projection onto {rank <= r, PSD}: the r largest eigenpairs with
/// negative eigenvalues clamped at zero.
inline LowRankFactor psd_rank_r_project(const SymMatrix& a, Index r)
{
    return detail::psd_project_eigen(a, r).to_factor();
}

struct BkSvdResult {
    Subspace subspace;
    /// B = Z Z^T A.
    Matrix projected;
    /// Singular value estimates (general input) or signed Ritz values (symmetric input).
    Vector values;
};

/// Randomized Block Krylov SVD of a general square or rectangular matrix:
/// Z spans [A P, (A A^T) A P, ..., (A A^T)^(q-1) A P]'s top-r left singular directions.
inline BkSvdResult bk_svd(const Matrix& a, Index r, const ProjectionConfig& cfg)
{
    cfg.validate();
    const Index rows = a.rows();
    const Index cols = a.cols();
    detail::check_target(r, std::min(rows, cols), "bk_svd");
    const Index block = cfg.block_size > 0 ? std::min<Index>(cfg.block_size, cols) : r;
    const int depth = cfg.krylov_depth > 0 ? cfg.krylov_depth : default_krylov_depth(rows, block);
    const Index capacity = std::min<Index>(rows, static_cast<Index>(depth) * block);

    detail::OrthoBasis basis(rows, std::max(capacity, r));
    bool breakdown = false;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        basis = detail::OrthoBasis(rows, std::max(capacity, r));
        breakdown = false;
        const Matrix start = gaussian_matrix(cols, block, derive_seed(cfg.seed, 0x424b5356ull, attempt));
        Index added = basis.append(a * start);
        for (int level = 1; level < depth && added > 0 && basis.cols() < capacity; ++level) {
            const Index first = basis.cols() - added;
            const Matrix last = basis.basis().middleCols(first, added);
            added = basis.append(a * (a.transpose() * last));
        }
        if (added == 0)
            breakdown = true;
        if (basis.cols() >= r)
            break;
    }
    BkSvdResult out;
    out.subspace.breakdown = breakdown;
    if (basis.cols() < r) {
        out.subspace.degraded = true;
        detail::pad_basis(basis, r, derive_seed(cfg.seed, 0x504144ull));
    }
    const Matrix q = basis.basis();
    const Matrix m = q.transpose() * a;
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
    out.subspace.basis = q * svd.matrixU().leftCols(r);
    out.values = svd.singularValues().head(r);
    out.projected = out.subspace.basis * (out.subspace.basis.transpose() * a);
    return out;
}

/// Symmetric input: block Krylov in A itself (one product per block).
inline BkSvdResult bk_svd(const SymMatrix& a, Index r, const ProjectionConfig& cfg)
{
    RitzPairs rp = block_krylov_eigenspace(DenseSymmetricOperator{a.mat()}, r, cfg);
    BkSvdResult out;
    out.projected = rp.subspace.basis * (rp.subspace.basis.transpose() * a.mat());
    out.subspace = std::move(rp.subspace);
    out.values = std::move(rp.values);
    return out;
}

namespace detail {

inline Subspace exact_left_singular(const Matrix& a, Index k)
{
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
    Subspace s;
    s.basis = svd.matrixU().leftCols(k);
    return s;
}

} // namespace detail

/// c_H-approximate head projection: a k-dimensional V with ||P_V A||_F >= c_H ||A_k||_F.
inline Subspace head_project(const SymMatrix& a, Index k, const ProjectionConfig& cfg)
{
    cfg.validate();
    return dominant_eigenspace(DenseSymmetricOperator{a.mat()}, k, cfg).subspace;
}

inline Subspace head_project(const Matrix& a, Index k, const ProjectionConfig& cfg)
{
    cfg.validate();
    detail::check_target(k, std::min(a.rows(), a.cols()), "head_project");
    switch (cfg.backend) {
    case ProjectionBackend::exact: return detail::exact_left_singular(a, k);
    case ProjectionBackend::block_krylov: return bk_svd(a, k, cfg).subspace;
    case ProjectionBackend::lanczos:
        throw ArgumentError("Lanczos backend requires a symmetric input");
    }
    throw ArgumentError("unknown projection backend");
}

/// c_T-approximate tail projection: P_W A for an r-dimensional W with
/// ||A - P_W A||_F <= c_T ||A - A_r||_F.
inline Matrix tail_project(const SymMatrix& a, Index r, const ProjectionConfig& cfg)
{
    const Subspace w = head_project(a, r, cfg);
    return w.basis * (w.basis.transpose() * a.mat());
}

inline Matrix tail_project(const Matrix& a, Index r, const ProjectionConfig& cfg)
{
    const Subspace w = head_project(a, r, cfg);
    return w.basis * (w.basis.transpose() * a);
}

inline Subspace lanczos_subspace(const SymMatrix& a, Index k, const ProjectionConfig& cfg)
{
    return lanczos_eigenspace(DenseSymmetricOperator{a.mat()}, k, cfg).subspace;
}

} // namespace lvggm
