#pragma once

// Dense symmetric linear algebra used throughout the estimators: a symmetric
// matrix carrier, low-rank factors, eigendecomposition, Cholesky/log-det and
// the Woodbury inverse of a diagonal-plus-low-rank precision matrix.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lvggm/errors.hpp"

namespace lvggm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline std::string dims(const Matrix& a)
{
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

} // namespace detail

/// Dense symmetric p x p matrix. Every constructor symmetrizes its input as
/// (A + A^T) / 2 and rejects non-finite entries, so `mat()` is exactly symmetric.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(Index p) : data_(Matrix::Zero(p, p)) {}

    explicit SymMatrix(const Matrix& a) { assign(Matrix(a)); }
    explicit SymMatrix(Matrix&& a) { assign(std::move(a)); }

    static SymMatrix identity(Index p) { return SymMatrix(Matrix(Matrix::Identity(p, p))); }
    static SymMatrix zero(Index p) { return SymMatrix(p); }
    static SymMatrix diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

    Index dim() const noexcept { return data_.rows(); }
    const Matrix& mat() const noexcept { return data_; }
    double operator()(Index i, Index j) const { return data_(i, j); }

    double frobenius_norm() const { return data_.norm(); }

    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b)
    {
        check_same(a, b);
        return SymMatrix(Matrix(a.data_ + b.data_));
    }
    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b)
    {
        check_same(a, b);
        return SymMatrix(Matrix(a.data_ - b.data_));
    }
    friend SymMatrix operator*(double s, const SymMatrix& a) { return SymMatrix(Matrix(s * a.data_)); }

private:
    static void check_same(const SymMatrix& a, const SymMatrix& b)
    {
        if (a.dim() != b.dim())
            throw ArgumentError("SymMatrix dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()));
    }

    void assign(Matrix&& a)
    {
        if (a.rows() != a.cols())
            throw ArgumentError("SymMatrix requires a square matrix, got " + detail::dims(a));
        if (!detail::all_finite(a))
            throw DomainError("SymMatrix entries must be finite");
        data_ = std::move(a);
        const Index p = data_.rows();
        for (Index j = 0; j < p; ++j)
            for (Index i = j + 1; i < p; ++i) {
                const double s = 0.5 * (data_(i, j) + data_(j, i));
                data_(i, j) = s;
                data_(j, i) = s;
            }
    }

    Matrix data_;
};

/// L = U U^T with U of size p x r; PSD by construction.
class LowRankFactor {
public:
    LowRankFactor() = default;
    explicit LowRankFactor(Matrix u) : u_(std::move(u))
    {
        if (!detail::all_finite(u_))
            throw DomainError("LowRankFactor entries must be finite");
    }

    static LowRankFactor zero(Index p, Index r) { return LowRankFactor(Matrix::Zero(p, r)); }

    Index dim() const noexcept { return u_.rows(); }
    Index rank() const noexcept { return u_.cols(); }
    const Matrix& factor() const noexcept { return u_; }

    SymMatrix materialize() const { return SymMatrix(Matrix(u_ * u_.transpose())); }

private:
    Matrix u_;
};

/// Symmetric low-rank matrix L = U diag(w) U^T, possibly indefinite. The
/// approximate-projection solver keeps its iterates in this form.
class SymLowRank {
public:
    SymLowRank() = default;
    explicit SymLowRank(Index p) : basis_(p, 0), weights_(0) {}
    SymLowRank(Matrix basis, Vector weights) : basis_(std::move(basis)), weights_(std::move(weights))
    {
        if (basis_.cols() != weights_.size())
            throw ArgumentError("SymLowRank: basis has " + std::to_string(basis_.cols()) +
                                " columns but " + std::to_string(weights_.size()) + " weights");
        if (!detail::all_finite(basis_) || !weights_.allFinite())
            throw DomainError("SymLowRank entries must be finite");
    }

    static SymLowRank from_factor(const LowRankFactor& f)
    {
        return SymLowRank(f.factor(), Vector::Ones(f.rank()));
    }

    Index dim() const noexcept { return basis_.rows(); }
    Index size() const noexcept { return basis_.cols(); }
    const Matrix& basis() const noexcept { return basis_; }
    const Vector& weights() const noexcept { return weights_; }

    SymMatrix materialize() const
    {
        return SymMatrix(Matrix(basis_ * weights_.asDiagonal() * basis_.transpose()));
    }

    /// Requires nonnegative weights; returns U diag(sqrt(w)).
    LowRankFactor to_factor() const
    {
        if ((weights_.array() < 0.0).any())
            throw DomainError("SymLowRank has negative weights and is not PSD");
        return LowRankFactor(Matrix(basis_ * weights_.cwiseSqrt().asDiagonal()));
    }

private:
    Matrix basis_;
    Vector weights_;
};

/// Eigenvalues sorted descending with matching orthonormal eigenvector columns.
struct Spectrum {
    Vector eigenvalues;
    Matrix eigenvectors;

    Index dim() const noexcept { return eigenvalues.size(); }
};

inline Spectrum sym_evd(const SymMatrix& a)
{
    const Index p = a.dim();
    Spectrum out;
    if (p == 0)
        return out;
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat());
    if (es.info() != Eigen::Success)
        throw DomainError("symmetric eigensolver failed to converge");
    // Eigen returns ascending order; reversing gives descending with ties kept
    // in a deterministic order.
    out.eigenvalues = es.eigenvalues().reverse();
    out.eigenvectors = es.eigenvectors().rowwise().reverse();
    return out;
}

inline double frobenius_inner(const SymMatrix& a, const SymMatrix& b)
{
    if (a.dim() != b.dim())
        throw ArgumentError("frobenius_inner: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()));
    return a.mat().cwiseProduct(b.mat()).sum();
}

namespace detail {

/// Indices of the k entries of `values` (assumed sorted descending) with the
/// largest magnitude. Ties keep the earlier index.
inline std::vector<Index> top_by_magnitude(const Vector& values, Index k)
{
    std::vector<Index> idx(static_cast<std::size_t>(values.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Index i, Index j) { return std::abs(values(i)) > std::abs(values(j)); });
    idx.resize(static_cast<std::size_t>(std::min<Index>(k, values.size())));
    return idx;
}

inline void check_rank(Index r, Index p, const char* who)
{
    if (r < 1 || r > p)
        throw ArgumentError(std::string(who) + ": rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(p) + "]");
}

} // namespace detail

/// Best rank-r approximation in Frobenius norm: keeps the r eigenpairs of
/// largest |eigenvalue|.
inline SymMatrix best_rank_r(const SymMatrix& a, Index r)
{
    detail::check_rank(r, a.dim(), "best_rank_r");
    const Spectrum s = sym_evd(a);
    const auto keep = detail::top_by_magnitude(s.eigenvalues, r);
    Matrix v(a.dim(), r);
    Vector w(r);
    for (Index j = 0; j < r; ++j) {
        v.col(j) = s.eigenvectors.col(keep[static_cast<std::size_t>(j)]);
        w(j) = s.eigenvalues(keep[static_cast<std::size_t>(j)]);
    }
    return SymMatrix(Matrix(v * w.asDiagonal() * v.transpose()));
}

/// Cholesky handle of a positive definite matrix. Holds the factor, log det and
/// the explicit inverse, all computed once at construction.
class CholeskyFactor {
public:
    CholeskyFactor() = default;

    explicit CholeskyFactor(const SymMatrix& a) : llt_(a.mat())
    {
        if (llt_.info() != Eigen::Success || !llt_.matrixLLT().allFinite())
            throw NotPositiveDefinite("Cholesky factorization failed: matrix is not positive definite");
        const auto diag = llt_.matrixLLT().diagonal();
        if ((diag.array() <= 0.0).any())
            throw NotPositiveDefinite("Cholesky factorization failed: nonpositive pivot");
        logdet_ = 2.0 * diag.array().log().sum();
        inverse_ = llt_.solve(Matrix::Identity(a.dim(), a.dim()));
        inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
    }

    Index dim() const noexcept { return inverse_.rows(); }
    double logdet() const noexcept { return logdet_; }
    Matrix lower() const { return llt_.matrixL(); }
    const Matrix& inverse() const noexcept { return inverse_; }
    Matrix solve(const Matrix& b) const { return llt_.solve(b); }

private:
    Eigen::LLT<Matrix> llt_;
    double logdet_ = 0.0;
    Matrix inverse_;
};

struct CholeskyLogdet {
    CholeskyFactor factor;
    double logdet;
};

inline CholeskyLogdet cholesky_logdet(const SymMatrix& a)
{
    CholeskyFactor f(a);
    const double ld = f.logdet();
    return {std::move(f), ld};
}

/// Factorization of S + B J B^T through its capacitance matrix K = J + B^T S^-1 B,
/// where J = diag(+-1). Shared by the Woodbury inverse, the determinant lemma
/// and the inertia test that decides positive definiteness without a p x p
/// factorization.
class WoodburyUpdate {
public:
    WoodburyUpdate(const CholeskyFactor& s, const SymLowRank& l)
    {
        const Index p = s.dim();
        if (l.dim() != p)
            throw ArgumentError("Woodbury update: factor has " + std::to_string(l.dim()) + " rows, expected " +
                                std::to_string(p));
        std::vector<Index> cols;
        for (Index j = 0; j < l.size(); ++j)
            if (l.weights()(j) != 0.0 && l.basis().col(j).squaredNorm() > 0.0)
                cols.push_back(j);
        const Index k = static_cast<Index>(cols.size());
        scaled_.resize(p, k);
        signs_.resize(k);
        for (Index c = 0; c < k; ++c) {
            const double w = l.weights()(cols[static_cast<std::size_t>(c)]);
            scaled_.col(c) = std::sqrt(std::abs(w)) * l.basis().col(cols[static_cast<std::size_t>(c)]);
            signs_(c) = w > 0.0 ? 1.0 : -1.0;
        }
        s_inv_b_ = s.inverse() * scaled_;
        Matrix cap = scaled_.transpose() * s_inv_b_;
        cap.diagonal() += signs_;
        cap = 0.5 * (cap + cap.transpose()).eval();

        negatives_in_signs_ = (signs_.array() < 0.0).count();
        if (k > 0) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(cap);
            cap_values_ = es.eigenvalues();
            cap_vectors_ = es.eigenvectors();
        }
        const double scale = std::max(1.0, cap_values_.size() ? cap_values_.cwiseAbs().maxCoeff() : 0.0);
        singular_ = k > 0 && cap_values_.cwiseAbs().minCoeff() <= 1e-13 * scale;
        const Index negatives_in_cap = (cap_values_.array() < 0.0).count();
        // Haynsworth inertia: S + B J B^T is PD iff K is nonsingular and has as
        // many negative eigenvalues as J.
        positive_definite_ = !singular_ && negatives_in_cap == negatives_in_signs_;
        cap_logdet_ = k > 0 ? cap_values_.array().abs().log().sum() : 0.0;
        logdet_ = s.logdet() + cap_logdet_;
    }

    Index rank() const noexcept { return scaled_.cols(); }
    bool positive_definite() const noexcept { return positive_definite_; }
    bool singular() const noexcept { return singular_; }
    const Vector& capacitance_eigenvalues() const noexcept { return cap_values_; }

    /// log det(S + L); meaningful only when positive_definite().
    double logdet() const noexcept { return logdet_; }
    /// log |det K|, so that log det(S + L) = log det S + capacitance_logdet().
    double capacitance_logdet() const noexcept { return cap_logdet_; }

    /// (S^-1 B) K^-1 (S^-1 B)^T, the low-rank correction subtracted from S^-1.
    Matrix correction() const
    {
        if (singular_)
            throw SingularityError("Woodbury capacitance matrix is singular");
        const Index p = scaled_.rows();
        if (rank() == 0)
            return Matrix::Zero(p, p);
        const Matrix wq = s_inv_b_ * cap_vectors_;
        Matrix out = wq * cap_values_.cwiseInverse().asDiagonal() * wq.transpose();
        return out;
    }

private:
    Matrix scaled_;
    Vector signs_;
    Matrix s_inv_b_;
    Vector cap_values_;
    Matrix cap_vectors_;
    Index negatives_in_signs_ = 0;
    bool positive_definite_ = true;
    bool singular_ = false;
    double cap_logdet_ = 0.0;
    double logdet_ = 0.0;
};

/// (S + U U^T)^-1 = S^-1 - S^-1 U (I + U^T S^-1 U)^-1 U^T S^-1, costing
/// O(p^2 r + r^3) on top of the cached S^-1.
inline SymMatrix woodbury_inverse(const CholeskyFactor& s, const LowRankFactor& u)
{
    const WoodburyUpdate upd(s, SymLowRank::from_factor(u));
    if (upd.singular() || !upd.positive_definite())
        throw SingularityError("woodbury_inverse: I + U^T S^-1 U is not positive definite");
    return SymMatrix(Matrix(s.inverse() - upd.correction()));
}

/// Indefinite variant: (S + U diag(w) U^T)^-1 via a symmetric indefinite
/// capacitance solve.
inline SymMatrix woodbury_inverse(const CholeskyFactor& s, const SymLowRank& l)
{
    const WoodburyUpdate upd(s, l);
    return SymMatrix(Matrix(s.inverse() - upd.correction()));
}

/// Number of eigenvalues with |lambda| > rel_tol * max |lambda|.
inline Index effective_rank(const Vector& eigenvalues, double rel_tol = 1e-8)
{
    if (eigenvalues.size() == 0)
        return 0;
    const double top = eigenvalues.cwiseAbs().maxCoeff();
    if (top == 0.0)
        return 0;
    return (eigenvalues.array().abs() > rel_tol * top).count();
}

inline Index effective_rank(const SymMatrix& a, double rel_tol = 1e-8)
{
    return effective_rank(sym_evd(a).eigenvalues, rel_tol);
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
inline double spectral_norm(const SymMatrix& a)
{
    if (a.dim() == 0)
        return 0.0;
    return sym_evd(a).eigenvalues.cwiseAbs().maxCoeff();
}

} // namespace lvggm
