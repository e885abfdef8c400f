#pragma once

// Negative log-likelihood F(L) = -log det(S* + L) + <S* + L, C> of the latent
// variable model, its gradient C - (S* + L)^-1, and curvature diagnostics.

#include <cmath>
#include <limits>
#include <optional>

#include "lvggm/linalg.hpp"

namespace lvggm {

/// Fixed data of one fit: the known sparse part S*, its Cholesky handle and
/// inverse, and the sample covariance C. Immutable after construction.
class ModelContext {
public:
    ModelContext(SymMatrix s_star, SymMatrix c) : s_star_(std::move(s_star)), c_(std::move(c))
    {
        if (s_star_.dim() != c_.dim())
            throw ArgumentError("S* is " + std::to_string(s_star_.dim()) + "x" + std::to_string(s_star_.dim()) +
                                " but C is " + std::to_string(c_.dim()) + "x" + std::to_string(c_.dim()));
        if (s_star_.dim() == 0)
            throw ArgumentError("empty model");
        try {
            s_chol_ = CholeskyFactor(s_star_);
        } catch (const NotPositiveDefinite&) {
            throw NotPositiveDefinite("S* is not positive definite");
        }
        const Spectrum cs = sym_evd(c_);
        if (cs.eigenvalues(cs.dim() - 1) < -1e-10 * std::max(1.0, cs.eigenvalues.cwiseAbs().maxCoeff()))
            throw DomainError("sample covariance C is not positive semidefinite");
        base_gradient_ = c_.mat() - s_chol_.inverse();
        nll_offset_ = -s_chol_.logdet() + frobenius_inner(s_star_, c_);
        s_min_eigenvalue_ = sym_evd(s_star_).eigenvalues.minCoeff();
    }

    Index dim() const noexcept { return s_star_.dim(); }
    const SymMatrix& s_star() const noexcept { return s_star_; }
    const SymMatrix& covariance() const noexcept { return c_; }
    const CholeskyFactor& s_chol() const noexcept { return s_chol_; }

    /// C - S*^-1, the gradient at L = 0.
    const Matrix& base_gradient() const noexcept { return base_gradient_; }
    /// -log det S* + <S*, C>, the part of F that does not depend on L.
    double nll_offset() const noexcept { return nll_offset_; }
    double s_min_eigenvalue() const noexcept { return s_min_eigenvalue_; }

private:
    SymMatrix s_star_;
    SymMatrix c_;
    CholeskyFactor s_chol_;
    Matrix base_gradient_;
    double nll_offset_ = 0.0;
    double s_min_eigenvalue_ = 0.0;
};

/// NLL of a low-rank iterate split as offset + variable so that accepted-step
/// comparisons see the L-dependent part at full relative precision.
struct NllValue {
    double offset = 0.0;
    double variable = 0.0;
    double total() const noexcept { return offset + variable; }
};

struct IterateEvaluation {
    bool positive_definite = false;
    NllValue nll;
    std::optional<SymMatrix> gradient;
};

/// F and optionally its gradient at L = U diag(w) U^T in O(p^2 k): log det by
/// the matrix determinant lemma, the inverse by Woodbury, positive definiteness
/// of S* + L by the inertia of the capacitance matrix.
inline IterateEvaluation evaluate(const ModelContext& ctx, const SymLowRank& l, bool with_gradient)
{
    IterateEvaluation out;
    const WoodburyUpdate upd(ctx.s_chol(), l);
    out.positive_definite = upd.positive_definite();
    if (!out.positive_definite)
        return out;
    const Matrix cu = ctx.covariance().mat() * l.basis();
    const double trace_lc = (l.basis().cwiseProduct(cu).colwise().sum().transpose().array() * l.weights().array()).sum();
    out.nll.offset = ctx.nll_offset();
    out.nll.variable = -upd.capacitance_logdet() + trace_lc;
    if (with_gradient)
        out.gradient = SymMatrix(Matrix(ctx.base_gradient() + upd.correction()));
    return out;
}

inline double nll(const ModelContext& ctx, const SymLowRank& l)
{
    const IterateEvaluation e = evaluate(ctx, l, false);
    if (!e.positive_definite)
        throw NotPositiveDefinite("S* + L is not positive definite");
    return e.nll.total();
}

inline double nll(const ModelContext& ctx, const LowRankFactor& l)
{
    return nll(ctx, SymLowRank::from_factor(l));
}

/// Reference NLL for an arbitrary symmetric L through a dense Cholesky of S* + L.
inline double nll_dense(const ModelContext& ctx, const SymMatrix& l)
{
    const SymMatrix theta = ctx.s_star() + l;
    double logdet = 0.0;
    try {
        logdet = cholesky_logdet(theta).logdet;
    } catch (const NotPositiveDefinite&) {
        throw NotPositiveDefinite("S* + L is not positive definite");
    }
    return -logdet + frobenius_inner(theta, ctx.covariance());
}

/// grad F(L) = C - (S* + L)^-1.
inline SymMatrix gradient(const ModelContext& ctx, const SymLowRank& l)
{
    const WoodburyUpdate upd(ctx.s_chol(), l);
    if (!upd.positive_definite())
        throw NotPositiveDefinite("S* + L is not positive definite");
    return SymMatrix(Matrix(ctx.base_gradient() + upd.correction()));
}

inline SymMatrix gradient(const ModelContext& ctx, const LowRankFactor& l)
{
    return gradient(ctx, SymLowRank::from_factor(l));
}

/// Curvature bounds from the Hessian Theta^-1 (x) Theta^-1:
/// m = 1 / lambda_max(Theta)^2 and M = 1 / lambda_min(Theta)^2.
struct RscRssBounds {
    double m_lower;
    double M_upper;
    double lambda_max_theta;
    double lambda_min_theta;

    double condition() const noexcept { return M_upper / m_lower; }
};

inline RscRssBounds rsc_rss_bounds(const SymMatrix& theta)
{
    const Spectrum s = sym_evd(theta);
    const double hi = s.eigenvalues(0);
    const double lo = s.eigenvalues(s.dim() - 1);
    if (!(lo > 0.0))
        throw DomainError("rsc_rss_bounds: Theta is not positive definite (lambda_min = " + std::to_string(lo) + ")");
    return {1.0 / (hi * hi), 1.0 / (lo * lo), hi, lo};
}

/// sqrt(3r) ||grad F(L*)||_2, the upper bound on ||P_J grad F(L*)||_F over
/// subspaces J of rank at most 3r.
inline double projected_gradient_norm(const ModelContext& ctx, const LowRankFactor& l_star, Index subspace_rank)
{
    if (subspace_rank < 1)
        throw ArgumentError("projected_gradient_norm: rank must be positive");
    return std::sqrt(3.0 * static_cast<double>(subspace_rank)) * spectral_norm(gradient(ctx, l_star));
}

} // namespace lvggm
