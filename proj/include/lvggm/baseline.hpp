#pragma once

// ADMM comparator for the convex sparse + low-rank estimator
//   min  -log det(Theta) + <Theta, C> + alpha ||S||_1,off + beta tr(L)
//   s.t. Theta = S + L,  L PSD.
// Unlike the rank-constrained solvers it estimates S as well and has no
// explicit rank control, so its L typically carries many small eigenvalues.

#include <cmath>
#include <limits>
#include <vector>

#include "lvggm/linalg.hpp"

namespace lvggm {

struct AdmmConfig {
    double l1_weight = 0.05;
    double nuclear_weight = 0.05;
    double rho = 1.0;
    int max_iters = 1000;
    double primal_tolerance = 1e-6;
    double dual_tolerance = 1e-6;

    void validate() const
    {
        if (!(l1_weight >= 0.0) || !(nuclear_weight >= 0.0))
            throw ArgumentError("ADMM weights must be nonnegative");
        if (!(rho > 0.0))
            throw ArgumentError("ADMM penalty rho must be positive");
        if (max_iters < 1)
            throw ArgumentError("ADMM max_iters must be positive");
        if (!(primal_tolerance > 0.0) || !(dual_tolerance > 0.0))
            throw ArgumentError("ADMM tolerances must be positive");
    }
};

inline double soft_threshold(double x, double tau)
{
    if (x > tau)
        return x - tau;
    if (x < -tau)
        return x + tau;
    return 0.0;
}

/// Elementwise soft thresholding; the diagonal is left untouched when
/// `keep_diagonal` is set.
inline Matrix soft_threshold(const Matrix& a, double tau, bool keep_diagonal = false)
{
    Matrix out = a.unaryExpr([tau](double x) { return soft_threshold(x, tau); });
    if (keep_diagonal)
        out.diagonal() = a.diagonal();
    return out;
}

/// Singular value soft thresholding of a general matrix.
inline Matrix svt(const Matrix& a, double tau)
{
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = (svd.singularValues().array() - tau).max(0.0).matrix();
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// Symmetric case: singular values are |lambda|, signs are kept.
inline SymMatrix svt(const SymMatrix& a, double tau)
{
    const Spectrum s = sym_evd(a);
    const Vector shrunk = s.eigenvalues.unaryExpr([tau](double x) { return soft_threshold(x, tau); });
    return SymMatrix(Matrix(s.eigenvectors * shrunk.asDiagonal() * s.eigenvectors.transpose()));
}

/// prox of tau tr(L) + indicator(L PSD): eigenvalues max(lambda - tau, 0).
inline SymMatrix psd_svt(const SymMatrix& a, double tau)
{
    const Spectrum s = sym_evd(a);
    const Vector shrunk = (s.eigenvalues.array() - tau).max(0.0).matrix();
    return SymMatrix(Matrix(s.eigenvectors * shrunk.asDiagonal() * s.eigenvectors.transpose()));
}

struct AdmmIterate {
    int iter = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    /// Penalized objective at Theta = S + L, +inf when S + L is not PD.
    double objective = 0.0;
};

struct AdmmResult {
    SymMatrix s_hat;
    SymMatrix l_hat;
    std::vector<AdmmIterate> trace;
    bool converged = false;
    int iterations = 0;
};

inline double admm_objective(const SymMatrix& c, const SymMatrix& s, const SymMatrix& l, const AdmmConfig& cfg)
{
    const SymMatrix theta = s + l;
    Eigen::LLT<Matrix> llt(theta.mat());
    if (llt.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    Matrix off = s.mat();
    off.diagonal().setZero();
    return -logdet + frobenius_inner(theta, c) + cfg.l1_weight * off.cwiseAbs().sum() +
           cfg.nuclear_weight * l.mat().trace();
}

inline AdmmResult admm_lvglasso(const SymMatrix& c, const AdmmConfig& cfg)
{
    cfg.validate();
    const Index p = c.dim();
    if (p == 0)
        throw ArgumentError("empty covariance");
    const double rho = cfg.rho;

    Matrix theta = Matrix::Identity(p, p);
    Matrix s = Matrix::Identity(p, p);
    Matrix l = Matrix::Zero(p, p);
    Matrix dual = Matrix::Zero(p, p);

    AdmmResult out;
    double best_score = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        // Theta: rho Theta - Theta^-1 = rho (S + L) - C - Lambda, solved per eigenvalue.
        const Spectrum m = sym_evd(SymMatrix(Matrix(rho * (s + l) - c.mat() - dual)));
        const Vector t = m.eigenvalues.unaryExpr([rho](double d) { return (d + std::sqrt(d * d + 4.0 * rho)) / (2.0 * rho); });
        theta = m.eigenvectors * t.asDiagonal() * m.eigenvectors.transpose();

        const Matrix sl_old = s + l;
        s = soft_threshold(Matrix(theta - l + dual / rho), cfg.l1_weight / rho, true);
        l = psd_svt(SymMatrix(Matrix(theta - s + dual / rho)), cfg.nuclear_weight / rho).mat();
        const Matrix gap = theta - s - l;
        dual += rho * gap;

        AdmmIterate rec;
        rec.iter = iter;
        rec.primal_residual = gap.norm();
        rec.dual_residual = rho * (s + l - sl_old).norm();
        const double scale = std::max(1.0, theta.norm());
        const double score = std::max(rec.primal_residual / (cfg.primal_tolerance * scale),
                                      rec.dual_residual / (cfg.dual_tolerance * scale));
        const bool done = score <= 1.0;
        const bool record_objective = done || iter == cfg.max_iters || score < best_score;
        rec.objective = record_objective ? admm_objective(c, SymMatrix(s), SymMatrix(l), cfg)
                                         : std::numeric_limits<double>::quiet_NaN();
        out.trace.push_back(rec);
        out.iterations = iter;
        if (score < best_score) {
            best_score = score;
            out.s_hat = SymMatrix(s);
            out.l_hat = SymMatrix(l);
        }
        if (done) {
            out.converged = true;
            out.s_hat = SymMatrix(s);
            out.l_hat = SymMatrix(l);
            break;
        }
    }
    return out;
}

} // namespace lvggm
