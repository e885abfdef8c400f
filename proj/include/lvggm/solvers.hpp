#pragma once

// Projected gradient solvers for the rank-constrained latent variable problem:
//   EP-LVM   L <- P_r+(L - eta grad F(L))              (exact PSD rank-r projection)
//   AP-LVM   L <- T_r(L - eta H_2r(grad F(L)))          (approximate tail/head projections)
// Both start from L = 0 and backtrack on eta whenever a trial step leaves the
// positive definite domain of F or fails to decrease it.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lvggm/linalg.hpp"
#include "lvggm/objective.hpp"
#include "lvggm/projections.hpp"
#include "lvggm/random.hpp"

namespace lvggm {

struct BacktrackingConfig {
    bool enabled = true;
    double shrink = 0.5;
    int max_halvings = 30;
    /// Multiplier applied to eta after a step accepted without halving.
    double growth = 1.0;
};

enum class StopReason { max_iterations, nll_tolerance, true_nll_floor, stationary, stalled };

inline const char* to_string(StopReason r)
{
    switch (r) {
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::nll_tolerance: return "nll_tolerance";
    case StopReason::true_nll_floor: return "true_nll_floor";
    case StopReason::stationary: return "stationary";
    case StopReason::stalled: return "stalled";
    }
    return "?";
}

struct SolverConfig {
    Index rank = 1;
    /// Explicit step size; auto_step_size() when empty.
    std::optional<double> step_size;
    int max_iters = 600;
    /// Stop when |F_{t-w} - F_t| <= tol * max(1, |F_t|) over w = tolerance_window
    /// iterations. Zero disables the rule.
    double nll_tolerance = 1e-7;
    int tolerance_window = 5;
    /// Synthetic mode: stop as soon as F drops to or below this value.
    std::optional<double> true_nll_floor;
    ProjectionConfig projection;
    BacktrackingConfig backtracking;
    int trace_every = 1;
    /// Ground truth, when known, for the rel_error trace column.
    std::optional<SymMatrix> truth;
    /// AP-LVM only: replace the final estimate by its PSD rank-r projection.
    bool finalize_psd = false;

    void validate(Index p) const
    {
        if (rank < 1 || rank > p)
            throw ArgumentError("solver rank " + std::to_string(rank) + " outside [1, " + std::to_string(p) + "]");
        if (step_size && !(*step_size > 0.0))
            throw ArgumentError("step size must be positive");
        if (max_iters < 1)
            throw ArgumentError("max_iters must be positive");
        if (nll_tolerance < 0.0 || tolerance_window < 1)
            throw ArgumentError("invalid NLL tolerance settings");
        if (trace_every < 1)
            throw ArgumentError("trace_every must be positive");
        if (!(backtracking.shrink > 0.0 && backtracking.shrink < 1.0) || backtracking.max_halvings < 0 ||
            !(backtracking.growth >= 1.0))
            throw ArgumentError("invalid backtracking settings");
        if (truth && truth->dim() != p)
            throw ArgumentError("truth dimension does not match the model");
        projection.validate();
    }
};

struct TraceRecord {
    int iter = 0;
    double nll = 0.0;
    /// Wall time of this iteration alone.
    double seconds = 0.0;
    double eta = 0.0;
    int halvings = 0;
    Index rank = 0;
    std::optional<double> rel_error;
    double min_eigenvalue = 0.0;
    bool degraded_projection = false;
};

struct Trace {
    std::vector<TraceRecord> records;
    /// Wall time of every iteration (records may be subsampled).
    std::vector<double> iteration_seconds;
    StopReason stop_reason = StopReason::max_iterations;
    int iterations = 0;
    int degraded_projections = 0;
    double rho_hat = std::numeric_limits<double>::quiet_NaN();

    double total_seconds() const
    {
        double s = 0.0;
        for (double x : iteration_seconds)
            s += x;
        return s;
    }

    /// Mean per-iteration time with the first (warm-up) iteration excluded.
    double mean_iteration_seconds() const
    {
        if (iteration_seconds.empty())
            return 0.0;
        if (iteration_seconds.size() == 1)
            return iteration_seconds.front();
        double s = 0.0;
        for (std::size_t i = 1; i < iteration_seconds.size(); ++i)
            s += iteration_seconds[i];
        return s / static_cast<double>(iteration_seconds.size() - 1);
    }

    double final_nll() const { return records.empty() ? std::numeric_limits<double>::quiet_NaN() : records.back().nll; }

    void write_csv(std::ostream& out) const
    {
        out << "iter,nll,seconds,eta,halvings,rank,rel_error\n";
        char buf[64];
        auto num = [&](double v) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
            out.write(buf, res.ptr - buf);
        };
        for (const auto& r : records) {
            out << r.iter << ',';
            num(r.nll);
            out << ',';
            num(r.seconds);
            out << ',';
            num(r.eta);
            out << ',' << r.halvings << ',' << r.rank << ',';
            if (r.rel_error)
                num(*r.rel_error);
            out << '\n';
        }
    }
};

/// Raised when trial steps keep leaving the positive definite domain after the
/// maximum number of halvings. Carries the trace up to the failure.
class DivergedError : public Error {
public:
    DivergedError(const std::string& what, Trace partial)
        : Error("diverged", what), trace_(std::make_shared<Trace>(std::move(partial)))
    {
    }
    const Trace& trace() const noexcept { return *trace_; }

private:
    std::shared_ptr<const Trace> trace_;
};

struct FitResult {
    /// Final estimate in eigen-form U diag(w) U^T (orthonormal U).
    SymLowRank estimate;
    Trace trace;

    /// The estimate as U U^T; requires a PSD estimate.
    LowRankFactor factor() const { return estimate.to_factor(); }
};

/// Eigenvalues of a low-rank symmetric matrix via a thin QR of its basis, O(p k^2).
inline Vector low_rank_eigenvalues(const SymLowRank& l)
{
    if (l.size() == 0)
        return Vector(0);
    Eigen::HouseholderQR<Matrix> qr(l.basis());
    const Index k = l.size();
    const Index m = std::min(k, l.dim());
    const Matrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    Matrix core = r * l.weights().asDiagonal() * r.transpose();
    return sym_evd(SymMatrix(std::move(core))).eigenvalues;
}

inline double relative_error(const SymMatrix& estimate, const SymMatrix& truth)
{
    const double denom = truth.frobenius_norm();
    if (denom == 0.0)
        throw DomainError("relative error against a zero reference");
    return (estimate.mat() - truth.mat()).norm() / denom;
}

/// PSD rank-r projection of a low-rank iterate in O(p k^2) through a thin
/// factorization of its basis.
inline LowRankFactor psd_finalize(const SymLowRank& l, Index r)
{
    detail::check_rank(r, l.dim(), "psd_finalize");
    const Index p = l.dim();
    Matrix out = Matrix::Zero(p, r);
    if (l.size() == 0)
        return LowRankFactor(std::move(out));
    Eigen::HouseholderQR<Matrix> qr(l.basis());
    const Index k = l.size();
    const Index m = std::min(k, p);
    const Matrix q = qr.householderQ() * Matrix::Identity(p, m);
    const Matrix rr = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    const Spectrum s = sym_evd(SymMatrix(Matrix(rr * l.weights().asDiagonal() * rr.transpose())));
    const Index keep = std::min(r, m);
    for (Index j = 0; j < keep; ++j) {
        const double lam = s.eigenvalues(j);
        if (lam > 0.0)
            out.col(j) = std::sqrt(lam) * (q * s.eigenvectors.col(j));
    }
    return LowRankFactor(std::move(out));
}

inline LowRankFactor psd_finalize(const SymMatrix& l, Index r) { return psd_rank_r_project(l, r); }

/// eta_0 = 0.5 lambda_min(S*)^2, i.e. 0.5 / M for the smoothness bound
/// M <= 1 / lambda_min(S*)^2 that holds at every PSD iterate.
inline double auto_step_size(const ModelContext& ctx)
{
    const double s = ctx.s_min_eigenvalue();
    return 0.5 * s * s;
}

struct ContractionFit {
    double rho_hat = std::numeric_limits<double>::quiet_NaN();
    /// Fraction of consecutive pre-plateau steps along which the excess decreased.
    double decreasing_fraction = 0.0;
    std::size_t segment_length = 0;
    double floor = 0.0;
};

/// Least-squares fit of log(e_t - floor) against t over the pre-plateau
/// prefix; rho_hat = exp(slope). `iters` gives the abscissae.
/// The floor is zero unless the series has visibly stagnated after
/// decreasing, in which case it is the smallest value reached. The prefix
/// ends at the first point whose excess drops to 1e-8 of the initial excess
/// or to ten times the spread of the final plateau window.
inline ContractionFit fit_contraction(std::span<const double> values, std::span<const double> iters, bool gap_series)
{
    const std::size_t n = values.size();
    if (n < 5 || iters.size() != n)
        throw InsufficientData("contraction estimate needs at least 5 recorded iterations, got " + std::to_string(n));
    ContractionFit fit;
    double plateau_spread = 0.0;
    if (!gap_series) {
        const std::size_t w = std::min<std::size_t>(5, n - 1);
        const double last = values[n - 1];
        const bool stagnated = std::abs(last - values[n - 1 - w]) <= 1e-3 * std::abs(last);
        const bool decreased = last < values[0] * (1.0 - 1e-3);
        if (stagnated && decreased) {
            fit.floor = *std::min_element(values.begin(), values.end());
            for (std::size_t t = n - 1 - w; t < n; ++t)
                plateau_spread = std::max(plateau_spread, values[t] - fit.floor);
        }
    }
    const double x0 = values[0] - fit.floor;
    if (!(x0 > 0.0))
        throw InsufficientData("contraction estimate: nonpositive initial excess");
    const double cutoff = std::max(1e-8 * x0, 10.0 * plateau_spread);
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t t = 0; t < n; ++t) {
        const double x = values[t] - fit.floor;
        if (!(x > cutoff) || !std::isfinite(x))
            break;
        xs.push_back(iters[t]);
        ys.push_back(std::log(x));
    }
    if (xs.size() < 2)
        throw InsufficientData("contraction estimate: pre-plateau segment shorter than two points");
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0;
    double sxx = 0.0;
    std::size_t down = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        if (i + 1 < xs.size() && ys[i + 1] < ys[i])
            ++down;
    }
    fit.rho_hat = std::exp(sxy / sxx);
    fit.segment_length = xs.size();
    fit.decreasing_fraction = static_cast<double>(down) / static_cast<double>(xs.size() - 1);
    return fit;
}

/// Contraction fit of a solver trace: relative errors when every record has
/// one, otherwise the successive NLL decrements F_t - F_{t+1}, which share
/// the contraction factor of the gap without needing its limit.
inline ContractionFit fit_contraction(const Trace& trace)
{
    std::vector<double> values;
    std::vector<double> iters;
    bool have_errors = !trace.records.empty();
    for (const auto& r : trace.records)
        have_errors = have_errors && r.rel_error.has_value();
    const auto& recs = trace.records;
    if (have_errors) {
        for (const auto& r : recs) {
            values.push_back(*r.rel_error);
            iters.push_back(static_cast<double>(r.iter));
        }
    } else {
        for (std::size_t t = 0; t + 1 < recs.size(); ++t) {
            values.push_back(recs[t].nll - recs[t + 1].nll);
            iters.push_back(static_cast<double>(recs[t].iter));
        }
    }
    return fit_contraction(values, iters, !have_errors);
}

inline double contraction_estimate(const Trace& trace) { return fit_contraction(trace).rho_hat; }

namespace detail {

enum class StepKind { exact, approximate };

struct SeedRole {
    static constexpr std::uint64_t head = 0x48454144ull;
    static constexpr std::uint64_t tail = 0x5441494cull;
};

class SolverLoop {
public:
    SolverLoop(const ModelContext& ctx, const SolverConfig& cfg) : ctx_(ctx), cfg_(cfg)
    {
        cfg_.validate(ctx.dim());
        eta_ = cfg_.step_size ? *cfg_.step_size : auto_step_size(ctx_);
    }

    template <class Propose>
    FitResult run(Propose&& propose)
    {
        using clock = std::chrono::steady_clock;
        const Index p = ctx_.dim();
        SymLowRank current(p);
        IterateEvaluation eval = evaluate(ctx_, current, true);
        nll_history_.push_back(eval.nll.total());
        record(0, current, eval.nll.total(), 0.0, 0, false);

        for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
            const auto t0 = clock::now();
            bool degraded = false;
            double eta_try = eta_;
            int halvings = 0;
            bool saw_pd = false;
            std::optional<SymLowRank> accepted;
            std::optional<IterateEvaluation> accepted_eval;
            auto state = propose.prepare(current, *eval.gradient, iter, degraded);
            while (true) {
                SymLowRank candidate = propose.step(state, current, *eval.gradient, eta_try, iter, degraded);
                IterateEvaluation ce = evaluate(ctx_, candidate, false);
                saw_pd = saw_pd || ce.positive_definite;
                const double slack = 4.0 * std::numeric_limits<double>::epsilon() *
                                     std::max(1.0, std::abs(eval.nll.variable));
                const bool descent = ce.positive_definite &&
                                     (!cfg_.backtracking.enabled || ce.nll.variable <= eval.nll.variable + slack);
                if (descent) {
                    accepted = std::move(candidate);
                    break;
                }
                if (!cfg_.backtracking.enabled || halvings >= cfg_.backtracking.max_halvings) {
                    if (!saw_pd) {
                        trace_.iterations = iter - 1;
                        throw DivergedError("step left the positive definite domain after " +
                                                std::to_string(halvings) + " halvings at iteration " +
                                                std::to_string(iter),
                                            trace_);
                    }
                    break;
                }
                eta_try *= cfg_.backtracking.shrink;
                ++halvings;
            }
            if (!accepted) {
                trace_.stop_reason = StopReason::stalled;
                break;
            }
            const double step_norm = (accepted->materialize().mat() - current.materialize().mat()).norm();
            const double cur_norm = current.size() ? current.materialize().frobenius_norm() : 0.0;
            current = std::move(*accepted);
            eval = evaluate(ctx_, current, true);
            const double seconds = std::chrono::duration<double>(clock::now() - t0).count();

            trace_.iteration_seconds.push_back(seconds);
            trace_.iterations = iter;
            if (degraded)
                ++trace_.degraded_projections;
            nll_history_.push_back(eval.nll.total());
            const bool last_possible = iter == cfg_.max_iters;
            const StopReason reason = stop_reason(iter, eval.nll.total(), step_norm, cur_norm);
            const bool stopping = reason != StopReason::max_iterations || last_possible;
            if (iter % cfg_.trace_every == 0 || stopping)
                record(iter, current, eval.nll.total(), seconds, halvings, degraded, eta_try);
            if (halvings == 0)
                eta_try *= cfg_.backtracking.growth;
            eta_ = eta_try;
            if (stopping) {
                trace_.stop_reason = reason;
                break;
            }
        }
        if (trace_.records.empty() || trace_.records.back().iter != trace_.iterations)
            record(trace_.iterations, current, eval.nll.total(), 0.0, 0, false);
        try {
            trace_.rho_hat = contraction_estimate(trace_);
        } catch (const InsufficientData&) {
        }
        return {std::move(current), std::move(trace_)};
    }

    const SolverConfig& config() const noexcept { return cfg_; }

private:
    StopReason stop_reason(int iter, double nll_now, double step_norm, double cur_norm) const
    {
        if (cfg_.true_nll_floor && nll_now <= *cfg_.true_nll_floor)
            return StopReason::true_nll_floor;
        if (step_norm <= 1e-15 * std::max(1.0, cur_norm))
            return StopReason::stationary;
        const int w = cfg_.tolerance_window;
        if (cfg_.nll_tolerance > 0.0 && iter >= w) {
            const double before = nll_history_[nll_history_.size() - 1 - static_cast<std::size_t>(w)];
            if (std::abs(before - nll_now) <= cfg_.nll_tolerance * std::max(1.0, std::abs(nll_now)))
                return StopReason::nll_tolerance;
        }
        return StopReason::max_iterations;
    }

    void record(int iter, const SymLowRank& l, double nll_value, double seconds, int halvings, bool degraded,
                std::optional<double> eta = std::nullopt)
    {
        TraceRecord r;
        r.iter = iter;
        r.nll = nll_value;
        r.seconds = seconds;
        r.eta = eta.value_or(eta_);
        r.halvings = halvings;
        const Vector ev = low_rank_eigenvalues(l);
        r.rank = effective_rank(ev);
        r.min_eigenvalue = ev.size() ? std::min(0.0, ev.minCoeff()) : 0.0;
        r.degraded_projection = degraded;
        if (cfg_.truth)
            r.rel_error = relative_error(l.size() ? l.materialize() : SymMatrix::zero(l.dim()), *cfg_.truth);
        trace_.records.push_back(r);
    }

    const ModelContext& ctx_;
    SolverConfig cfg_;
    double eta_ = 0.0;
    Trace trace_;
    std::vector<double> nll_history_;
};

struct ExactStep {
    Index rank;

    struct State {};
    State prepare(const SymLowRank&, const SymMatrix&, int, bool&) const { return {}; }

    SymLowRank step(const State&, const SymLowRank& current, const SymMatrix& grad, double eta, int, bool&) const
    {
        Matrix target = -eta * grad.mat();
        if (current.size() > 0)
            target.noalias() += current.basis() * current.weights().asDiagonal() * current.basis().transpose();
        return psd_project_eigen(SymMatrix(std::move(target)), rank);
    }
};

struct ApproximateStep {
    Index rank;
    ProjectionConfig projection;

    struct State {
        RitzPairs head;
    };

    /// Head projection of the gradient at rank 2r. Its Ritz values are
    /// V^T grad V, so P_V grad P_V = V diag(values) V^T.
    State prepare(const SymLowRank&, const SymMatrix& grad, int iter, bool& degraded) const
    {
        ProjectionConfig cfg = projection;
        cfg.seed = derive_seed(projection.seed, static_cast<std::uint64_t>(iter), SeedRole::head);
        const Index k = std::min<Index>(2 * rank, grad.dim());
        State s{dominant_eigenspace(DenseSymmetricOperator{grad.mat()}, k, cfg)};
        degraded = degraded || s.head.subspace.degraded;
        return s;
    }

    /// Tail projection at rank r of L - eta P_V grad P_V, applied as a
    /// low-rank operator.
    SymLowRank step(const State& s, const SymLowRank& current, const SymMatrix&, double eta, int iter,
                    bool& degraded) const
    {
        const Index p = current.dim();
        const Index kc = current.size();
        const Index kh = s.head.subspace.size();
        Matrix basis(p, kc + kh);
        Vector weights(kc + kh);
        basis.leftCols(kc) = current.basis();
        basis.rightCols(kh) = s.head.subspace.basis;
        weights.head(kc) = current.weights();
        weights.tail(kh) = -eta * s.head.values;
        ProjectionConfig cfg = projection;
        cfg.seed = derive_seed(projection.seed, static_cast<std::uint64_t>(iter), SeedRole::tail);
        RitzPairs t = dominant_eigenspace(LowRankSymmetricOperator{basis, weights}, rank, cfg);
        degraded = degraded || t.subspace.degraded;
        return SymLowRank(std::move(t.subspace.basis), std::move(t.values));
    }
};

} // namespace detail

/// Projected gradient descent with the exact PSD rank-r projection.
inline FitResult ep_lvm(const ModelContext& ctx, const SolverConfig& cfg)
{
    detail::SolverLoop loop(ctx, cfg);
    return loop.run(detail::ExactStep{cfg.rank});
}

/// Projected gradient descent with a rank-2r head projection of the gradient
/// and a rank-r tail projection of the update.
inline FitResult ap_lvm(const ModelContext& ctx, const SolverConfig& cfg)
{
    detail::SolverLoop loop(ctx, cfg);
    FitResult out = loop.run(detail::ApproximateStep{cfg.rank, cfg.projection});
    if (cfg.finalize_psd) {
        const LowRankFactor f = psd_finalize(out.estimate, cfg.rank);
        out.estimate = detail::psd_project_eigen(f.materialize(), cfg.rank);
    }
    return out;
}

} // namespace lvggm
