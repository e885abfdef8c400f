#pragma once

// Implementations behind `lvggm gen|fit|eval|bench`. Each command takes a
// plain options struct so it can be driven from tests without a shell.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lvggm/baseline.hpp"
#include "lvggm/bench.hpp"
#include "lvggm/datagen.hpp"
#include "lvggm/matrix_io.hpp"
#include "lvggm/objective.hpp"
#include "lvggm/solvers.hpp"

namespace lvggm::cmd {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory '" + dir.string() + "'");
}

inline void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out.flush())
        throw IoError("failed writing '" + path.string() + "'");
}

inline json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path.string() + "': " + e.what());
    }
}

struct GenOptions {
    Index p = 100;
    std::optional<Index> rank;
    Index n = 0;
    std::uint64_t seed = 0;
    fs::path out_dir;
    ModelParams params;
    /// Write C = Sigma* instead of a sample covariance.
    bool population = false;
};

/// Writes S.mat, Ltrue.mat, C.mat, Sigma.mat and model.json.
inline json gen(const GenOptions& o)
{
    if (!o.population && o.n < 1)
        throw ArgumentError("gen: --n must be positive unless --population is set");
    const SyntheticModel model = gen_model(o.p, o.rank, o.seed, o.params);
    const SymMatrix c = o.population ? model.sigma_star : sample_covariance(model, o.n, derive_seed(o.seed, 0x5a));
    ensure_dir(o.out_dir);
    const SymMatrix l_dense = model.l_star.materialize();
    io::write_matrix(o.out_dir / "S.mat", model.s_star.mat());
    io::write_matrix(o.out_dir / "Ltrue.mat", l_dense.mat());
    io::write_matrix(o.out_dir / "C.mat", c.mat());
    io::write_matrix(o.out_dir / "Sigma.mat", model.sigma_star.mat());

    const ModelContext ctx(model.s_star, c);
    json j;
    j["p"] = model.dim();
    j["r"] = model.rank;
    j["n"] = o.population ? json(nullptr) : json(o.n);
    j["population"] = o.population;
    j["seed"] = o.seed;
    j["lstar_spectral_norm"] = spectral_norm(l_dense);
    j["lstar_frobenius_norm"] = l_dense.frobenius_norm();
    j["true_nll"] = nll(ctx, model.l_star);
    j["params"] = {{"diag_low", o.params.diag_low},
                   {"diag_high", o.params.diag_high},
                   {"lstar_spectral_norm", o.params.lstar_spectral_norm},
                   {"min_eigen_margin", o.params.min_eigen_margin}};
    j["files"] = {"S.mat", "Ltrue.mat", "C.mat", "Sigma.mat", "model.json"};
    write_text(o.out_dir / "model.json", j.dump(2) + "\n");
    return j;
}

struct FitOptions {
    /// Known S*; optional for admm, which estimates its own sparse part.
    fs::path s_path;
    /// Covariance matrix; leave empty when `samples_path` is set.
    fs::path c_path;
    /// Raw n x p observations; the covariance is formed on load.
    std::optional<fs::path> samples_path;
    DatasetOptions dataset;
    Algorithm algo = Algorithm::ep;
    Index rank = 1;
    /// Explicit step size; automatic when empty.
    std::optional<double> step;
    int max_iters = 600;
    double nll_tolerance = 1e-7;
    std::optional<double> true_nll_floor;
    std::uint64_t seed = 0;
    std::optional<int> krylov_depth;
    bool finalize_psd = false;
    std::optional<fs::path> truth_path;
    fs::path out_dir;
    AdmmConfig admm;
};

inline ModelContext load_context(SymMatrix s, SymMatrix c)
{
    try {
        return ModelContext(std::move(s), std::move(c));
    } catch (const NotPositiveDefinite& e) {
        throw ValidationError(std::string("input validation: ") + e.what());
    } catch (const DomainError& e) {
        throw ValidationError(std::string("input validation: ") + e.what());
    }
}

inline ModelContext load_context(const fs::path& s_path, const fs::path& c_path)
{
    return load_context(io::read_sym_matrix(s_path), io::read_sym_matrix(c_path));
}

inline SymMatrix load_covariance(const FitOptions& o)
{
    if (o.samples_path && !o.c_path.empty())
        throw ArgumentError("give either a covariance or a samples file, not both");
    if (o.samples_path)
        return load_dataset(*o.samples_path, o.dataset).covariance;
    if (o.c_path.empty())
        throw ArgumentError("a covariance or a samples file is required");
    return io::read_sym_matrix(o.c_path);
}

/// Writes Lhat.mat, trace.csv and summary.json (plus Shat.mat for admm).
inline json fit(const FitOptions& o)
{
    const SymMatrix c = load_covariance(o);
    if (o.s_path.empty() && o.algo != Algorithm::admm)
        throw ArgumentError(std::string("S* is required for ") + to_string(o.algo));
    std::optional<ModelContext> ctx;
    if (!o.s_path.empty())
        ctx = load_context(io::read_sym_matrix(o.s_path), c);
    else if (!(sym_evd(c).eigenvalues.minCoeff() >= -1e-10 * std::max(1.0, c.mat().diagonal().maxCoeff())))
        throw ValidationError("input validation: covariance is not positive semidefinite");
    std::optional<SymMatrix> truth;
    if (o.truth_path) {
        truth = io::read_sym_matrix(*o.truth_path);
        if (truth->dim() != c.dim())
            throw ArgumentError("truth is " + std::to_string(truth->dim()) + "x" + std::to_string(truth->dim()) +
                                ", model is " + std::to_string(c.dim()));
    }
    ensure_dir(o.out_dir);
    json j;
    j["algo"] = to_string(o.algo);

    if (o.algo == Algorithm::admm) {
        const auto t0 = std::chrono::steady_clock::now();
        const AdmmResult r = admm_lvglasso(c, o.admm);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        io::write_matrix(o.out_dir / "Lhat.mat", r.l_hat.mat());
        io::write_matrix(o.out_dir / "Shat.mat", r.s_hat.mat());
        std::ostringstream trace;
        trace << "iter,primal_residual,dual_residual,objective\n";
        for (const auto& it : r.trace)
            trace << it.iter << ',' << detail::fmt_double(it.primal_residual) << ','
                  << detail::fmt_double(it.dual_residual) << ','
                  << (std::isnan(it.objective) ? std::string() : detail::fmt_double(it.objective)) << '\n';
        write_text(o.out_dir / "trace.csv", trace.str());
        AdmmConfig unregularized = o.admm;
        unregularized.l1_weight = 0.0;
        unregularized.nuclear_weight = 0.0;
        j["final_nll"] = admm_objective(c, r.s_hat, r.l_hat, unregularized);
        j["admm_objective"] = admm_objective(c, r.s_hat, r.l_hat, o.admm);
        j["converged"] = r.converged;
        j["iterations"] = r.iterations;
        j["total_seconds"] = seconds;
        j["mean_iteration_seconds"] = seconds / std::max(1, r.iterations);
        j["output_rank"] = effective_rank(r.l_hat);
        j["l1_weight"] = o.admm.l1_weight;
        j["nuclear_weight"] = o.admm.nuclear_weight;
        if (truth)
            j["rel_error"] = relative_error(r.l_hat, *truth);
    } else {
        SolverConfig cfg = solver_config_for(o.algo, o.rank, o.seed, o.max_iters);
        cfg.step_size = o.step;
        cfg.nll_tolerance = o.nll_tolerance;
        cfg.true_nll_floor = o.true_nll_floor;
        cfg.truth = truth;
        cfg.finalize_psd = o.finalize_psd;
        if (o.krylov_depth)
            cfg.projection.krylov_depth = *o.krylov_depth;
        const FitResult r = o.algo == Algorithm::ep ? ep_lvm(*ctx, cfg) : ap_lvm(*ctx, cfg);
        const SymMatrix l_hat = r.estimate.size() ? r.estimate.materialize() : SymMatrix::zero(c.dim());
        io::write_matrix(o.out_dir / "Lhat.mat", l_hat.mat());
        std::ostringstream trace;
        r.trace.write_csv(trace);
        write_text(o.out_dir / "trace.csv", trace.str());
        const TraceRecord& last = r.trace.records.back();
        j["final_nll"] = last.nll;
        j["iterations"] = r.trace.iterations;
        j["stop_reason"] = to_string(r.trace.stop_reason);
        j["total_seconds"] = r.trace.total_seconds();
        j["mean_iteration_seconds"] = r.trace.mean_iteration_seconds();
        j["output_rank"] = last.rank;
        j["min_eigenvalue"] = last.min_eigenvalue;
        j["final_step_size"] = last.eta;
        j["degraded_projections"] = r.trace.degraded_projections;
        j["rho_hat"] = std::isnan(r.trace.rho_hat) ? json(nullptr) : json(r.trace.rho_hat);
        if (last.rel_error)
            j["rel_error"] = *last.rel_error;
    }
    write_text(o.out_dir / "summary.json", j.dump(2) + "\n");
    return j;
}

struct EvalOptions {
    fs::path estimate_path;
    fs::path reference_path;
    std::optional<fs::path> s_path;
    std::optional<fs::path> c_path;
};

/// Relative Frobenius and spectral errors, effective rank, and the NLL when
/// S* and C are supplied.
inline json eval(const EvalOptions& o)
{
    const SymMatrix est = io::read_sym_matrix(o.estimate_path);
    const SymMatrix ref = io::read_sym_matrix(o.reference_path);
    if (est.dim() != ref.dim())
        throw ArgumentError("estimate is " + std::to_string(est.dim()) + "x" + std::to_string(est.dim()) +
                            " but reference is " + std::to_string(ref.dim()) + "x" + std::to_string(ref.dim()));
    const SymMatrix diff = est - ref;
    json j;
    j["rel_error"] = relative_error(est, ref);
    j["spectral_error"] = spectral_norm(diff);
    j["rel_spectral_error"] = spectral_norm(diff) / spectral_norm(ref);
    j["effective_rank"] = effective_rank(est);
    if (o.s_path.has_value() != o.c_path.has_value())
        throw ArgumentError("eval: --s and --c must be given together");
    if (o.s_path) {
        const ModelContext ctx = load_context(*o.s_path, *o.c_path);
        if (ctx.dim() != est.dim())
            throw ArgumentError("model dimension does not match the estimate");
        try {
            j["nll"] = nll_dense(ctx, est);
        } catch (const NotPositiveDefinite&) {
            j["nll"] = nullptr;
        }
    }
    return j;
}

/// Runs a bench spec and writes results.csv and medians.csv into its output directory.
inline json bench(const BenchSpec& spec, unsigned workers)
{
    const auto rows = run_bench(spec, workers);
    ensure_dir(spec.out_dir);
    std::ostringstream results;
    write_results_csv(results, rows);
    write_text(spec.out_dir / "results.csv", results.str());
    std::ostringstream medians;
    write_medians_csv(medians, aggregate_medians(rows));
    write_text(spec.out_dir / "medians.csv", medians.str());
    std::size_t failed = 0;
    for (const auto& r : rows)
        failed += r.ok ? 0 : 1;
    return {{"rows", rows.size()}, {"failed", failed}, {"results", (spec.out_dir / "results.csv").string()},
            {"medians", (spec.out_dir / "medians.csv").string()}};
}

} // namespace lvggm::cmd
