#pragma once

// Monte-Carlo benchmark harness: one synthetic model per (p, trial), one
// sample covariance per (p, trial, n/p), every listed algorithm on each.
// Trials run on a worker pool; rows are sorted before they are written so the
// output does not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "lvggm/baseline.hpp"
#include "lvggm/datagen.hpp"
#include "lvggm/objective.hpp"
#include "lvggm/solvers.hpp"

namespace lvggm {

enum class Algorithm { ep, ap_bk, ap_lanczos, admm };

inline const char* to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::ep: return "ep";
    case Algorithm::ap_bk: return "ap-bk";
    case Algorithm::ap_lanczos: return "ap-lanczos";
    case Algorithm::admm: return "admm";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& name)
{
    if (name == "ep")
        return Algorithm::ep;
    if (name == "ap-bk" || name == "ap")
        return Algorithm::ap_bk;
    if (name == "ap-lanczos")
        return Algorithm::ap_lanczos;
    if (name == "admm")
        return Algorithm::admm;
    throw ValidationError("unknown algorithm '" + name + "' (expected ep, ap-bk, ap-lanczos or admm)");
}

/// Weight grid for the ADMM comparator; the pair with the smallest relative
/// error against the known truth is reported.
struct AdmmGrid {
    std::vector<double> l1_weights{0.01, 0.1};
    std::vector<double> nuclear_weights{0.01, 0.02, 0.03, 0.05, 0.1};
    AdmmConfig base{};
};

struct TunedAdmm {
    AdmmResult result;
    AdmmConfig config;
    double rel_error = 0.0;
};

inline TunedAdmm tune_admm(const SymMatrix& c, const SymMatrix& truth, const AdmmGrid& grid)
{
    if (grid.l1_weights.empty() || grid.nuclear_weights.empty())
        throw ValidationError("ADMM grid must not be empty");
    std::optional<TunedAdmm> best;
    for (double a : grid.l1_weights)
        for (double b : grid.nuclear_weights) {
            AdmmConfig cfg = grid.base;
            cfg.l1_weight = a;
            cfg.nuclear_weight = b;
            AdmmResult r = admm_lvglasso(c, cfg);
            const double err = relative_error(r.l_hat, truth);
            if (!best || err < best->rel_error)
                best = TunedAdmm{std::move(r), cfg, err};
        }
    return std::move(*best);
}

enum class StopRule { tolerance, true_nll };

struct BenchSpec {
    std::vector<Index> dims;
    std::vector<double> oversampling;
    int trials = 5;
    std::vector<Algorithm> algorithms;
    std::uint64_t master_seed = 0;
    std::filesystem::path out_dir = ".";
    /// Rank for every run; 5% of p when empty.
    std::optional<Index> rank;
    int max_iters = 600;
    StopRule stop = StopRule::true_nll;
    ModelParams model;
    AdmmGrid admm;

    void validate() const
    {
        if (dims.empty())
            throw ValidationError("bench spec: dims must not be empty");
        if (oversampling.empty())
            throw ValidationError("bench spec: oversampling must not be empty");
        if (algorithms.empty())
            throw ValidationError("bench spec: algorithm list must not be empty");
        if (trials < 1)
            throw ValidationError("bench spec: trials must be at least 1");
        if (max_iters < 1)
            throw ValidationError("bench spec: max_iters must be positive");
        for (Index p : dims)
            if (p < 2)
                throw ValidationError("bench spec: every p must be at least 2");
        for (double r : oversampling)
            if (!(r > 0.0))
                throw ValidationError("bench spec: oversampling ratios must be positive");
        model.validate();
    }
};

inline BenchSpec parse_bench_spec(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ValidationError("bench spec must be a JSON object");
    BenchSpec s;
    try {
        s.dims = j.at("dims").get<std::vector<Index>>();
        s.oversampling = j.at("oversampling").get<std::vector<double>>();
        s.trials = j.value("trials", 5);
        for (const auto& a : j.at("algorithms").get<std::vector<std::string>>())
            s.algorithms.push_back(parse_algorithm(a));
        s.master_seed = j.value("master_seed", std::uint64_t{0});
        if (j.contains("out"))
            s.out_dir = j.at("out").get<std::string>();
        if (j.contains("rank") && !j.at("rank").is_string())
            s.rank = j.at("rank").get<Index>();
        s.max_iters = j.value("max_iters", 600);
        const std::string stop = j.value("stop", std::string("true_nll"));
        if (stop == "tolerance")
            s.stop = StopRule::tolerance;
        else if (stop == "true_nll")
            s.stop = StopRule::true_nll;
        else
            throw ValidationError("bench spec: stop must be 'tolerance' or 'true_nll'");
        if (j.contains("admm_l1"))
            s.admm.l1_weights = j.at("admm_l1").get<std::vector<double>>();
        if (j.contains("admm_nuclear"))
            s.admm.nuclear_weights = j.at("admm_nuclear").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bench spec: ") + e.what());
    }
    s.validate();
    return s;
}

struct BenchRow {
    Index p = 0;
    double n_over_p = 0.0;
    Index n = 0;
    Algorithm algo = Algorithm::ep;
    int trial = 0;
    bool ok = false;
    double rel_error = 0.0;
    double final_nll = 0.0;
    double true_nll = 0.0;
    int iterations = 0;
    double seconds = 0.0;
    double mean_iter_seconds = 0.0;
    Index rank = 0;
    /// Regularized ADMM objective at the chosen weights; NaN for other algorithms.
    double admm_objective = std::numeric_limits<double>::quiet_NaN();
    std::string error;

    double nll_gap() const { return final_nll - true_nll; }

    auto key() const { return std::make_tuple(p, n_over_p, static_cast<int>(algo), trial); }
};

/// Seeds shared by every algorithm and sample size of a (p, trial) cell, so
/// comparisons across n/p use the same ground-truth model.
inline std::uint64_t model_seed(std::uint64_t master, Index p, int trial)
{
    return derive_seed(master, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(trial), 1);
}

inline std::uint64_t sample_seed(std::uint64_t master, Index p, int trial, Index n)
{
    return derive_seed(master, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(trial),
                       0x100 + static_cast<std::uint64_t>(n));
}

inline Index samples_for(Index p, double ratio) { return std::max<Index>(1, static_cast<Index>(std::llround(ratio * p))); }

/// Solver settings the harness and the CLI use for a rank-constrained algorithm.
inline SolverConfig solver_config_for(Algorithm algo, Index rank, std::uint64_t seed, int max_iters)
{
    SolverConfig cfg;
    cfg.rank = rank;
    cfg.max_iters = max_iters;
    cfg.projection.seed = seed;
    cfg.projection.backend = algo == Algorithm::ap_lanczos ? ProjectionBackend::lanczos : ProjectionBackend::block_krylov;
    return cfg;
}

inline BenchRow run_bench_cell(const BenchSpec& spec, Index p, double ratio, Algorithm algo, int trial)
{
    BenchRow row;
    row.p = p;
    row.n_over_p = ratio;
    row.n = samples_for(p, ratio);
    row.algo = algo;
    row.trial = trial;
    try {
        const SyntheticModel model = gen_model(p, spec.rank, model_seed(spec.master_seed, p, trial), spec.model);
        const SymMatrix c = sample_covariance(model, row.n, sample_seed(spec.master_seed, p, trial, row.n));
        const ModelContext ctx(model.s_star, c);
        const SymMatrix truth = model.l_star.materialize();
        row.true_nll = nll(ctx, model.l_star);
        if (algo == Algorithm::admm) {
            const auto t0 = std::chrono::steady_clock::now();
            const TunedAdmm tuned = tune_admm(c, truth, spec.admm);
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.rel_error = tuned.rel_error;
            AdmmConfig unregularized = tuned.config;
            unregularized.l1_weight = 0.0;
            unregularized.nuclear_weight = 0.0;
            row.final_nll = lvggm::admm_objective(c, tuned.result.s_hat, tuned.result.l_hat, unregularized);
            row.admm_objective = lvggm::admm_objective(c, tuned.result.s_hat, tuned.result.l_hat, tuned.config);
            row.iterations = tuned.result.iterations;
            row.mean_iter_seconds = row.seconds / std::max(1, tuned.result.iterations);
            row.rank = effective_rank(tuned.result.l_hat);
        } else {
            SolverConfig cfg = solver_config_for(algo, model.rank,
                                                 derive_seed(spec.master_seed, static_cast<std::uint64_t>(p),
                                                             static_cast<std::uint64_t>(trial), 2),
                                                 spec.max_iters);
            cfg.truth = truth;
            if (spec.stop == StopRule::true_nll)
                cfg.true_nll_floor = row.true_nll;
            const FitResult fit = algo == Algorithm::ep ? ep_lvm(ctx, cfg) : ap_lvm(ctx, cfg);
            const TraceRecord& last = fit.trace.records.back();
            row.rel_error = last.rel_error.value_or(0.0);
            row.final_nll = last.nll;
            row.iterations = fit.trace.iterations;
            row.seconds = fit.trace.total_seconds();
            row.mean_iter_seconds = fit.trace.mean_iteration_seconds();
            row.rank = last.rank;
        }
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

/// Worker count from LVGGM_WORKERS, else the hardware concurrency.
inline unsigned default_workers()
{
    if (const char* env = std::getenv("LVGGM_WORKERS")) {
        unsigned v = 0;
        const auto [ptr, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), v);
        if (ec == std::errc() && v > 0)
            return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline std::vector<BenchRow> run_bench(const BenchSpec& spec, unsigned workers = default_workers())
{
    spec.validate();
    struct Job {
        Index p;
        double ratio;
        Algorithm algo;
        int trial;
    };
    std::vector<Job> jobs;
    for (Index p : spec.dims)
        for (double ratio : spec.oversampling)
            for (Algorithm a : spec.algorithms)
                for (int t = 0; t < spec.trials; ++t)
                    jobs.push_back({p, ratio, a, t});

    std::vector<BenchRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++)
            rows[i] = run_bench_cell(spec, jobs[i].p, jobs[i].ratio, jobs[i].algo, jobs[i].trial);
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
    std::vector<std::jthread> pool;
    for (unsigned i = 1; i < n_threads; ++i)
        pool.emplace_back(work);
    work();
    pool.clear();
    std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) { return a.key() < b.key(); });
    return rows;
}

namespace detail {

inline std::string fmt_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& s)
{
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"')
            out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

inline double median(std::vector<double> v)
{
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

inline void write_results_csv(std::ostream& out, const std::vector<BenchRow>& rows)
{
    using detail::fmt_double;
    out << "p,n_over_p,n,algo,trial,status,rel_error,final_nll,true_nll,nll_gap,iterations,seconds,mean_iter_seconds,"
           "rank,admm_objective,error\n";
    for (const auto& r : rows) {
        out << r.p << ',' << fmt_double(r.n_over_p) << ',' << r.n << ',' << to_string(r.algo) << ',' << r.trial << ','
            << (r.ok ? "ok" : "failed") << ',';
        if (r.ok)
            out << fmt_double(r.rel_error) << ',' << fmt_double(r.final_nll) << ',' << fmt_double(r.true_nll) << ','
                << fmt_double(r.nll_gap()) << ',' << r.iterations << ',' << fmt_double(r.seconds) << ','
                << fmt_double(r.mean_iter_seconds) << ',' << r.rank << ','
                << (std::isnan(r.admm_objective) ? std::string() : fmt_double(r.admm_objective)) << ',';
        else
            out << ",,,,,,,,,";
        out << (r.error.empty() ? "" : detail::csv_escape(r.error)) << '\n';
    }
}

struct BenchMedian {
    Index p = 0;
    double n_over_p = 0.0;
    Algorithm algo = Algorithm::ep;
    int ok_trials = 0;
    double rel_error = 0.0;
    double nll_gap = 0.0;
    double seconds = 0.0;
    double mean_iter_seconds = 0.0;
    double rank = 0.0;
};

/// Medians over successful trials of each (p, n/p, algo) group; rows must be sorted.
inline std::vector<BenchMedian> aggregate_medians(const std::vector<BenchRow>& rows)
{
    std::vector<BenchMedian> out;
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        std::vector<double> err, gap, sec, iter_sec, rank;
        while (j < rows.size() && rows[j].p == rows[i].p && rows[j].n_over_p == rows[i].n_over_p &&
               rows[j].algo == rows[i].algo) {
            if (rows[j].ok) {
                err.push_back(rows[j].rel_error);
                gap.push_back(rows[j].nll_gap());
                sec.push_back(rows[j].seconds);
                iter_sec.push_back(rows[j].mean_iter_seconds);
                rank.push_back(static_cast<double>(rows[j].rank));
            }
            ++j;
        }
        out.push_back({rows[i].p, rows[i].n_over_p, rows[i].algo, static_cast<int>(err.size()), detail::median(err),
                       detail::median(gap), detail::median(sec), detail::median(iter_sec), detail::median(rank)});
        i = j;
    }
    return out;
}

inline void write_medians_csv(std::ostream& out, const std::vector<BenchMedian>& medians)
{
    using detail::fmt_double;
    out << "p,n_over_p,algo,ok_trials,median_rel_error,median_nll_gap,median_seconds,median_mean_iter_seconds,"
           "median_rank\n";
    for (const auto& m : medians)
        out << m.p << ',' << fmt_double(m.n_over_p) << ',' << to_string(m.algo) << ',' << m.ok_trials << ','
            << fmt_double(m.rel_error) << ',' << fmt_double(m.nll_gap) << ',' << fmt_double(m.seconds) << ','
            << fmt_double(m.mean_iter_seconds) << ',' << fmt_double(m.rank) << '\n';
}

} // namespace lvggm
