// lvggm: generate synthetic models, fit them, evaluate estimates, run benchmarks.
// Errors are reported as one JSON object on stderr with a nonzero exit code.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvggm/commands.hpp"

namespace {

using lvggm::cmd::json;

int report_error(const std::string& kind, const std::string& message, int code)
{
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Rank-constrained latent variable Gaussian graphical model estimation"};
    app.require_subcommand(1);

    lvggm::cmd::GenOptions gen;
    std::string gen_rank = "auto";
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic model and its covariance");
    gen_cmd->add_option("--p", gen.p, "Dimension")->required()->check(CLI::Range(2, 1 << 20));
    gen_cmd->add_option("--r", gen_rank, "Latent rank or 'auto' (5% of p)");
    gen_cmd->add_option("--n", gen.n, "Sample count");
    gen_cmd->add_option("--seed", gen.seed, "Master seed");
    gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
    gen_cmd->add_flag("--population", gen.population, "Write the population covariance instead of samples");
    gen_cmd->add_option("--diag-low", gen.params.diag_low, "Lower end of the S* diagonal range");
    gen_cmd->add_option("--diag-high", gen.params.diag_high, "Upper end of the S* diagonal range");
    gen_cmd->add_option("--lstar-norm", gen.params.lstar_spectral_norm, "Spectral norm of L*");

    lvggm::cmd::FitOptions fit;
    std::string fit_algo = "ep";
    std::string fit_step = "auto";
    std::string fit_truth;
    double floor_value = 0.0;
    int depth = 0;
    auto* fit_cmd = app.add_subcommand("fit", "Estimate L from S* and C");
    std::string fit_samples;
    bool no_center = false;
    fit_cmd->add_option("--s", fit.s_path, "Known sparse component S* (optional for admm)")->check(CLI::ExistingFile);
    auto* c_opt = fit_cmd->add_option("--c", fit.c_path, "Sample covariance C")->check(CLI::ExistingFile);
    auto* samples_opt = fit_cmd->add_option("--samples", fit_samples, "Observations, one row per sample (.csv or .mat)")
                            ->check(CLI::ExistingFile)
                            ->excludes(c_opt);
    c_opt->excludes(samples_opt);
    fit_cmd->add_flag("--header", fit.dataset.skip_header, "Skip the first line of a samples CSV");
    fit_cmd->add_flag("--no-center", no_center, "Use raw second moments instead of centering the samples");
    fit_cmd->add_option("--algo", fit_algo, "ep | ap-bk | ap-lanczos | admm");
    fit_cmd->add_option("--rank", fit.rank, "Target rank r");
    fit_cmd->add_option("--step", fit_step, "Step size or 'auto'");
    fit_cmd->add_option("--max-iters", fit.max_iters, "Iteration cap");
    fit_cmd->add_option("--tol", fit.nll_tolerance, "Relative NLL change over 5 iterations that stops the run");
    auto* floor_opt = fit_cmd->add_option("--true-nll-floor", floor_value, "Stop once the NLL reaches this value");
    fit_cmd->add_option("--seed", fit.seed, "Projection seed");
    auto* depth_opt = fit_cmd->add_option("--krylov-depth", depth, "Block Krylov depth (default: automatic)");
    fit_cmd->add_flag("--finalize", fit.finalize_psd, "Project the ap-* estimate onto PSD rank-r matrices");
    fit_cmd->add_option("--truth", fit_truth, "Reference L* for the rel_error column")->check(CLI::ExistingFile);
    fit_cmd->add_option("--out", fit.out_dir, "Output directory")->required();
    fit_cmd->add_option("--l1", fit.admm.l1_weight, "ADMM l1 weight");
    fit_cmd->add_option("--nuclear", fit.admm.nuclear_weight, "ADMM nuclear-norm weight");
    fit_cmd->add_option("--rho", fit.admm.rho, "ADMM penalty parameter");
    fit_cmd->add_option("--admm-iters", fit.admm.max_iters, "ADMM iteration cap");

    lvggm::cmd::EvalOptions ev;
    std::string ev_s;
    std::string ev_c;
    std::string ev_out;
    auto* eval_cmd = app.add_subcommand("eval", "Compare an estimate with a reference");
    eval_cmd->add_option("--estimate", ev.estimate_path, "Estimated L")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--reference", ev.reference_path, "Reference L")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--s", ev_s, "S* for the NLL column")->check(CLI::ExistingFile);
    eval_cmd->add_option("--c", ev_c, "C for the NLL column")->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", ev_out, "Also write the report to this file");

    std::string spec_path;
    std::string bench_out;
    unsigned workers = 0;
    auto* bench_cmd = app.add_subcommand("bench", "Run a Monte-Carlo benchmark from a JSON spec");
    bench_cmd->add_option("--spec", spec_path, "Bench spec JSON")->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--out", bench_out, "Output directory (overrides the JSON out key)");
    bench_cmd->add_option("--workers", workers, "Worker threads (default: LVGGM_WORKERS or all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage_error", e.what(), 2);
    }

    try {
        json result;
        if (*gen_cmd) {
            if (gen_rank != "auto")
                gen.rank = std::stol(gen_rank);
            result = lvggm::cmd::gen(gen);
        } else if (*fit_cmd) {
            fit.algo = lvggm::parse_algorithm(fit_algo);
            if (!fit_samples.empty())
                fit.samples_path = fit_samples;
            fit.dataset.center = !no_center;
            if (fit_step != "auto")
                fit.step = std::stod(fit_step);
            if (!fit_truth.empty())
                fit.truth_path = fit_truth;
            if (*floor_opt)
                fit.true_nll_floor = floor_value;
            if (*depth_opt)
                fit.krylov_depth = depth;
            result = lvggm::cmd::fit(fit);
        } else if (*eval_cmd) {
            if (!ev_s.empty())
                ev.s_path = ev_s;
            if (!ev_c.empty())
                ev.c_path = ev_c;
            result = lvggm::cmd::eval(ev);
            if (!ev_out.empty())
                lvggm::cmd::write_text(ev_out, result.dump(2) + "\n");
        } else if (*bench_cmd) {
            lvggm::BenchSpec spec = lvggm::parse_bench_spec(lvggm::cmd::read_json(spec_path));
            if (!bench_out.empty())
                spec.out_dir = bench_out;
            result = lvggm::cmd::bench(spec, workers ? workers : lvggm::default_workers());
        }
        std::cout << result.dump(2) << '\n';
        return 0;
    } catch (const lvggm::Error& e) {
        return report_error(e.kind(), e.what(), 1);
    } catch (const std::invalid_argument& e) {
        return report_error("argument_error", std::string("cannot parse number: ") + e.what(), 1);
    } catch (const std::exception& e) {
        return report_error("internal_error", e.what(), 1);
    }
}
