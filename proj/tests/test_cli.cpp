#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lvggm/commands.hpp"

using namespace lvggm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Drops the timing columns (seconds, mean_iter_seconds) from results.csv.
std::string without_timing(const std::string& csv)
{
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ','))
            cells.push_back(cell);
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (i != 11 && i != 12)
                out << cells[i] << ',';
        out << '\n';
    }
    return out.str();
}

class CliTest : public ::testing::Test {
protected:
    fs::path dir = fs::temp_directory_path() /
                   ("lvggm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    void SetUp() override
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    cmd::GenOptions gen_options(const std::string& sub, bool population = false) const
    {
        cmd::GenOptions g;
        g.p = 40;
        g.n = 40 * 400;
        g.seed = 7;
        g.population = population;
        g.out_dir = dir / sub;
        return g;
    }
};

} // namespace

TEST_F(CliTest, GenWritesManifestAndIsDeterministic)
{
    const auto j = cmd::gen(gen_options("a"));
    for (const char* f : {"S.mat", "Ltrue.mat", "C.mat", "Sigma.mat", "model.json"})
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(j["r"], 2);
    EXPECT_EQ(cmd::read_json(dir / "a" / "model.json")["r"], 2);
    cmd::gen(gen_options("b"));
    for (const char* f : {"S.mat", "Ltrue.mat", "C.mat", "Sigma.mat"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST_F(CliTest, TrueNllMatchesEval)
{
    const auto model = cmd::gen(gen_options("m"));
    cmd::EvalOptions ev;
    ev.estimate_path = dir / "m" / "Ltrue.mat";
    ev.reference_path = dir / "m" / "Ltrue.mat";
    ev.s_path = dir / "m" / "S.mat";
    ev.c_path = dir / "m" / "C.mat";
    const auto report = cmd::eval(ev);
    EXPECT_NEAR(report["nll"].get<double>(), model["true_nll"].get<double>(), 1e-10);
    EXPECT_EQ(report["rel_error"].get<double>(), 0.0);
    EXPECT_EQ(report["effective_rank"], 2);
}

TEST_F(CliTest, EvalOfZeroEstimateIsOne)
{
    cmd::gen(gen_options("m"));
    io::write_matrix(dir / "zero.mat", Matrix::Zero(40, 40));
    cmd::EvalOptions ev;
    ev.estimate_path = dir / "zero.mat";
    ev.reference_path = dir / "m" / "Ltrue.mat";
    EXPECT_DOUBLE_EQ(cmd::eval(ev)["rel_error"].get<double>(), 1.0);
    io::write_matrix(dir / "small.mat", Matrix::Zero(3, 3));
    ev.estimate_path = dir / "small.mat";
    EXPECT_THROW(cmd::eval(ev), ArgumentError);
}

TEST_F(CliTest, FitEpOnPopulationCovariance)
{
    cmd::gen(gen_options("pop", true));
    cmd::FitOptions fit;
    fit.s_path = dir / "pop" / "S.mat";
    fit.c_path = dir / "pop" / "C.mat";
    fit.truth_path = dir / "pop" / "Ltrue.mat";
    fit.rank = 2;
    fit.nll_tolerance = 0.0;
    fit.out_dir = dir / "fit";
    const auto summary = cmd::fit(fit);
    EXPECT_LT(summary["rel_error"].get<double>(), 1e-4);
    EXPECT_EQ(summary["output_rank"], 2);
    for (const char* f : {"Lhat.mat", "trace.csv", "summary.json"})
        EXPECT_TRUE(fs::exists(dir / "fit" / f)) << f;
    // eval reproduces the solver's own relative error.
    cmd::EvalOptions ev;
    ev.estimate_path = dir / "fit" / "Lhat.mat";
    ev.reference_path = dir / "pop" / "Ltrue.mat";
    EXPECT_NEAR(cmd::eval(ev)["rel_error"].get<double>(), summary["rel_error"].get<double>(), 1e-12);
    std::ifstream trace(dir / "fit" / "trace.csv");
    std::string header;
    std::getline(trace, header);
    EXPECT_EQ(header, "iter,nll,seconds,eta,halvings,rank,rel_error");
}

TEST_F(CliTest, FitApAndAdmmWriteOutputs)
{
    cmd::gen(gen_options("m"));
    cmd::FitOptions fit;
    fit.s_path = dir / "m" / "S.mat";
    fit.c_path = dir / "m" / "C.mat";
    fit.rank = 2;
    fit.max_iters = 30;
    fit.algo = Algorithm::ap_bk;
    fit.out_dir = dir / "ap";
    const auto ap = cmd::fit(fit);
    EXPECT_LE(ap["output_rank"].get<int>(), 2);
    EXPECT_FALSE(ap.contains("rel_error"));
    fit.algo = Algorithm::admm;
    fit.out_dir = dir / "admm";
    const auto admm = cmd::fit(fit);
    EXPECT_TRUE(fs::exists(dir / "admm" / "Shat.mat"));
    EXPECT_TRUE(admm.contains("converged"));
}

TEST_F(CliTest, FitRejectsNonPositiveDefiniteSparsePart)
{
    Matrix s(2, 2);
    s << 1.0, 2.0, 2.0, 1.0;
    io::write_matrix(dir / "S.mat", s);
    io::write_matrix(dir / "C.mat", Matrix::Identity(2, 2));
    cmd::FitOptions fit;
    fit.s_path = dir / "S.mat";
    fit.c_path = dir / "C.mat";
    fit.out_dir = dir / "out";
    EXPECT_THROW(cmd::fit(fit), ValidationError);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST_F(CliTest, BenchSpecValidation)
{
    EXPECT_THROW(parse_bench_spec(cmd::json::parse(R"({"dims":[20],"oversampling":[10],"algorithms":[]})")),
                 ValidationError);
    EXPECT_THROW(parse_bench_spec(cmd::json::parse(R"({"dims":[1],"oversampling":[10],"algorithms":["ep"]})")),
                 ValidationError);
    EXPECT_THROW(parse_bench_spec(cmd::json::parse(R"({"dims":[20],"oversampling":[10],"algorithms":["sdp"]})")),
                 ValidationError);
    EXPECT_THROW(parse_bench_spec(cmd::json::parse(R"([1,2])")), ValidationError);
    EXPECT_THROW(parse_bench_spec(cmd::json::parse(R"({"oversampling":[10],"algorithms":["ep"]})")),
                 ValidationError);
}

TEST_F(CliTest, BenchIsDeterministicAndAggregates)
{
    const auto spec_json = cmd::json::parse(
        R"({"dims":[30],"oversampling":[25,100],"algorithms":["ep","ap-bk"],"trials":3,"master_seed":5})");
    BenchSpec spec = parse_bench_spec(spec_json);
    spec.out_dir = dir / "b1";
    const auto summary = cmd::bench(spec, 2);
    EXPECT_EQ(summary["rows"], 12);
    EXPECT_EQ(summary["failed"], 0);
    spec.out_dir = dir / "b2";
    cmd::bench(spec, 1);
    const std::string first = slurp(dir / "b1" / "results.csv");
    EXPECT_EQ(without_timing(first), without_timing(slurp(dir / "b2" / "results.csv")));
    EXPECT_EQ(first.substr(0, first.find('\n')),
              "p,n_over_p,n,algo,trial,status,rel_error,final_nll,true_nll,nll_gap,iterations,seconds,"
              "mean_iter_seconds,rank,admm_objective,error");

    // Medians are recomputable from the raw rows.
    const auto rows = run_bench(spec, 1);
    const auto medians = aggregate_medians(rows);
    ASSERT_EQ(medians.size(), 4u);
    std::vector<double> errs;
    for (const auto& r : rows)
        if (r.algo == Algorithm::ep && r.n_over_p == 25.0)
            errs.push_back(r.rel_error);
    std::sort(errs.begin(), errs.end());
    EXPECT_EQ(medians[0].rel_error, errs[1]);
    EXPECT_TRUE(fs::exists(dir / "b1" / "medians.csv"));
}

TEST_F(CliTest, BenchRecordsFailedRuns)
{
    BenchSpec spec;
    spec.dims = {10};
    spec.oversampling = {5};
    spec.algorithms = {Algorithm::ep};
    spec.trials = 1;
    spec.rank = 20;
    const auto rows = run_bench(spec, 1);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_FALSE(rows[0].ok);
    std::ostringstream out;
    write_results_csv(out, rows);
    EXPECT_NE(out.str().find("failed"), std::string::npos);
}

#ifdef LVGGM_CLI_PATH
TEST_F(CliTest, BinaryReportsErrorsAsJson)
{
    const fs::path err = dir / "err.txt";
    const std::string command = std::string(LVGGM_CLI_PATH) + " fit --s " + (dir / "missing.mat").string() +
                                " --c x --out " + dir.string() + " 2> " + err.string();
    const int status = std::system(command.c_str());
    EXPECT_NE(status, 0);
    const auto j = cmd::json::parse(slurp(err));
    EXPECT_EQ(j["error"], "usage_error");

    cmd::gen(gen_options("m"));
    const std::string bad_rank = std::string(LVGGM_CLI_PATH) + " fit --s " + (dir / "m" / "S.mat").string() +
                                 " --c " + (dir / "m" / "C.mat").string() + " --rank 0 --out " +
                                 (dir / "o").string() + " 2> " + err.string();
    EXPECT_NE(std::system(bad_rank.c_str()), 0);
    EXPECT_EQ(cmd::json::parse(slurp(err))["error"], "argument_error");
}
#endif

TEST(BenchCell, AdmmReportsUnregularizedNllBelowItsObjective)
{
    BenchSpec spec;
    spec.dims = {20};
    spec.oversampling = {50};
    spec.algorithms = {Algorithm::admm};
    spec.trials = 1;
    spec.admm.l1_weights = {0.05};
    spec.admm.nuclear_weights = {0.05};
    const BenchRow row = run_bench_cell(spec, 20, 50.0, Algorithm::admm, 0);
    ASSERT_TRUE(row.ok) << row.error;
    EXPECT_TRUE(std::isfinite(row.final_nll));
    EXPECT_GT(row.admm_objective, row.final_nll);
    EXPECT_TRUE(std::isnan(run_bench_cell(spec, 20, 50.0, Algorithm::ep, 0).admm_objective));
}

TEST_F(CliTest, FitFromRawSamples)
{
    const SyntheticModel m = gen_model(20, 1, 12);
    io::write_matrix(dir / "S.mat", m.s_star.mat());
    io::write_matrix(dir / "x.csv", draw_samples(m, 4000, 13));

    cmd::FitOptions admm;
    admm.algo = Algorithm::admm;
    admm.samples_path = dir / "x.csv";
    admm.out_dir = dir / "admm";
    const auto a = cmd::fit(admm);
    EXPECT_TRUE(fs::exists(dir / "admm" / "Shat.mat"));
    EXPECT_LT(a["final_nll"].get<double>(), a["admm_objective"].get<double>());

    cmd::FitOptions ep;
    ep.s_path = dir / "S.mat";
    ep.samples_path = dir / "x.csv";
    ep.rank = 1;
    ep.out_dir = dir / "ep";
    const auto e = cmd::fit(ep);
    EXPECT_EQ(e["output_rank"], 1);

    // The same fit from the covariance file agrees exactly.
    io::write_matrix(dir / "C.mat", load_dataset(dir / "x.csv").covariance.mat());
    ep.samples_path.reset();
    ep.c_path = dir / "C.mat";
    ep.out_dir = dir / "ep_c";
    EXPECT_EQ(cmd::fit(ep)["final_nll"], e["final_nll"]);

    ep.s_path.clear();
    EXPECT_THROW(cmd::fit(ep), ArgumentError);
    ep.s_path = dir / "S.mat";
    ep.samples_path = dir / "x.csv";
    EXPECT_THROW(cmd::fit(ep), ArgumentError);
}
