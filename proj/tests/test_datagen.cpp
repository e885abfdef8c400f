#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lvggm/datagen.hpp"
#include "support.hpp"

using namespace lvggm;

TEST(GenModel, AutoRank)
{
    EXPECT_EQ(auto_rank(100), 5);
    EXPECT_EQ(auto_rank(1000), 50);
    EXPECT_EQ(auto_rank(30), 2);
    EXPECT_EQ(gen_model(100, std::nullopt, 1).rank, 5);
}

TEST(GenModel, Invariants)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SyntheticModel m = gen_model(40, 3, seed);
        EXPECT_NO_THROW(CholeskyFactor{m.theta_star});
        // S* diagonal with entries in [1, 2].
        Matrix off = m.s_star.mat();
        off.diagonal().setZero();
        EXPECT_EQ(off.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_GE(m.s_star.mat().diagonal().minCoeff(), 1.0);
        EXPECT_LE(m.s_star.mat().diagonal().maxCoeff(), 2.0);
        const SymMatrix l = m.l_star.materialize();
        EXPECT_EQ(effective_rank(l), 3);
        EXPECT_NEAR(spectral_norm(l), 1.0, 1e-12);
        EXPECT_LT((m.sigma_star.mat() * m.theta_star.mat() - Matrix::Identity(40, 40)).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_GE(sym_evd(m.theta_star).eigenvalues.minCoeff(), 0.5);
    }
}

TEST(GenModel, BitwiseReproducible)
{
    const SyntheticModel a = gen_model(25, 2, 99);
    const SyntheticModel b = gen_model(25, 2, 99);
    EXPECT_EQ(a.s_star.mat(), b.s_star.mat());
    EXPECT_EQ(a.l_star.factor(), b.l_star.factor());
    EXPECT_EQ(a.sigma_star.mat(), b.sigma_star.mat());
    EXPECT_NE(gen_model(25, 2, 100).l_star.factor(), a.l_star.factor());
}

TEST(GenModel, MarginShiftsTheDiagonal)
{
    ModelParams params;
    params.diag_low = 0.1;
    params.diag_high = 0.2;
    params.min_eigen_margin = 1.0;
    const SyntheticModel m = gen_model(20, 2, 3, params);
    EXPECT_GE(sym_evd(m.theta_star).eigenvalues.minCoeff(), 1.0 - 1e-12);
}

TEST(GenModel, RejectsInfeasibleParameters)
{
    EXPECT_THROW(gen_model(1, 1, 0), GenerationError);
    EXPECT_THROW(gen_model(10, 0, 0), GenerationError);
    EXPECT_THROW(gen_model(10, 10, 0), GenerationError);
    ModelParams bad;
    bad.diag_low = -1.0;
    EXPECT_THROW(gen_model(10, 2, 0, bad), GenerationError);
    bad = {};
    bad.lstar_spectral_norm = 0.0;
    EXPECT_THROW(gen_model(10, 2, 0, bad), GenerationError);
}

TEST(SampleCovariance, SymmetricPsd)
{
    const SyntheticModel m = gen_model(30, 2, 4);
    for (Index n : {5, 31, 200}) {
        const SymMatrix c = sample_covariance(m, n, 8);
        EXPECT_EQ(c.mat(), c.mat().transpose());
        EXPECT_GE(sym_evd(c).eigenvalues.minCoeff(), -1e-10);
    }
    EXPECT_THROW(sample_covariance(m, 0, 1), ArgumentError);
}

TEST(SampleCovariance, LawOfLargeNumbers)
{
    const SyntheticModel m = gen_model(5, 1, 5);
    const SymMatrix c = sample_covariance(m, 1'000'000, 6);
    EXPECT_LT((c.mat() - m.sigma_star.mat()).norm() / m.sigma_star.frobenius_norm(), 0.01);
}

TEST(SampleCovariance, MatchesExplicitSamples)
{
    const SyntheticModel m = gen_model(12, 1, 7);
    const Matrix x = draw_samples(m, 5000, 8);
    const SymMatrix direct = sample_covariance(m, 5000, 8);
    const SymMatrix from_rows = covariance_from_samples(x, false);
    EXPECT_LT((direct.mat() - from_rows.mat()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SampleCovariance, DeviationShrinksLikeInverseSqrtN)
{
    const SyntheticModel m = gen_model(10, 1, 9);
    std::vector<double> log_n;
    std::vector<double> log_dev;
    for (Index n : {200, 800, 3200, 12800}) {
        std::vector<double> devs;
        for (std::uint64_t t = 0; t < 9; ++t)
            devs.push_back(spectral_norm(sample_covariance(m, n, 100 + t) - m.sigma_star));
        std::sort(devs.begin(), devs.end());
        log_n.push_back(std::log(static_cast<double>(n)));
        log_dev.push_back(std::log(devs[devs.size() / 2]));
    }
    const double mx = std::accumulate(log_n.begin(), log_n.end(), 0.0) / 4.0;
    const double my = std::accumulate(log_dev.begin(), log_dev.end(), 0.0) / 4.0;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        sxy += (log_n[i] - mx) * (log_dev[i] - my);
        sxx += (log_n[i] - mx) * (log_n[i] - mx);
    }
    const double slope = sxy / sxx;
    EXPECT_GE(slope, -0.65);
    EXPECT_LE(slope, -0.35);
}

class DatasetFiles : public ::testing::Test {
protected:
    std::filesystem::path dir = std::filesystem::temp_directory_path() / "lvggm_dataset_test";
    void SetUp() override { std::filesystem::create_directories(dir); }
    void TearDown() override { std::filesystem::remove_all(dir); }

    std::filesystem::path write(const std::string& name, const std::string& text)
    {
        std::ofstream(dir / name) << text;
        return dir / name;
    }
};

TEST_F(DatasetFiles, TwoSampleHandComputation)
{
    const Dataset d = load_dataset(write("two.csv", "1,0\n0,1\n"));
    EXPECT_EQ(d.n, 2);
    EXPECT_EQ(d.p, 2);
    EXPECT_DOUBLE_EQ(d.covariance(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(d.covariance(0, 1), -0.25);
    EXPECT_DOUBLE_EQ(d.covariance(1, 1), 0.25);
}

TEST_F(DatasetFiles, HeaderColumnsAndNoCentering)
{
    DatasetOptions opt;
    opt.skip_header = true;
    opt.center = false;
    opt.columns = {2, 0};
    const Dataset d = load_dataset(write("h.csv", "a,b,c\n1,5,2\n3,6,4\n"), opt);
    EXPECT_EQ(d.p, 2);
    EXPECT_DOUBLE_EQ(d.covariance(0, 0), (4.0 + 16.0) / 2.0);
    EXPECT_DOUBLE_EQ(d.covariance(0, 1), (2.0 + 12.0) / 2.0);
    opt.columns = {3};
    EXPECT_THROW(load_dataset(dir / "h.csv", opt), ArgumentError);
}

TEST_F(DatasetFiles, ErrorsNameTheRow)
{
    try {
        load_dataset(write("ragged.csv", "1,2\n3,4\n5\n"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
    }
    EXPECT_THROW(load_dataset(write("empty.csv", "")), ParseError);
    EXPECT_THROW(load_dataset(write("text.csv", "1,a\n")), ParseError);
}

TEST_F(DatasetFiles, FileAndMemoryPathsAgree)
{
    const SyntheticModel m = gen_model(1000, std::nullopt, 10);
    const Matrix x = draw_samples(m, 301, 11);
    io::write_matrix(dir / "samples.csv", x);
    DatasetOptions opt;
    opt.center = false;
    const Dataset d = load_dataset(dir / "samples.csv", opt);
    EXPECT_EQ(d.n, 301);
    EXPECT_EQ(d.p, 1000);
    EXPECT_EQ(d.covariance.mat(), covariance_from_samples(x, false).mat());
    EXPECT_LT((d.covariance.mat() - sample_covariance(m, 301, 11).mat()).cwiseAbs().maxCoeff(), 1e-12);
    io::write_matrix(dir / "samples.mat", x);
    EXPECT_EQ(load_dataset(dir / "samples.mat").covariance.mat(), covariance_from_samples(x, true).mat());
}
