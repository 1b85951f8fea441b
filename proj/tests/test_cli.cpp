#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>

#include "support.hpp"

#ifndef RULEHTE_CLI
#error "RULEHTE_CLI must point at the rulehte executable"
#endif

namespace fs = std::filesystem;
using testing_support::slurp;
using testing_support::spit;

namespace {

const std::string kSmallFit = " --trees 30 --mean-depth 3 --shrinkage 0.1 --min-leaf 5 --folds 3 --lambda-path 15";

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(RULEHTE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

class Cli : public ::testing::Test {
protected:
    static inline fs::path dir;
    static inline fs::path data, model;

    static void SetUpTestSuite() {
        dir = testing_support::scratch("cli");
        data = dir / "train.csv";
        model = dir / "model.json";
        ASSERT_EQ(cli("simulate --scenario 2 --n 300 --p 6 --seed 4 --out " + data.string(), dir).code, 0);
        ASSERT_EQ(cli("fit --data " + data.string() + " --pscore-col pscore --model " + model.string() + kSmallFit,
                      dir).code,
                  0);
    }
};

}  // namespace

TEST_F(Cli, SimulateShapeAndDeterminism) {
    const auto a = dir / "a.csv", b = dir / "b.csv";
    ASSERT_EQ(cli("simulate --scenario 1 --n 600 --p 50 --design rct --seed 1 --out " + a.string(), dir).code, 0);
    ASSERT_EQ(cli("simulate --scenario 1 --n 600 --p 50 --design rct --seed 1 --out " + b.string(), dir).code, 0);
    const auto text = slurp(a);
    EXPECT_EQ(text, slurp(b));
    EXPECT_EQ(count_lines(text), 601u);
    const auto header = first_line(text);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 53);
    EXPECT_EQ(header.substr(0, 16), "y,t,pscore,x1,x2");
}

TEST_F(Cli, SimulateRejectsUnknownScenario) {
    const auto r = cli("simulate --scenario 13 --out " + (dir / "bad.csv").string(), dir);
    EXPECT_NE(r.code, 0);
    EXPECT_FALSE(fs::exists(dir / "bad.csv"));
}

TEST_F(Cli, FitWritesModelAndSummary) {
    const auto m = dir / "m2.json";
    const auto r = cli("fit --data " + data.string() + " --pscore 0.5 --model " + m.string() + kSmallFit, dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("rules_selected "), std::string::npos);
    EXPECT_NE(r.out.find("p 6\n"), std::string::npos);
    const auto loaded = rulehte::load_model(m.string());
    EXPECT_EQ(loaded.feature_names.size(), 6u);
    EXPECT_EQ(loaded.feature_names.front(), "x1");
}

TEST_F(Cli, FitRejectsBadPropensityFlags) {
    const auto m = dir / "never.json";
    auto r = cli("fit --data " + data.string() + " --pscore 1.5 --model " + m.string(), dir);
    EXPECT_NE(r.code, 0);
    r = cli("fit --data " + data.string() + " --model " + m.string(), dir);
    EXPECT_NE(r.code, 0);
    r = cli("fit --data " + data.string() + " --pscore 0.5 --pscore-col pscore --model " + m.string(), dir);
    EXPECT_NE(r.code, 0);
    r = cli("fit --data " + data.string() + " --pscore-col nothere --model " + m.string(), dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("nothere"), std::string::npos);
    EXPECT_FALSE(fs::exists(m));
}

TEST_F(Cli, PredictMatchesLibrary) {
    const auto out = dir / "pred.csv";
    ASSERT_EQ(cli("predict --model " + model.string() + " --data " + data.string() + " --out " + out.string(), dir).code,
              0);
    const auto table = rulehte::read_csv_table(out.string());
    ASSERT_EQ(table.header, std::vector<std::string>{"tau_hat"});
    ASSERT_EQ(table.rows(), 300u);
    const auto m = rulehte::load_model(model.string());
    rulehte::ColumnSpec spec;
    spec.pscore_column = "pscore";
    spec.truth_column = "true_tau";
    const auto ds = rulehte::load_csv(data.string(), spec);
    for (std::size_t i = 0; i < 300; ++i) {
        EXPECT_TRUE(std::isfinite(table.columns[0][i]));
        EXPECT_EQ(table.columns[0][i], m.predict_hte(ds.x().row(i)));
    }
}

TEST_F(Cli, PredictBothArms) {
    const auto r = cli("predict --both-arms --model " + model.string() + " --data " + data.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto path = dir / "both.csv";
    spit(path, r.out);
    const auto table = rulehte::read_csv_table(path.string());
    ASSERT_EQ(table.header, (std::vector<std::string>{"tau_hat", "f0", "f1"}));
    for (std::size_t i = 0; i < table.rows(); ++i)
        EXPECT_NEAR(table.columns[2][i] - table.columns[1][i], table.columns[0][i], 1e-12);
}

TEST_F(Cli, PredictNamesMissingFeature) {
    const auto partial = dir / "partial.csv";
    spit(partial, "x1,x2,x3,x4,x5\n0,1,0,1,0\n");
    const auto r = cli("predict --model " + model.string() + " --data " + partial.string(), dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("x6"), std::string::npos) << r.err;
}

TEST_F(Cli, InspectTable) {
    const auto csv = dir / "terms.csv";
    auto r = cli("inspect --model " + model.string() + " --out " + csv.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, 10), "intercept ");
    EXPECT_EQ(first_line(slurp(csv)), "kind,term,coefficient,importance,support");
    const auto filtered = count_lines(r.out);
    r = cli("inspect --all --model " + model.string(), dir);
    ASSERT_EQ(r.code, 0);
    const auto m = rulehte::load_model(model.string());
    EXPECT_GE(count_lines(r.out), filtered);
    std::size_t nonzero = 0;
    for (const auto& row : rulehte::importance(m).rows) nonzero += row.importance > 0.0;
    EXPECT_EQ(count_lines(r.out), 2 + nonzero);
    r = cli("inspect --all --top 1 --model " + model.string(), dir);
    EXPECT_EQ(count_lines(r.out), 2 + std::min<std::size_t>(nonzero, 1));
}

TEST_F(Cli, InspectInterceptOnlyModel) {
    rulehte::CausalRuleFitModel m;
    m.feature_names = {"x1"};
    m.meta.p = 1;
    m.intercept = 2.0;
    const auto path = dir / "empty.json";
    rulehte::save_model(m, path.string());
    const auto r = cli("inspect --model " + path.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "intercept 2\nimportance\tcoefficient\tsupport\tterm\n");
}

TEST_F(Cli, TuneSinglePointGrid) {
    const auto out = dir / "grid.csv";
    const auto r = cli("tune --data " + data.string() +
                           " --pscore-col pscore --trees 20 --mean-depth 3 --subsample 0.5 --shrinkage 0.1"
                           " --folds 2 --lambda-path 10 --out " + out.string(),
                       dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, 29), "best trees 20 mean_depth 3 su");
    EXPECT_EQ(count_lines(slurp(out)), 2u);
}

TEST_F(Cli, EvaluateExamples) {
    const auto same = dir / "same.csv", one = dir / "one.csv", zero = dir / "zero.csv", short_file = dir / "s.csv";
    spit(same, "true_tau,tau_hat\n1.5,1.5\n-2,-2\n");
    spit(zero, "true_tau\n0\n0\n");
    spit(one, "tau_hat\n1\n1\n");
    spit(short_file, "tau_hat\n1\n");
    auto r = cli("evaluate --data " + same.string(), dir);
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "0\n");
    r = cli("evaluate --data " + zero.string() + " " + one.string(), dir);
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "1\n");
    r = cli("evaluate --data " + zero.string() + " " + short_file.string(), dir);
    EXPECT_NE(r.code, 0);
    r = cli("evaluate --data " + same.string() + " --pred-col nope", dir);
    EXPECT_NE(r.code, 0);
}

TEST_F(Cli, ConfigFileSuppliesFlags) {
    const auto cfg = dir / "fit.toml";
    const auto m = dir / "from_config.json";
    spit(cfg, "data = \"" + data.string() + "\"\npscore = 0.5\nmodel = \"" + m.string() +
                  "\"\ntrees = 20\nmean-depth = 3\nshrinkage = 0.1\nfolds = 3\nlambda-path = 10\n");
    const auto r = cli("fit --config " + cfg.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(m));
}

TEST_F(Cli, ExplicitFlagsOverrideConfig) {
    const auto cfg = dir / "sim.toml";
    const auto a = dir / "cfg_a.csv", b = dir / "cfg_b.csv";
    spit(cfg, "[simulate]\nscenario = 13\nn = 40\np = 5\nout = \"" + a.string() + "\"\n");
    EXPECT_NE(cli("simulate --config " + cfg.string(), dir).code, 0);
    ASSERT_EQ(cli("simulate --config=" + cfg.string() + " --scenario 3 --out " + b.string(), dir).code, 0);
    EXPECT_FALSE(fs::exists(a));
    EXPECT_EQ(count_lines(slurp(b)), 41u);
    EXPECT_NE(cli("simulate --config " + (dir / "missing.toml").string(), dir).code, 0);
}

TEST_F(Cli, UnknownSubcommandFails) {
    EXPECT_NE(cli("frobnicate", dir).code, 0);
    EXPECT_NE(cli("", dir).code, 0);
}
