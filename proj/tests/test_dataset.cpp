#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace rulehte;
using testing_support::scratch;
using testing_support::spit;

TEST(LoadCsv, BasicTable) {
    const auto dir = scratch("load_basic");
    spit(dir / "d.csv", "y,t,x1,x2\n1.5,1,0.1,3\n2,0,0.2,4\n-1,1,0.3,5\n0,0,0.4,6\n");
    const auto ds = load_csv((dir / "d.csv").string(), ColumnSpec{});
    EXPECT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.features(), 2u);
    EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"x1", "x2"}));
    EXPECT_EQ(ds.y()[0], 1.5);
    EXPECT_EQ(ds.t()[2], 1);
    EXPECT_EQ(ds.x()(3, 1), 6.0);
    EXPECT_FALSE(ds.pscore());
}

TEST(LoadCsv, TreatmentOutsideBinaryNamesRow) {
    const auto dir = scratch("load_t2");
    spit(dir / "d.csv", "y,t,x1\n1,1,0\n2,2,0\n");
    try {
        load_csv((dir / "d.csv").string(), ColumnSpec{});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, MissingColumnIsNamed) {
    const auto dir = scratch("load_missing");
    spit(dir / "d.csv", "y,t,x1\n1,1,0\n2,0,0\n");
    ColumnSpec spec;
    spec.outcome_column = "w";
    try {
        load_csv((dir / "d.csv").string(), spec);
        FAIL();
    } catch (const ColumnError& e) {
        EXPECT_EQ(e.column(), "w");
    }
}

TEST(LoadCsv, NonNumericCellReportsPosition) {
    const auto dir = scratch("load_nan");
    spit(dir / "d.csv", "y,t,x1\n1,1,0\n2,0,abc\n");
    try {
        load_csv((dir / "d.csv").string(), ColumnSpec{});
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 3u);
        EXPECT_EQ(e.col(), 3u);
    }
}

TEST(LoadCsv, PropensityOutOfRange) {
    const auto dir = scratch("load_ps");
    spit(dir / "d.csv", "y,t,ps,x1\n1,1,0.5,0\n2,0,1.0,0\n");
    ColumnSpec spec;
    spec.pscore_column = "ps";
    EXPECT_THROW(load_csv((dir / "d.csv").string(), spec), ValidationError);
}

TEST(LoadCsv, IgnoredAndRoleColumnsAreNotCovariates) {
    const auto dir = scratch("load_roles");
    spit(dir / "d.csv", "y,t,ps,x1,truth,junk\n1,1,0.5,0,2,9\n2,0,0.4,1,2,9\n");
    ColumnSpec spec;
    spec.pscore_column = "ps";
    spec.truth_column = "truth";
    spec.ignored = {"junk"};
    const auto ds = load_csv((dir / "d.csv").string(), spec);
    EXPECT_EQ(ds.feature_names(), std::vector<std::string>{"x1"});
    EXPECT_EQ((*ds.pscore())[1], 0.4);
    EXPECT_EQ((*ds.truth())[0], 2.0);
}

TEST(LoadCsv, MissingFileIsIoError) {
    EXPECT_THROW(load_csv("/nonexistent/file.csv", ColumnSpec{}), IoError);
}

TEST(WriteCsv, SingleColumn) {
    const auto dir = scratch("write_single");
    write_csv((dir / "tau.csv").string(), {{"tau", {1.0, 2.0}}});
    EXPECT_EQ(testing_support::slurp(dir / "tau.csv"), "tau\n1\n2\n");
}

TEST(WriteCsv, EmptyColumnSetRejected) {
    const auto dir = scratch("write_empty");
    EXPECT_THROW(write_csv((dir / "e.csv").string(), {}), ValidationError);
    EXPECT_THROW(write_csv((dir / "e.csv").string(), {{"a", {1.0}}, {"b", {1.0, 2.0}}}), ValidationError);
}

TEST(WriteCsv, RoundTripIsExact) {
    const auto dir = scratch("write_roundtrip");
    std::mt19937_64 gen(1);
    std::normal_distribution<double> normal(0.0, 1e3);
    std::uniform_real_distribution<double> unit(0.01, 0.99);
    const std::size_t n = 200;
    std::vector<double> y(n), t(n), ps(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = normal(gen);
        t[i] = i % 2;
        ps[i] = unit(gen);
        a[i] = normal(gen) * 1e-9;
        b[i] = std::ldexp(normal(gen), static_cast<int>(i % 60) - 30);
    }
    const auto path = (dir / "r.csv").string();
    write_csv(path, {{"y", y}, {"t", t}, {"ps", ps}, {"a", a}, {"b", b}});
    ColumnSpec spec;
    spec.pscore_column = "ps";
    const auto ds = load_csv(path, spec);
    EXPECT_EQ(ds.y(), y);
    EXPECT_EQ(*ds.pscore(), ps);
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_EQ(ds.x()(i, 0), a[i]);
        EXPECT_EQ(ds.x()(i, 1), b[i]);
    }
}

// Each corruption breaks exactly one invariant; the clean table must load.
TEST(DatasetValidation, RandomizedCorruptTables) {
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<int> kind_dist(0, 6);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 3 + gen() % 8, p = 1 + gen() % 3;
        std::vector<double> y(n, 1.0), ps(n, 0.5);
        std::vector<int> t(n);
        Matrix x(n, p, 0.25);
        std::vector<std::string> names;
        for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
        for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<int>(i % 2);
        EXPECT_NO_THROW(Dataset::create(y, t, x, names, ps));

        const std::size_t row = gen() % n;
        const int kind = kind_dist(gen);
        switch (kind) {
            case 0: y[row] = std::nan(""); break;
            case 1: y[row] = INFINITY; break;
            case 2: t[row] = 2 + static_cast<int>(gen() % 3); break;
            case 3: x(row, gen() % p) = -INFINITY; break;
            case 4: ps[row] = gen() % 2 ? 0.0 : 1.0; break;
            case 5: y.pop_back(); break;
            case 6: names.push_back("extra"); break;
        }
        EXPECT_THROW(Dataset::create(y, t, x, names, ps), ValidationError) << "corruption " << kind;
    }
}

TEST(DatasetValidation, DuplicateFeatureNames) {
    Matrix x(2, 2);
    EXPECT_THROW(Dataset::create({1, 2}, {0, 1}, x, {"a", "a"}), ValidationError);
}

TEST(DatasetValidation, BothArmsRequiredForFitting) {
    const auto ds = Dataset::create({1, 2, 3}, {1, 1, 1}, Matrix(3, 1), {"x"});
    EXPECT_THROW(ds.require_both_arms(), ValidationError);
}

TEST(Dataset, SubsetKeepsOptionalColumns) {
    const auto ds = Dataset::create({1, 2, 3}, {0, 1, 0}, Matrix(3, 1, 2.0), {"x"}, std::vector<double>{.2, .3, .4},
                                    std::vector<double>{5, 6, 7});
    const std::vector<std::size_t> idx{2, 0};
    const auto sub = ds.subset(idx);
    EXPECT_EQ(sub.y(), (std::vector<double>{3, 1}));
    EXPECT_EQ(*sub.pscore(), (std::vector<double>{.4, .2}));
    EXPECT_EQ(*sub.truth(), (std::vector<double>{7, 5}));
}
