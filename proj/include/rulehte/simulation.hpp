#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/group_lasso.hpp"
#include "rulehte/rng.hpp"

namespace rulehte::sim {

enum class Design { rct, observational };

inline std::string to_string(Design d) { return d == Design::rct ? "rct" : "obs"; }

inline Design parse_design(const std::string& s) {
    if (s == "rct") return Design::rct;
    if (s == "obs" || s == "observational") return Design::observational;
    throw ConfigError("unknown design '" + s + "' (expected rct or obs)");
}

/// Scenarios 1-12 pair mu_{1..3} (blocks of four) with tau_{1..4}.
struct ScenarioSpec {
    int scenario = 1;
    Design design = Design::rct;
    std::size_t n = 600;
    std::size_t p = 50;
    std::uint64_t seed = 0;
    /// Noise standard deviation; 0.5 is variance 0.25.
    double noise_sd = 0.5;

    int mu_index() const noexcept { return (scenario - 1) / 4 + 1; }
    int tau_index() const noexcept { return (scenario - 1) % 4 + 1; }

    void validate() const {
        if (scenario < 1 || scenario > 12) throw ConfigError("scenario must be in 1..12");
        if (p < 5) throw ConfigError("scenarios need at least 5 covariates");
        if (n < 1) throw ConfigError("n must be positive");
        if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be nonnegative");
    }
};

/// Odd columns (x1, x3, ...) standard normal; even columns Bernoulli(0.5).
inline Matrix gen_covariates(std::size_t n, std::size_t p, CounterRng& rng) {
    Matrix x(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) x(i, j) = j % 2 == 0 ? rng.normal() : (rng.bernoulli(0.5) ? 1.0 : 0.0);
    return x;
}

inline double mu(int which, std::span<const double> x) {
    if (x.size() < 5) throw ShapeError("mu needs at least 5 covariates");
    switch (which) {
        case 1:
            return -0.25 + 0.5 * (x[0] + x[1] + x[2]);
        case 2:
            return 0.7 * (x[0] > -1.0) - 1.4 * (x[1] > 0.0) + 0.7 * (x[2] > 1.0);
        case 3: {
            const double s = std::sin(x[0] + x[2]);
            const double d = x[3] - x[4];
            return s * s - 2.0 * x[1] * std::exp(-d * d);
        }
        default:
            throw ConfigError("mu index must be 1..3");
    }
}

inline double tau(int which, std::span<const double> x) {
    if (x.size() < 5) throw ShapeError("tau needs at least 5 covariates");
    switch (which) {
        case 1:
            return 2.0;
        case 2:
            return x[0] + x[1] + x[2] - x[3] + x[4];
        case 3: {
            double count = 0.0;
            for (std::size_t j = 0; j < 5; ++j) count += x[j] > 0.0 ? 1.0 : 0.0;
            return 2.0 * count - 5.0;
        }
        case 4:
            return (x[0] * x[0] + x[2] * x[2] + x[4] * x[4] + 4.0 * x[1] * (1.0 - x[3]) - 4.0) /
                   1.4142135623730951;
        default:
            throw ConfigError("tau index must be 1..4");
    }
}

inline double scenario_mu(int scenario, std::span<const double> x) { return mu((scenario - 1) / 4 + 1, x); }
inline double scenario_tau(int scenario, std::span<const double> x) { return tau((scenario - 1) % 4 + 1, x); }

struct Assignment {
    std::vector<int> t;
    std::vector<double> pscore;
};

/// Randomized: pi = 0.5. Observational: pi = logistic(mu - tau / 2).
inline Assignment assign_treatment(Design design, std::span<const double> mu_vals, std::span<const double> tau_vals,
                                   CounterRng& rng) {
    if (mu_vals.size() != tau_vals.size()) throw ShapeError("assign_treatment: length mismatch");
    Assignment a;
    a.t.resize(mu_vals.size());
    a.pscore.resize(mu_vals.size());
    for (std::size_t i = 0; i < mu_vals.size(); ++i) {
        double p = 0.5;
        if (design == Design::observational) {
            const double z = mu_vals[i] - tau_vals[i] / 2.0;
            p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        }
        a.pscore[i] = p;
        a.t[i] = rng.bernoulli(p) ? 1 : 0;
    }
    return a;
}

struct SimulatedData {
    Dataset data;
    std::vector<double> true_tau;
    std::vector<double> true_mu;
};

inline std::vector<std::string> covariate_names(std::size_t p) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

/// y = mu(x) + (t - 1/2) tau(x) + N(0, noise_sd^2).
inline SimulatedData gen_scenario(const ScenarioSpec& spec) {
    spec.validate();
    CounterRng cov_rng(spec.seed, stream::kCovariates);
    CounterRng assign_rng(spec.seed, stream::kAssignment);
    CounterRng noise_rng(spec.seed, stream::kNoise);
    auto x = gen_covariates(spec.n, spec.p, cov_rng);
    std::vector<double> m(spec.n), tv(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const auto row = x.row(i);
        m[i] = scenario_mu(spec.scenario, row);
        tv[i] = scenario_tau(spec.scenario, row);
    }
    auto assignment = assign_treatment(spec.design, m, tv, assign_rng);
    std::vector<double> y(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double noise = spec.noise_sd > 0.0 ? spec.noise_sd * noise_rng.normal() : 0.0;
        y[i] = m[i] + (assignment.t[i] - 0.5) * tv[i] + noise;
    }
    auto ds = Dataset::create(std::move(y), std::move(assignment.t), std::move(x), covariate_names(spec.p),
                              std::move(assignment.pscore), tv);
    return {std::move(ds), std::move(tv), std::move(m)};
}

/// Columns y, t, pscore, x1..xp, true_tau.
inline NamedColumns to_columns(const SimulatedData& sim) {
    const auto& ds = sim.data;
    NamedColumns cols;
    cols.emplace_back("y", ds.y());
    cols.emplace_back("t", std::vector<double>(ds.t().begin(), ds.t().end()));
    cols.emplace_back("pscore", *ds.pscore());
    for (std::size_t j = 0; j < ds.features(); ++j) {
        auto c = ds.x().col(j);
        cols.emplace_back(ds.feature_names()[j], std::vector<double>(c.begin(), c.end()));
    }
    cols.emplace_back("true_tau", sim.true_tau);
    return cols;
}

inline double mse(std::span<const double> truth, std::span<const double> estimate) {
    if (truth.size() != estimate.size())
        throw ShapeError("mse: lengths differ (" + std::to_string(truth.size()) + " vs " +
                         std::to_string(estimate.size()) + ")");
    if (truth.empty()) throw ShapeError("mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - estimate[i];
        s += d * d;
    }
    return s / static_cast<double>(truth.size());
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Maps (train, test, seed) to estimated effects on the test rows.
using Estimator = std::function<std::vector<double>(const Dataset& train, const Dataset& test, std::uint64_t seed)>;

inline Estimator oracle_estimator() {
    return [](const Dataset&, const Dataset& test, std::uint64_t) { return *test.truth(); };
}

inline Estimator zero_estimator() {
    return [](const Dataset&, const Dataset& test, std::uint64_t) { return std::vector<double>(test.size(), 0.0); };
}

/// Treated mean minus control mean of the training outcomes, for every test row.
inline Estimator difference_in_means_estimator() {
    return [](const Dataset& train, const Dataset& test, std::uint64_t) {
        double s1 = 0.0, s0 = 0.0;
        std::size_t n1 = 0, n0 = 0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (train.t()[i] == 1) {
                s1 += train.y()[i];
                ++n1;
            } else {
                s0 += train.y()[i];
                ++n0;
            }
        }
        if (n1 == 0 || n0 == 0) throw ValidationError("difference in means needs both arms");
        return std::vector<double>(test.size(), s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0));
    };
}

struct BenchmarkRow {
    int scenario = 0;
    Design design = Design::rct;
    std::size_t p = 0;
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    double mse = 0.0;
    std::string status = "ok";
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    double median_mse = 0.0;
    std::size_t failures = 0;
};

struct ReplicationSeeds {
    std::uint64_t replication;
    std::uint64_t train;
    std::uint64_t test;
    std::uint64_t fit;
};

inline ReplicationSeeds replication_seeds(std::uint64_t base, std::size_t replication) {
    const auto r = derive_seed(base, replication);
    return {r, derive_seed(r, 0), derive_seed(r, 1), derive_seed(r, 2)};
}

/// Independent train and test draws per replication, scored by MSE of the
/// effect estimate on the test rows. Failed fits are recorded and excluded
/// from the median.
inline BenchmarkResult run_benchmark(const ScenarioSpec& spec, const Estimator& estimator, std::size_t replications,
                                     std::size_t threads = 1) {
    spec.validate();
    if (replications < 1) throw ConfigError("replications must be positive");
    BenchmarkResult res;
    res.rows.resize(replications);
    detail::parallel_for(replications, threads, [&](std::size_t r) {
        const auto seeds = replication_seeds(spec.seed, r);
        auto train_spec = spec;
        train_spec.seed = seeds.train;
        auto test_spec = spec;
        test_spec.seed = seeds.test;
        auto& row = res.rows[r];
        row = {spec.scenario, spec.design, spec.p, r, seeds.replication, std::nan(""), "ok"};
        try {
            const auto train = gen_scenario(train_spec);
            const auto test = gen_scenario(test_spec);
            const auto estimate = estimator(train.data, test.data, seeds.fit);
            row.mse = mse(test.true_tau, estimate);
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
    });
    std::vector<double> ok;
    for (const auto& row : res.rows) {
        if (row.status == "ok")
            ok.push_back(row.mse);
        else
            ++res.failures;
    }
    res.median_mse = median(ok);
    return res;
}

/// CSV with columns scenario, design, p, replication, seed, mse, status.
inline std::string benchmark_csv(const BenchmarkResult& res) {
    std::string out = "scenario,design,p,replication,seed,mse,status\n";
    for (const auto& r : res.rows) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out += std::to_string(r.scenario) + "," + to_string(r.design) + "," + std::to_string(r.p) + "," +
               std::to_string(r.replication) + "," + std::to_string(r.seed) + "," + format_real(r.mse) + "," +
               status + "\n";
    }
    return out;
}

}  // namespace rulehte::sim
