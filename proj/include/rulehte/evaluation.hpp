#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rulehte/model.hpp"
#include "rulehte/simulation.hpp"

namespace rulehte {

/// Benchmark adapter: fits on the training draw (propensity taken from its
/// column) and predicts effects on the test rows.
inline sim::Estimator rule_ensemble_estimator(FitConfig cfg) {
    return [cfg](const Dataset& train, const Dataset& test, std::uint64_t seed) {
        auto c = cfg;
        c.seed = seed;
        const auto ps = train.pscore() ? PropensitySource::column() : PropensitySource::constant(0.5);
        return fit(train, ps, c).predict_hte(test.x());
    };
}

struct TuneGrid {
    std::vector<std::size_t> trees{200, 300, 400};
    std::vector<double> mean_terminal{2, 3, 4};
    std::vector<double> subsample{0.25, 0.50, 0.75};
    std::vector<double> shrinkage{0.01, 0.05, 0.10};

    std::size_t size() const {
        return trees.size() * mean_terminal.size() * subsample.size() * shrinkage.size();
    }
};

struct TuneRow {
    std::size_t trees = 0;
    double mean_terminal = 0.0;
    double subsample = 0.0;
    double shrinkage = 0.0;
    /// Held-out sum of squared outcome errors divided by the number of folds,
    /// averaged over repeats.
    double cv_mse = 0.0;
};

struct TuneResult {
    std::vector<TuneRow> rows;
    std::size_t best = 0;

    const TuneRow& best_row() const { return rows.at(best); }
};

struct TuneOptions {
    std::size_t folds = 10;
    std::size_t repeats = 30;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

/// Repeated K-fold cross-validation of the outcome model F(x, t) over the
/// boosting grid. Every grid point sees the same folds.
inline TuneResult tune(const Dataset& ds, const PropensitySource& ps, const FitConfig& base, const TuneGrid& grid,
                       const TuneOptions& opt) {
    if (grid.size() == 0) throw ConfigError("tuning grid is empty");
    if (opt.repeats < 1) throw ConfigError("repeats must be positive");
    ds.require_both_arms();

    std::vector<std::vector<std::size_t>> folds;
    for (std::size_t rep = 0; rep < opt.repeats; ++rep)
        folds.push_back(stratified_folds(ds.t(), opt.folds, derive_seed(opt.seed, 1000 + rep)));

    TuneResult result;
    for (auto m : grid.trees)
        for (auto l : grid.mean_terminal)
            for (auto e : grid.subsample)
                for (auto v : grid.shrinkage) result.rows.push_back({m, l, e, v, 0.0});

    const std::size_t tasks = result.rows.size() * opt.repeats * opt.folds;
    std::vector<double> sse(tasks, 0.0);
    detail::parallel_for(tasks, opt.threads, [&](std::size_t task) {
        const std::size_t point = task / (opt.repeats * opt.folds);
        const std::size_t rep = (task / opt.folds) % opt.repeats;
        const std::size_t fold = task % opt.folds;
        const auto& row = result.rows[point];

        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < ds.size(); ++i) (folds[rep][i] == fold ? test : train).push_back(i);
        auto cfg = base;
        cfg.gbt.trees = row.trees;
        cfg.gbt.mean_terminal = row.mean_terminal;
        cfg.gbt.subsample = row.subsample;
        cfg.gbt.shrinkage = row.shrinkage;
        cfg.seed = derive_seed(opt.seed, rep * opt.folds + fold);
        const auto model = fit(ds.subset(train), ps, cfg);
        double s = 0.0;
        for (auto i : test) {
            const double e = ds.y()[i] - model.predict_outcome(ds.x().row(i), ds.t()[i]);
            s += e * e;
        }
        sse[task] = s;
    });

    for (std::size_t point = 0; point < result.rows.size(); ++point) {
        double total = 0.0;
        for (std::size_t k = 0; k < opt.repeats * opt.folds; ++k) total += sse[point * opt.repeats * opt.folds + k];
        result.rows[point].cv_mse = total / static_cast<double>(opt.folds * opt.repeats);
    }
    for (std::size_t k = 1; k < result.rows.size(); ++k)
        if (result.rows[k].cv_mse < result.rows[result.best].cv_mse) result.best = k;
    return result;
}

}  // namespace rulehte
