#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/rng.hpp"
#include "rulehte/tree.hpp"

namespace rulehte {

struct GbtConfig {
    std::size_t trees = 333;
    /// Mean number of terminal nodes; 2 gives stumps only.
    double mean_terminal = 2.0;
    double shrinkage = 0.01;
    /// Rows per tree: a fraction of N when <= 1, an absolute count when > 1.
    /// Unset means min(N/2, 100 + 6 sqrt(N)).
    std::optional<double> subsample;
    std::size_t min_leaf = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (trees < 1) throw ConfigError("tree count must be positive");
        if (!(mean_terminal >= 2.0) || !std::isfinite(mean_terminal))
            throw ConfigError("mean terminal count must be at least 2");
        if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in (0,1]");
        if (subsample && !(*subsample > 0.0 && std::isfinite(*subsample)))
            throw ConfigError("subsample must be positive");
        if (min_leaf < 1) throw ConfigError("min_leaf must be positive");
    }
};

inline double default_subsample(std::size_t n) {
    const double nn = static_cast<double>(n);
    return std::min(nn / 2.0, 100.0 + 6.0 * std::sqrt(nn));
}

/// Number of rows each tree is grown on.
inline std::size_t subsample_size(std::optional<double> eta, std::size_t n) {
    const double value = eta.value_or(default_subsample(n));
    if (value <= 1.0) return static_cast<std::size_t>(std::floor(value * static_cast<double>(n)));
    return std::min(static_cast<std::size_t>(std::floor(value)), n);
}

/// 2 + floor(u) with u exponential of mean (mean_terminal - 2).
inline std::size_t draw_terminal_count(double mean_terminal, CounterRng& rng) {
    if (!(mean_terminal >= 2.0)) throw ConfigError("mean terminal count must be at least 2");
    if (mean_terminal == 2.0) return 2;
    const double u = rng.exponential(mean_terminal - 2.0);
    constexpr double cap = 1e6;
    return 2 + static_cast<std::size_t>(std::floor(std::min(u, cap)));
}

struct BoostedEnsemble {
    double initial = 0.0;
    double shrinkage = 1.0;
    std::vector<RegressionTree> trees;
    /// Terminal-node counts drawn for each tree; the grown tree may have fewer
    /// leaves when the data admit no further split.
    std::vector<std::size_t> requested_leaves;
    /// Rows each tree was grown on (sorted).
    std::vector<std::vector<std::size_t>> subsamples;

    double predict(const Matrix& x, std::size_t i) const {
        double f = initial;
        for (const auto& tree : trees) f += shrinkage * tree.predict(x, i);
        return f;
    }

    template <class Row>
    double predict(const Row& row) const {
        double f = initial;
        for (const auto& tree : trees) f += shrinkage * tree.predict(row);
        return f;
    }

    friend bool operator==(const BoostedEnsemble&, const BoostedEnsemble&) = default;
};

/// Gradient boosting of least-squares trees on `target` with random tree
/// sizes, row subsampling and shrinkage. Residuals are taken over all rows;
/// each tree is fit on a fresh subsample drawn without replacement.
inline BoostedEnsemble fit_boosted(const Matrix& x, std::span<const double> target, const GbtConfig& cfg) {
    cfg.validate();
    const std::size_t n = x.rows();
    if (target.size() != n) throw ShapeError("fit_boosted: target length differs from row count");
    const std::size_t h = subsample_size(cfg.subsample, n);
    if (h < 2 * cfg.min_leaf)
        throw ConfigError("subsample of " + std::to_string(h) + " rows is smaller than 2*min_leaf (" +
                          std::to_string(2 * cfg.min_leaf) + ")");

    CounterRng size_rng(cfg.seed, stream::kTerminalCount);
    CounterRng row_rng(cfg.seed, stream::kSubsample);

    BoostedEnsemble ens;
    ens.shrinkage = cfg.shrinkage;
    ens.initial = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);

    std::vector<double> fitted(n, ens.initial);
    std::vector<double> residual(n);
    std::vector<std::size_t> perm(n);

    for (std::size_t m = 0; m < cfg.trees; ++m) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = target[i] - fitted[i];

        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t k = 0; k < h; ++k) {
            const auto pick = k + static_cast<std::size_t>(row_rng.below(n - k));
            std::swap(perm[k], perm[pick]);
        }
        std::vector<std::size_t> rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(h));
        std::sort(rows.begin(), rows.end());

        const std::size_t leaves = draw_terminal_count(cfg.mean_terminal, size_rng);
        auto tree = fit_tree(x, residual, rows, leaves, cfg.min_leaf);
        for (std::size_t i = 0; i < n; ++i) fitted[i] += cfg.shrinkage * tree.predict(x, i);

        ens.trees.push_back(std::move(tree));
        ens.requested_leaves.push_back(leaves);
        ens.subsamples.push_back(std::move(rows));
    }
    return ens;
}

}  // namespace rulehte
