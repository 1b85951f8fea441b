#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/rule.hpp"

namespace rulehte {

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
inline double quantile_type7(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw ShapeError("quantile of empty sample");
    const double h = static_cast<double>(sorted.size() - 1) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Winsorized, rescaled covariate: scale * clamp(x, delta_lo, delta_hi).
struct LinearTerm {
    std::size_t feature = 0;
    double delta_lo = 0.0;
    double delta_hi = 0.0;
    /// 0.4 / std of the winsorized training column; 0 marks a constant column.
    double scale = 0.0;
    /// Training mean and std of the scaled term.
    double mean = 0.0;
    double std = 0.0;

    double winsorize(double x) const noexcept { return std::min(delta_hi, std::max(delta_lo, x)); }
    double operator()(double x) const noexcept { return scale * winsorize(x); }
    bool included() const noexcept { return scale > 0.0; }

    friend bool operator==(const LinearTerm&, const LinearTerm&) = default;
};

inline constexpr double kLinearTargetStd = 0.4;
inline constexpr double kConstantColumnStd = 1e-12;

namespace detail {

inline std::pair<double, double> mean_and_population_std(std::span<const double> v) {
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace detail

/// One term per covariate; bounds are the q and 1-q quantiles.
inline std::vector<LinearTerm> fit_linear_terms(const Matrix& x, double q = 0.025) {
    if (!(q >= 0.0 && q < 0.5)) throw ConfigError("winsor quantile must lie in [0, 0.5)");
    if (x.rows() == 0) throw ShapeError("fit_linear_terms: no rows");
    std::vector<LinearTerm> terms;
    terms.reserve(x.cols());
    std::vector<double> buf(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        LinearTerm term;
        term.feature = j;
        auto col = x.col(j);
        std::copy(col.begin(), col.end(), buf.begin());
        std::sort(buf.begin(), buf.end());
        term.delta_lo = quantile_type7(buf, q);
        term.delta_hi = quantile_type7(buf, 1.0 - q);
        for (std::size_t i = 0; i < x.rows(); ++i) buf[i] = term.winsorize(col[i]);
        const auto [mean, sd] = detail::mean_and_population_std(buf);
        if (sd >= kConstantColumnStd) {
            term.scale = kLinearTargetStd / sd;
            term.mean = term.scale * mean;
            term.std = kLinearTargetStd;
        } else {
            term.mean = 0.0;
            term.std = 0.0;
        }
        terms.push_back(term);
    }
    return terms;
}

/// A rule together with its training support.
struct ScoredRule {
    Rule rule;
    double support = 0.0;
};

/// Keeps rules whose training support lies strictly inside (0,1) and whose
/// indicator column differs from every earlier kept rule.
inline std::vector<ScoredRule> screen_rules(const std::vector<Rule>& rules, const Matrix& x) {
    std::vector<ScoredRule> out;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
    std::vector<std::vector<std::uint8_t>> kept_columns;
    const std::size_t n = x.rows();
    std::vector<std::uint8_t> column(n);
    for (const auto& rule : rules) {
        std::size_t hits = 0;
        std::uint64_t hash = 0xcbf29ce484222325ULL;
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = rule.evaluate(x, i) ? 1 : 0;
            hits += column[i];
            hash = (hash ^ column[i]) * 0x100000001b3ULL;
        }
        if (hits == 0 || hits == n) continue;
        auto& bucket = by_hash[hash];
        const bool duplicate = std::any_of(bucket.begin(), bucket.end(),
                                           [&](std::size_t k) { return kept_columns[k] == column; });
        if (duplicate) continue;
        bucket.push_back(kept_columns.size());
        kept_columns.push_back(column);
        out.push_back({rule, static_cast<double>(hits) / static_cast<double>(n)});
    }
    return out;
}

enum class TermKind { rule, linear };

struct GroupLabel {
    TermKind kind = TermKind::rule;
    /// Index into the rule list or the linear-term list.
    std::size_t index = 0;
};

/// Two columns per basis function: (t * b(x), (1 - t) * b(x)).
/// Rule groups come first in the given order, then included linear terms by feature.
struct GroupedDesign {
    Matrix columns;
    std::vector<GroupLabel> labels;

    std::size_t groups() const noexcept { return labels.size(); }
    std::size_t rows() const noexcept { return columns.rows(); }
    std::span<const double> column(std::size_t group, std::size_t which) const {
        return columns.col(2 * group + which);
    }
};

inline GroupedDesign build_grouped_design(const Matrix& x, std::span<const int> t, const std::vector<Rule>& rules,
                                          const std::vector<LinearTerm>& linear) {
    if (t.size() != x.rows()) throw ShapeError("build_grouped_design: treatment length differs from row count");
    const std::size_t n = x.rows();
    std::vector<GroupLabel> labels;
    for (std::size_t k = 0; k < rules.size(); ++k) labels.push_back({TermKind::rule, k});
    for (std::size_t j = 0; j < linear.size(); ++j)
        if (linear[j].included()) labels.push_back({TermKind::linear, j});

    GroupedDesign design{Matrix(n, 2 * labels.size()), labels};
    for (std::size_t g = 0; g < labels.size(); ++g) {
        auto treated = design.columns.col(2 * g);
        auto control = design.columns.col(2 * g + 1);
        for (std::size_t i = 0; i < n; ++i) {
            double b = 0.0;
            if (labels[g].kind == TermKind::rule) {
                b = rules[labels[g].index].evaluate(x, i) ? 1.0 : 0.0;
            } else {
                const auto& term = linear[labels[g].index];
                b = term(x(i, term.feature));
            }
            treated[i] = t[i] == 1 ? b : 0.0;
            control[i] = t[i] == 1 ? 0.0 : b;
        }
    }
    return design;
}

inline GroupedDesign build_grouped_design(const Dataset& ds, const std::vector<Rule>& rules,
                                          const std::vector<LinearTerm>& linear) {
    return build_grouped_design(ds.x(), ds.t(), rules, linear);
}

}  // namespace rulehte
