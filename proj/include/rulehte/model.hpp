#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulehte/basis.hpp"
#include "rulehte/boosting.hpp"
#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/group_lasso.hpp"
#include "rulehte/rule.hpp"
#include "rulehte/transform.hpp"

namespace rulehte {

struct FitConfig {
    GbtConfig gbt;
    SolverConfig solver;
    double winsor_q = 0.025;
    /// Subtract the outcome mean before the inverse-propensity transform.
    /// Makes rule generation invariant to shifts of y.
    bool center_outcome = true;
    PropensityClip clip;
    /// Single source of randomness; copied into the booster and the CV folds.
    std::uint64_t seed = 0;
};

struct RuleEntry {
    Rule rule;
    /// Coefficient under treatment and under control.
    double alpha = 0.0;
    double beta = 0.0;
    double support = 0.0;

    friend bool operator==(const RuleEntry&, const RuleEntry&) = default;
};

struct LinearEntry {
    LinearTerm term;
    double alpha = 0.0;
    double beta = 0.0;

    friend bool operator==(const LinearEntry&, const LinearEntry&) = default;
};

struct FitMeta {
    std::uint64_t seed = 0;
    double lambda = 0.0;
    std::size_t n = 0;
    std::size_t p = 0;
    FitConfig config;
};

/// F(x, t) = intercept + t [sum alpha_k r_k(x) + sum alpha*_j l_j(x_j)]
///                 + (1 - t) [sum beta_k r_k(x) + sum beta*_j l_j(x_j)]
/// Only terms with a nonzero coefficient pair are kept.
class CausalRuleFitModel {
public:
    double intercept = 0.0;
    std::vector<RuleEntry> rules;
    std::vector<LinearEntry> linear;
    std::vector<std::string> feature_names;
    FitMeta meta;

    std::size_t features() const noexcept { return feature_names.size(); }

    /// Treated and control parts of F, without the intercept.
    Pair arm_contributions(std::span<const double> row) const {
        if (row.size() != features())
            throw ShapeError("row has " + std::to_string(row.size()) + " values, model expects " +
                             std::to_string(features()));
        Pair out{0.0, 0.0};
        for (const auto& r : rules)
            if (r.rule.evaluate(row)) {
                out[0] += r.alpha;
                out[1] += r.beta;
            }
        for (const auto& l : linear) {
            const double v = l.term(row[l.term.feature]);
            out[0] += l.alpha * v;
            out[1] += l.beta * v;
        }
        return out;
    }

    double predict_outcome(std::span<const double> row, int t) const {
        if (t != 0 && t != 1) throw ValidationError("treatment must be 0 or 1");
        const auto parts = arm_contributions(row);
        return intercept + (t == 1 ? parts[0] : parts[1]);
    }

    /// Sum of coefficient differences over the terms active at `row`.
    double predict_hte(std::span<const double> row) const {
        if (row.size() != features())
            throw ShapeError("row has " + std::to_string(row.size()) + " values, model expects " +
                             std::to_string(features()));
        double tau = 0.0;
        for (const auto& r : rules)
            if (r.rule.evaluate(row)) tau += r.alpha - r.beta;
        for (const auto& l : linear) tau += (l.alpha - l.beta) * l.term(row[l.term.feature]);
        return tau;
    }

    std::vector<double> predict_hte(const Matrix& x) const {
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_hte(x.row(i));
        return out;
    }
};

/// Intermediate counts and the selection curve from one fit.
struct FitReport {
    CausalRuleFitModel model;
    std::size_t rules_generated = 0;
    std::size_t rules_unique = 0;
    std::size_t rules_screened = 0;
    std::size_t linear_included = 0;
    std::vector<double> lambdas;
    std::vector<double> cv_error;
    std::size_t lambda_index = 0;

    double cv_error_selected() const { return cv_error.empty() ? 0.0 : cv_error[lambda_index]; }
};

inline FitConfig seeded(FitConfig cfg) {
    cfg.gbt.seed = cfg.seed;
    cfg.solver.seed = cfg.seed;
    return cfg;
}

/// Rule generation by boosting on the transformed outcome, then the group
/// lasso over (treated, control) pairs of every rule and linear term.
inline FitReport fit_detailed(const Dataset& ds, const PropensitySource& ps, const FitConfig& config) {
    const FitConfig cfg = seeded(config);
    ds.require_both_arms();
    const std::size_t n = ds.size();

    std::vector<double> outcome = ds.y();
    if (cfg.center_outcome) {
        const double mean = std::accumulate(outcome.begin(), outcome.end(), 0.0) / static_cast<double>(n);
        for (auto& v : outcome) v -= mean;
    }
    const auto pscore = resolve_propensity(ds, ps, cfg.clip);
    const auto target = transformed_outcome(outcome, ds.t(), pscore);

    FitReport report;
    const auto ensemble = fit_boosted(ds.x(), target, cfg.gbt);
    auto generated = extract_rules(ensemble);
    report.rules_generated = generated.size();
    auto unique = deduplicate_rules(std::move(generated));
    report.rules_unique = unique.size();
    auto screened = screen_rules(unique, ds.x());
    report.rules_screened = screened.size();

    std::vector<Rule> rules;
    rules.reserve(screened.size());
    for (const auto& s : screened) rules.push_back(s.rule);
    const auto linear = fit_linear_terms(ds.x(), cfg.winsor_q);
    report.linear_included =
        static_cast<std::size_t>(std::count_if(linear.begin(), linear.end(), [](const LinearTerm& l) {
            return l.included();
        }));

    auto& model = report.model;
    model.feature_names = ds.feature_names();
    model.meta = FitMeta{cfg.seed, 0.0, n, ds.features(), cfg};

    const auto design = build_grouped_design(ds, rules, linear);
    if (design.groups() == 0) {
        model.intercept = std::accumulate(ds.y().begin(), ds.y().end(), 0.0) / static_cast<double>(n);
        return report;
    }

    const auto selection = select_lambda(design, ds.y(), ds.t(), cfg.solver);
    report.lambdas = selection.lambdas;
    report.cv_error = selection.cv_error;
    report.lambda_index = selection.index;
    const auto& sol = selection.selected();
    model.meta.lambda = selection.lambda;
    model.intercept = sol.intercept;
    for (std::size_t g = 0; g < design.groups(); ++g) {
        const auto& c = sol.coef[g];
        if (c[0] == 0.0 && c[1] == 0.0) continue;
        const auto& label = design.labels[g];
        if (label.kind == TermKind::rule)
            model.rules.push_back({screened[label.index].rule, c[0], c[1], screened[label.index].support});
        else
            model.linear.push_back({linear[label.index], c[0], c[1]});
    }
    return report;
}

inline CausalRuleFitModel fit(const Dataset& ds, const PropensitySource& ps, const FitConfig& cfg) {
    return fit_detailed(ds, ps, cfg).model;
}

struct ImportanceRow {
    TermKind kind = TermKind::rule;
    std::string description;
    /// alpha - beta: the term's contribution to the treatment effect.
    double coefficient = 0.0;
    double importance = 0.0;
    /// Training support for rules; 1 for linear terms.
    double support = 1.0;
};

struct ImportanceReport {
    std::vector<ImportanceRow> rows;

    double mean_importance() const {
        if (rows.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : rows) s += r.importance;
        return s / static_cast<double>(rows.size());
    }
};

/// Rule importance |alpha - beta| sqrt(s (1 - s)); linear importance
/// |alpha - beta| times the training std of the scaled term. Sorted descending.
inline ImportanceReport importance(const CausalRuleFitModel& m) {
    ImportanceReport rep;
    for (const auto& r : m.rules) {
        const double diff = r.alpha - r.beta;
        rep.rows.push_back({TermKind::rule, describe(r.rule, m.feature_names), diff,
                            std::abs(diff) * std::sqrt(r.support * (1.0 - r.support)), r.support});
    }
    for (const auto& l : m.linear) {
        const double diff = l.alpha - l.beta;
        const auto& name = m.feature_names[l.term.feature];
        rep.rows.push_back({TermKind::linear, name + " (linear)", diff, std::abs(diff) * l.term.std, 1.0});
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(),
                     [](const ImportanceRow& a, const ImportanceRow& b) { return a.importance > b.importance; });
    return rep;
}

struct ReportFilter {
    /// Keep only rows above the mean importance of the full report.
    bool above_mean = true;
    double min_support = 0.1;
    std::optional<std::size_t> top;

    static ReportFilter everything() { return {false, -1.0, std::nullopt}; }
};

inline ImportanceReport filter_report(const ImportanceReport& rep, const ReportFilter& f) {
    ImportanceReport out;
    const double mean = rep.mean_importance();
    for (const auto& r : rep.rows) {
        if (f.above_mean && !(r.importance > mean)) continue;
        if (!(r.support > f.min_support)) continue;
        out.rows.push_back(r);
    }
    if (f.top && out.rows.size() > *f.top) out.rows.resize(*f.top);
    return out;
}

}  // namespace rulehte
