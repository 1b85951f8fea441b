#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rulehte/boosting.hpp"
#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// lo <= x[feature] < hi
struct Condition {
    std::size_t feature = 0;
    double lo = -kInf;
    double hi = kInf;

    bool contains(double v) const noexcept { return lo <= v && v < hi; }
    friend auto operator<=>(const Condition&, const Condition&) = default;
};

/// Conjunction of interval conditions, at most one per feature, kept sorted by feature.
class Rule {
public:
    Rule() = default;

    explicit Rule(std::vector<Condition> conditions) : conditions_(std::move(conditions)) {
        std::sort(conditions_.begin(), conditions_.end(),
                  [](const Condition& a, const Condition& b) { return a.feature < b.feature; });
        for (std::size_t k = 0; k < conditions_.size(); ++k) {
            const auto& c = conditions_[k];
            if (!(c.lo < c.hi)) throw ValidationError("rule condition with empty interval");
            if (k > 0 && conditions_[k - 1].feature == c.feature)
                throw ValidationError("rule has two conditions on feature " + std::to_string(c.feature));
        }
    }

    const std::vector<Condition>& conditions() const noexcept { return conditions_; }
    bool empty() const noexcept { return conditions_.empty(); }

    /// Narrows the interval on `feature` (adding the condition when absent).
    void intersect(std::size_t feature, double lo, double hi) {
        auto it = std::lower_bound(conditions_.begin(), conditions_.end(), feature,
                                   [](const Condition& c, std::size_t f) { return c.feature < f; });
        if (it != conditions_.end() && it->feature == feature) {
            it->lo = std::max(it->lo, lo);
            it->hi = std::min(it->hi, hi);
        } else {
            conditions_.insert(it, Condition{feature, lo, hi});
        }
    }

    template <class Row>
    bool evaluate(const Row& row) const {
        for (const auto& c : conditions_)
            if (!c.contains(row[c.feature])) return false;
        return true;
    }

    bool evaluate(const Matrix& x, std::size_t i) const {
        for (const auto& c : conditions_)
            if (!c.contains(x(i, c.feature))) return false;
        return true;
    }

    friend auto operator<=>(const Rule&, const Rule&) = default;

private:
    std::vector<Condition> conditions_;
};

/// Fraction of rows of `x` satisfying the rule.
inline double support(const Rule& rule, const Matrix& x) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) hits += rule.evaluate(x, i) ? 1 : 0;
    return x.rows() ? static_cast<double>(hits) / static_cast<double>(x.rows()) : 0.0;
}

inline double support(const Rule& rule, const Dataset& ds) { return support(rule, ds.x()); }

inline std::vector<double> evaluate_column(const Rule& rule, const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = rule.evaluate(x, i) ? 1.0 : 0.0;
    return out;
}

/// Number formatted with 6 significant digits.
inline std::string format_short(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    return std::string(buf, ptr);
}

/// "name∈[lo,hi) & name∈[lo,hi)"
inline std::string describe(const Rule& rule, const std::vector<std::string>& names) {
    std::string out;
    for (const auto& c : rule.conditions()) {
        if (!out.empty()) out += " & ";
        out += c.feature < names.size() ? names[c.feature] : "x" + std::to_string(c.feature + 1);
        out += "∈[" + format_short(c.lo) + "," + format_short(c.hi) + ")";
    }
    return out;
}

/// Rules of one tree: every node but the root yields the conjunction of the
/// conditions on its root path. Nodes are visited breadth-first.
inline std::vector<Rule> tree_rules(const RegressionTree& tree) {
    std::vector<Rule> out;
    const auto& nodes = tree.nodes();
    std::deque<std::pair<int, Rule>> queue;
    queue.emplace_back(0, Rule{});
    while (!queue.empty()) {
        auto [id, path] = std::move(queue.front());
        queue.pop_front();
        if (id != 0) out.push_back(path);
        const auto& node = nodes[static_cast<std::size_t>(id)];
        if (node.is_leaf()) continue;
        const auto feature = static_cast<std::size_t>(node.feature);
        Rule left = path;
        left.intersect(feature, -kInf, node.threshold);
        Rule right = std::move(path);
        right.intersect(feature, node.threshold, kInf);
        queue.emplace_back(node.left, std::move(left));
        queue.emplace_back(node.right, std::move(right));
    }
    return out;
}

/// All rules of the ensemble in tree order, 2 (leaves - 1) per tree.
inline std::vector<Rule> extract_rules(const BoostedEnsemble& ens) {
    std::vector<Rule> out;
    for (const auto& tree : ens.trees) {
        auto rules = tree_rules(tree);
        out.insert(out.end(), std::make_move_iterator(rules.begin()), std::make_move_iterator(rules.end()));
    }
    return out;
}

/// Drops rules whose condition set repeats an earlier one.
inline std::vector<Rule> deduplicate_rules(std::vector<Rule> rules) {
    std::set<Rule> seen;
    std::vector<Rule> out;
    for (auto& r : rules)
        if (seen.insert(r).second) out.push_back(std::move(r));
    return out;
}

}  // namespace rulehte
