#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

/// Internal nodes send x[feature] < threshold to `left`.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::size_t count = 0;

    bool is_leaf() const noexcept { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
public:
    RegressionTree() = default;
    explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    const TreeNode& root() const { return nodes_.front(); }

    std::size_t leaf_count() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
    }

    template <class Row>
    int leaf_of(const Row& row) const {
        int id = 0;
        while (!nodes_[id].is_leaf()) {
            const auto& n = nodes_[id];
            id = row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
        }
        return id;
    }

    int leaf_of(const Matrix& x, std::size_t i) const {
        int id = 0;
        while (!nodes_[id].is_leaf()) {
            const auto& n = nodes_[id];
            id = x(i, static_cast<std::size_t>(n.feature)) < n.threshold ? n.left : n.right;
        }
        return id;
    }

    template <class Row>
    double predict(const Row& row) const { return nodes_[leaf_of(row)].value; }

    double predict(const Matrix& x, std::size_t i) const { return nodes_[leaf_of(x, i)].value; }

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

private:
    std::vector<TreeNode> nodes_;
};

namespace detail {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Threshold strictly above `lo` and at most `hi`, as close to the midpoint as rounding allows.
inline double midpoint_threshold(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return mid > lo ? mid : hi;
}

class BestFirstGrower {
public:
    BestFirstGrower(const Matrix& x, std::span<const double> targets, std::span<const std::size_t> rows,
                    std::size_t min_leaf)
        : x_(x), rows_(rows), min_leaf_(min_leaf), local_target_(rows.size()), node_of_(rows.size(), 0) {
        for (std::size_t k = 0; k < rows.size(); ++k) local_target_[k] = targets[rows[k]];
        order_.resize(x.cols());
        for (std::size_t j = 0; j < x.cols(); ++j) {
            auto& ord = order_[j];
            ord.resize(rows.size());
            std::iota(ord.begin(), ord.end(), std::size_t{0});
            std::stable_sort(ord.begin(), ord.end(),
                             [&](std::size_t a, std::size_t b) { return x(rows[a], j) < x(rows[b], j); });
        }
    }

    RegressionTree grow(std::size_t terminal_count) {
        nodes_.clear();
        candidates_.clear();
        nodes_.push_back(make_leaf(0));
        candidates_.push_back(best_split(0));
        std::size_t leaves = 1;
        while (leaves < terminal_count) {
            int pick = -1;
            double best_gain = 0.0;
            for (std::size_t id = 0; id < nodes_.size(); ++id) {
                const auto& c = candidates_[id];
                if (nodes_[id].is_leaf() && c && c->gain > best_gain) {
                    best_gain = c->gain;
                    pick = static_cast<int>(id);
                }
            }
            if (pick < 0) break;
            split(pick, *candidates_[pick]);
            ++leaves;
        }
        return RegressionTree(nodes_);
    }

private:
    TreeNode make_leaf(int id) const {
        TreeNode leaf;
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < node_of_.size(); ++k)
            if (node_of_[k] == id) {
                sum += local_target_[k];
                ++count;
            }
        leaf.count = count;
        leaf.value = count ? sum / static_cast<double>(count) : 0.0;
        return leaf;
    }

    std::optional<SplitCandidate> best_split(int id) const {
        const auto& node = nodes_[static_cast<std::size_t>(id)];
        const std::size_t n = node.count;
        if (n < 2 * min_leaf_) return std::nullopt;

        // Work with deviations from the node mean so that constant targets give no gain.
        double sse = 0.0;
        for (std::size_t k = 0; k < node_of_.size(); ++k)
            if (node_of_[k] == id) {
                const double d = local_target_[k] - node.value;
                sse += d * d;
            }
        if (!(sse > 0.0)) return std::nullopt;

        SplitCandidate best;
        double total = 0.0;
        for (std::size_t k = 0; k < node_of_.size(); ++k)
            if (node_of_[k] == id) total += local_target_[k] - node.value;
        const double nn = static_cast<double>(n);
        const double base = total * total / nn;

        for (std::size_t j = 0; j < x_.cols(); ++j) {
            double left_sum = 0.0;
            std::size_t left_n = 0;
            double prev = 0.0;
            for (std::size_t k : order_[j]) {
                if (node_of_[k] != id) continue;
                const double v = x_(rows_[k], j);
                if (left_n >= min_leaf_ && n - left_n >= min_leaf_ && v > prev) {
                    const double right_sum = total - left_sum;
                    const double ln = static_cast<double>(left_n);
                    const double gain = left_sum * left_sum / ln + right_sum * right_sum / (nn - ln) - base;
                    if (gain > best.gain) {
                        best.gain = gain;
                        best.feature = static_cast<int>(j);
                        best.threshold = midpoint_threshold(prev, v);
                    }
                }
                if (n - left_n <= min_leaf_) break;
                left_sum += local_target_[k] - node.value;
                ++left_n;
                prev = v;
            }
        }
        if (best.feature < 0 || !(best.gain > 1e-12 * sse)) return std::nullopt;
        return best;
    }

    void split(int id, const SplitCandidate& c) {
        const int left = static_cast<int>(nodes_.size());
        const int right = left + 1;
        const auto j = static_cast<std::size_t>(c.feature);
        for (std::size_t k = 0; k < node_of_.size(); ++k)
            if (node_of_[k] == id) node_of_[k] = x_(rows_[k], j) < c.threshold ? left : right;
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.feature = c.feature;
        node.threshold = c.threshold;
        node.left = left;
        node.right = right;
        nodes_.push_back(make_leaf(left));
        nodes_.push_back(make_leaf(right));
        candidates_.push_back(best_split(left));
        candidates_.push_back(best_split(right));
    }

    const Matrix& x_;
    std::span<const std::size_t> rows_;
    std::size_t min_leaf_;
    std::vector<double> local_target_;
    std::vector<int> node_of_;
    std::vector<std::vector<std::size_t>> order_;
    std::vector<TreeNode> nodes_;
    std::vector<std::optional<SplitCandidate>> candidates_;
};

}  // namespace detail

/// Least-squares regression tree grown best-first to `terminal_count` leaves.
///
/// At each step the leaf whose best split gives the largest reduction in the
/// sum of squared errors is split; growth stops early when no leaf admits a
/// split with both children holding at least `min_leaf` rows and a positive
/// reduction. Thresholds are midpoints between adjacent distinct values.
/// Equal reductions resolve to the lowest feature index, then the lowest
/// threshold, then the earliest-created leaf. Leaf values are target means.
///
/// `targets` is indexed by row of `x`; only `rows` take part in the fit.
inline RegressionTree fit_tree(const Matrix& x, std::span<const double> targets, std::span<const std::size_t> rows,
                               std::size_t terminal_count, std::size_t min_leaf) {
    if (terminal_count < 2) throw ConfigError("terminal node count must be at least 2");
    if (min_leaf < 1) throw ConfigError("min_leaf must be positive");
    if (targets.size() != x.rows()) throw ShapeError("fit_tree: targets length differs from row count");
    if (rows.empty()) throw ShapeError("fit_tree: empty row subset");
    detail::BestFirstGrower grower(x, targets, rows, min_leaf);
    return grower.grow(terminal_count);
}

}  // namespace rulehte
