#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rulehte/error.hpp"

namespace rulehte {

/// Dense column-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[j * rows_ + i]; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[j * rows_ + i]; }

    std::span<const double> col(std::size_t j) const noexcept { return {data_.data() + j * rows_, rows_}; }
    std::span<double> col(std::size_t j) noexcept { return {data_.data() + j * rows_, rows_}; }

    std::vector<double> row(std::size_t i) const {
        std::vector<double> out(cols_);
        for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
        return out;
    }

    /// Rows selected by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t j = 0; j < cols_; ++j)
            for (std::size_t k = 0; k < idx.size(); ++k) out(k, j) = (*this)(idx[k], j);
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Observed outcomes, treatment indicators and covariates. Immutable once
/// constructed through `Dataset::create`, which enforces every invariant.
class Dataset {
public:
    static Dataset create(std::vector<double> y, std::vector<int> t, Matrix x,
                          std::vector<std::string> feature_names,
                          std::optional<std::vector<double>> pscore = std::nullopt,
                          std::optional<std::vector<double>> truth = std::nullopt) {
        const std::size_t n = y.size();
        if (n == 0) throw ValidationError("dataset must contain at least one row");
        if (t.size() != n) throw ValidationError("treatment length differs from outcome length");
        if (x.rows() != n) throw ValidationError("covariate row count differs from outcome length");
        if (x.cols() != feature_names.size())
            throw ValidationError("covariate column count differs from number of feature names");
        std::unordered_set<std::string> seen;
        for (const auto& name : feature_names)
            if (!seen.insert(name).second) throw ValidationError("duplicate feature name '" + name + "'");
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(y[i])) throw ValidationError("non-finite outcome at row " + std::to_string(i + 1));
            if (t[i] != 0 && t[i] != 1)
                throw ValidationError("treatment value outside {0,1} at row " + std::to_string(i + 1));
            for (std::size_t j = 0; j < x.cols(); ++j)
                if (!std::isfinite(x(i, j)))
                    throw ValidationError("non-finite covariate '" + feature_names[j] + "' at row " +
                                          std::to_string(i + 1));
        }
        if (pscore) {
            if (pscore->size() != n) throw ValidationError("propensity length differs from outcome length");
            for (std::size_t i = 0; i < n; ++i) {
                const double p = (*pscore)[i];
                if (!(p > 0.0 && p < 1.0))
                    throw ValidationError("propensity outside (0,1) at row " + std::to_string(i + 1));
            }
        }
        if (truth) {
            if (truth->size() != n) throw ValidationError("truth length differs from outcome length");
            for (std::size_t i = 0; i < n; ++i)
                if (!std::isfinite((*truth)[i]))
                    throw ValidationError("non-finite truth value at row " + std::to_string(i + 1));
        }
        Dataset ds;
        ds.y_ = std::move(y);
        ds.t_ = std::move(t);
        ds.x_ = std::move(x);
        ds.names_ = std::move(feature_names);
        ds.pscore_ = std::move(pscore);
        ds.truth_ = std::move(truth);
        return ds;
    }

    std::size_t size() const noexcept { return y_.size(); }
    std::size_t features() const noexcept { return x_.cols(); }

    const std::vector<double>& y() const noexcept { return y_; }
    const std::vector<int>& t() const noexcept { return t_; }
    const Matrix& x() const noexcept { return x_; }
    const std::vector<std::string>& feature_names() const noexcept { return names_; }
    const std::optional<std::vector<double>>& pscore() const noexcept { return pscore_; }
    /// True treatment effect, only present for simulated or labelled data.
    const std::optional<std::vector<double>>& truth() const noexcept { return truth_; }

    std::size_t treated_count() const noexcept {
        return static_cast<std::size_t>(std::count(t_.begin(), t_.end(), 1));
    }

    void require_both_arms() const {
        const auto treated = treated_count();
        if (treated == 0 || treated == size())
            throw ValidationError("both treatment arms must be present (treated " + std::to_string(treated) +
                                  " of " + std::to_string(size()) + ")");
    }

    /// Subset of rows in the given order.
    Dataset subset(std::span<const std::size_t> idx) const {
        std::vector<double> y;
        std::vector<int> t;
        y.reserve(idx.size());
        t.reserve(idx.size());
        for (auto i : idx) {
            y.push_back(y_[i]);
            t.push_back(t_[i]);
        }
        auto pick = [&](const std::optional<std::vector<double>>& v) -> std::optional<std::vector<double>> {
            if (!v) return std::nullopt;
            std::vector<double> out;
            out.reserve(idx.size());
            for (auto i : idx) out.push_back((*v)[i]);
            return out;
        };
        return create(std::move(y), std::move(t), x_.select_rows(idx), names_, pick(pscore_), pick(truth_));
    }

    Dataset with_outcome(std::vector<double> y) const {
        return create(std::move(y), t_, x_, names_, pscore_, truth_);
    }

    Dataset with_treatment(std::vector<int> t, std::optional<std::vector<double>> pscore) const {
        return create(y_, std::move(t), x_, names_, std::move(pscore), truth_);
    }

private:
    Dataset() = default;

    std::vector<double> y_;
    std::vector<int> t_;
    Matrix x_;
    std::vector<std::string> names_;
    std::optional<std::vector<double>> pscore_;
    std::optional<std::vector<double>> truth_;
};

/// Which CSV columns carry outcome, treatment, propensity and true effect.
struct ColumnSpec {
    std::string outcome_column = "y";
    std::string treatment_column = "t";
    std::optional<std::string> pscore_column;
    std::optional<std::string> truth_column;
    /// Present in the file but neither covariate nor role column.
    std::vector<std::string> ignored;

    void validate() const {
        std::vector<std::string> names{outcome_column, treatment_column};
        if (pscore_column) names.push_back(*pscore_column);
        if (truth_column) names.push_back(*truth_column);
        for (std::size_t a = 0; a < names.size(); ++a)
            for (std::size_t b = a + 1; b < names.size(); ++b)
                if (names[a] == names[b]) throw ValidationError("column '" + names[a] + "' assigned twice");
    }
};

using NamedColumns = std::vector<std::pair<std::string, std::vector<double>>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            return cells;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

inline std::optional<double> parse_double(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

}  // namespace detail

/// Shortest form that keeps 17 significant digits of precision.
inline std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

/// Numeric CSV with a header row, read whole. Rows of all-whitespace are skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }

    std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        return std::nullopt;
    }

    std::size_t require(const std::string& name) const {
        auto j = find(name);
        if (!j) throw ColumnError(name);
        return *j;
    }
};

inline CsvTable read_csv_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto content = detail::trim(line);
        if (content.empty()) continue;
        auto cells = detail::split_commas(content);
        if (!have_header) {
            std::unordered_set<std::string> seen;
            for (auto c : cells) {
                std::string name(c);
                if (name.empty()) throw ParseError("empty header name", lineno, table.header.size() + 1);
                if (!seen.insert(name).second) throw ParseError("duplicate header '" + name + "'", lineno, 0);
                table.header.push_back(std::move(name));
            }
            table.columns.resize(table.header.size());
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size())
            throw ParseError("expected " + std::to_string(table.header.size()) + " cells, found " +
                                 std::to_string(cells.size()),
                             lineno, 0);
        for (std::size_t j = 0; j < cells.size(); ++j) {
            auto v = detail::parse_double(cells[j]);
            if (!v) throw ParseError("non-numeric cell '" + std::string(cells[j]) + "'", lineno, j + 1);
            table.columns[j].push_back(*v);
        }
    }
    if (!have_header) throw ParseError("missing header row", lineno, 0);
    return table;
}

/// Header names of a CSV file, without reading the body.
inline std::vector<std::string> read_csv_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    while (std::getline(in, line)) {
        const auto content = detail::trim(line);
        if (content.empty()) continue;
        std::vector<std::string> out;
        for (auto c : detail::split_commas(content)) out.emplace_back(c);
        return out;
    }
    throw ParseError("missing header row", 0, 0);
}

/// Loads a dataset. Columns not named in `spec` become covariates in header order.
inline Dataset load_csv(const std::string& path, const ColumnSpec& spec) {
    spec.validate();
    const auto table = read_csv_table(path);
    const auto y_col = table.require(spec.outcome_column);
    const auto t_col = table.require(spec.treatment_column);
    std::optional<std::size_t> p_col;
    std::optional<std::size_t> truth_col;
    if (spec.pscore_column) p_col = table.require(*spec.pscore_column);
    if (spec.truth_column) truth_col = table.require(*spec.truth_column);

    const std::size_t n = table.rows();
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = table.columns[t_col][i];
        if (v != 0.0 && v != 1.0)
            throw ValidationError("treatment value " + format_real(v) + " outside {0,1} at row " +
                                  std::to_string(i + 1));
        t[i] = static_cast<int>(v);
    }

    std::vector<std::size_t> covariates;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j == y_col || j == t_col || (p_col && j == *p_col) || (truth_col && j == *truth_col)) continue;
        if (std::find(spec.ignored.begin(), spec.ignored.end(), table.header[j]) != spec.ignored.end()) continue;
        covariates.push_back(j);
    }
    Matrix x(n, covariates.size());
    std::vector<std::string> names;
    for (std::size_t k = 0; k < covariates.size(); ++k) {
        names.push_back(table.header[covariates[k]]);
        std::copy(table.columns[covariates[k]].begin(), table.columns[covariates[k]].end(), x.col(k).begin());
    }
    std::optional<std::vector<double>> pscore;
    if (p_col) pscore = table.columns[*p_col];
    std::optional<std::vector<double>> truth;
    if (truth_col) truth = table.columns[*truth_col];
    return Dataset::create(table.columns[y_col], std::move(t), std::move(x), std::move(names), std::move(pscore),
                           std::move(truth));
}

inline void write_csv(const std::string& path, const NamedColumns& columns) {
    if (columns.empty()) throw ValidationError("no columns to write");
    const std::size_t n = columns.front().second.size();
    for (const auto& [name, values] : columns)
        if (values.size() != n) throw ValidationError("column '" + name + "' has a different length");
    std::ostringstream out;
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j].first;
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_real(columns[j].second[i]);
        out << '\n';
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file << out.str();
    if (!file) throw IoError("write to '" + path + "' failed");
}

}  // namespace rulehte
