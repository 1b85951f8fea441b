#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

/// Propensity scores either as one constant (randomized designs) or taken
/// from the dataset's propensity column.
class PropensitySource {
public:
    struct Column {};

    static PropensitySource constant(double value) {
        if (!(value > 0.0 && value < 1.0))
            throw ValidationError("constant propensity " + format_real(value) + " outside (0,1)");
        return PropensitySource(value);
    }

    static PropensitySource column() { return PropensitySource(Column{}); }

    bool is_constant() const noexcept { return std::holds_alternative<double>(source_); }
    double constant_value() const { return std::get<double>(source_); }

private:
    explicit PropensitySource(std::variant<double, Column> s) : source_(s) {}

    std::variant<double, Column> source_;
};

/// Optional truncation of propensities into [eps, 1 - eps]. Off by default.
struct PropensityClip {
    bool enabled = false;
    double epsilon = 0.01;
};

inline std::vector<double> resolve_propensity(const Dataset& ds, const PropensitySource& ps,
                                              PropensityClip clip = {}) {
    std::vector<double> out;
    if (ps.is_constant()) {
        out.assign(ds.size(), ps.constant_value());
    } else {
        if (!ds.pscore()) throw ColumnError("pscore");
        out = *ds.pscore();
    }
    if (clip.enabled) {
        if (!(clip.epsilon > 0.0 && clip.epsilon < 0.5))
            throw ConfigError("propensity clip epsilon must lie in (0, 0.5)");
        for (auto& p : out) p = std::clamp(p, clip.epsilon, 1.0 - clip.epsilon);
    }
    return out;
}

/// Inverse-propensity transformed outcome, whose conditional mean given x is
/// the treatment effect under unconfoundedness.
inline std::vector<double> transformed_outcome(std::span<const double> y, std::span<const int> t,
                                               std::span<const double> pscore) {
    if (y.size() != t.size() || y.size() != pscore.size())
        throw ShapeError("transformed_outcome: length mismatch");
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = pscore[i];
        if (!(p > 0.0 && p < 1.0))
            throw PropensityError("propensity " + format_real(p) + " outside (0,1) at row " + std::to_string(i + 1));
        out[i] = t[i] == 1 ? y[i] / p : -y[i] / (1.0 - p);
    }
    return out;
}

inline std::vector<double> transformed_outcome(const Dataset& ds, const PropensitySource& ps,
                                               PropensityClip clip = {}) {
    const auto pscore = resolve_propensity(ds, ps, clip);
    return transformed_outcome(ds.y(), ds.t(), pscore);
}

}  // namespace rulehte
