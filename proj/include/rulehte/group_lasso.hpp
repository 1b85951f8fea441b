#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "rulehte/basis.hpp"
#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/rng.hpp"

namespace rulehte {

// Penalized least squares with an unpenalized intercept and a weight
// lambda * sqrt(2) on the Euclidean norm of every two-column group:
//
//   1/2 sum_i (y_i - theta0 - sum_g z_ig' theta_g)^2 + lambda sqrt(2) sum_g ||theta_g||
//
// Each group is centered and orthonormalized (Q_g' Q_g = I) so that the block
// update is an exact group soft-threshold; the penalty is applied to the
// orthonormal coordinates and coefficients are mapped back to raw columns.

struct SolverConfig {
    std::size_t path_length = 100;
    double path_min_ratio = 1e-3;
    /// Relative change of the coefficient vector between full sweeps.
    double tolerance = 1e-7;
    std::size_t max_sweeps = 100000;
    std::size_t cv_folds = 10;
    std::size_t cv_repeats = 1;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const {
        if (path_length < 1) throw ConfigError("path length must be positive");
        if (!(path_min_ratio > 0.0 && path_min_ratio < 1.0)) throw ConfigError("path_min_ratio must lie in (0,1)");
        if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
        if (max_sweeps < 1) throw ConfigError("max_sweeps must be positive");
        if (cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
        if (cv_repeats < 1) throw ConfigError("cv_repeats must be positive");
    }
};

using Pair = std::array<double, 2>;

struct GroupSolution {
    double intercept = 0.0;
    /// Raw-column coefficients (treated, control) per group.
    std::vector<Pair> coef;
    /// Coefficients in the orthonormalized coordinates.
    std::vector<Pair> standardized;
    double lambda = 0.0;
    /// 1/2 ||y - fitted||^2 + lambda sqrt(2) sum ||coef_g||, on raw columns.
    double objective = 0.0;
    /// The minimized objective: same residual, penalty on `standardized`.
    double standardized_objective = 0.0;
    std::size_t sweeps = 0;
    /// Whether the minimized objective never increased between sweeps.
    bool monotone = true;

    std::size_t active_groups() const {
        return static_cast<std::size_t>(std::count_if(coef.begin(), coef.end(), [](const Pair& c) {
            return c[0] != 0.0 || c[1] != 0.0;
        }));
    }
};

class ConvergenceError : public Error {
public:
    ConvergenceError(GroupSolution last, std::size_t sweeps)
        : Error("group lasso did not converge within " + std::to_string(sweeps) + " sweeps at lambda " +
                format_real(last.lambda)),
          last_(std::move(last)) {}

    const GroupSolution& last_iterate() const noexcept { return last_; }
    double lambda() const noexcept { return last_.lambda; }

private:
    GroupSolution last_;
};

inline constexpr double kGroupWeight = 1.4142135623730951;  // sqrt(2)

/// Exact proximal step of kappa * ||.||_2: u * max(0, 1 - kappa / ||u||).
inline Pair group_soft_threshold(const Pair& u, double kappa) {
    const double norm = std::hypot(u[0], u[1]);
    if (norm <= kappa) return {0.0, 0.0};
    const double shrink = 1.0 - kappa / norm;
    return {u[0] * shrink, u[1] * shrink};
}

/// Centered, groupwise-orthonormalized copy of a grouped design.
class StandardizedDesign {
public:
    explicit StandardizedDesign(const GroupedDesign& design) : StandardizedDesign(design.columns) {}

    explicit StandardizedDesign(const Matrix& raw) : n_(raw.rows()), groups_(raw.cols() / 2) {
        if (raw.cols() % 2 != 0) throw ShapeError("grouped design must have an even number of columns");
        q_ = Matrix(n_, 2 * groups_);
        means_.resize(2 * groups_);
        basis_.resize(groups_);
        rank_.resize(groups_);
        std::vector<double> a(n_), b(n_);
        for (std::size_t g = 0; g < groups_; ++g) {
            auto ca = raw.col(2 * g);
            auto cb = raw.col(2 * g + 1);
            double ma = 0.0, mb = 0.0, raw_ss = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                ma += ca[i];
                mb += cb[i];
                raw_ss += ca[i] * ca[i] + cb[i] * cb[i];
            }
            ma /= static_cast<double>(n_);
            mb /= static_cast<double>(n_);
            means_[2 * g] = ma;
            means_[2 * g + 1] = mb;
            double p = 0.0, q = 0.0, s = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                a[i] = ca[i] - ma;
                b[i] = cb[i] - mb;
                p += a[i] * a[i];
                q += a[i] * b[i];
                s += b[i] * b[i];
            }
            // Eigen-decomposition of the 2x2 Gram matrix [[p, q], [q, s]].
            const double angle = 0.5 * std::atan2(2.0 * q, p - s);
            const double c = std::cos(angle), sn = std::sin(angle);
            const std::array<Pair, 2> vec{Pair{c, sn}, Pair{-sn, c}};
            std::array<double, 2> eig{p * c * c + 2.0 * q * c * sn + s * sn * sn,
                                      p * sn * sn - 2.0 * q * c * sn + s * c * c};
            const double floor = 1e-10 * raw_ss;
            std::size_t rank = 0;
            std::array<Pair, 2> basis{};  // columns of the back-transform
            for (std::size_t k = 0; k < 2; ++k) {
                if (!(eig[k] > floor) || eig[k] <= 0.0) continue;
                const double inv = 1.0 / std::sqrt(eig[k]);
                basis[rank] = {vec[k][0] * inv, vec[k][1] * inv};
                auto out = q_.col(2 * g + rank);
                for (std::size_t i = 0; i < n_; ++i) out[i] = a[i] * basis[rank][0] + b[i] * basis[rank][1];
                ++rank;
            }
            rank_[g] = rank;
            basis_[g] = basis;
        }
    }

    std::size_t rows() const noexcept { return n_; }
    std::size_t groups() const noexcept { return groups_; }
    std::size_t rank(std::size_t g) const noexcept { return rank_[g]; }
    std::span<const double> q(std::size_t g, std::size_t k) const { return q_.col(2 * g + k); }

    /// Raw coefficients from orthonormal ones.
    Pair to_raw(std::size_t g, const Pair& gamma) const {
        const auto& t = basis_[g];
        Pair out{0.0, 0.0};
        for (std::size_t k = 0; k < rank_[g]; ++k) {
            out[0] += t[k][0] * gamma[k];
            out[1] += t[k][1] * gamma[k];
        }
        return out;
    }

    /// Raw intercept for a fit with centered-scale intercept `ybar`.
    double raw_intercept(double ybar, const std::vector<Pair>& raw) const {
        double out = ybar;
        for (std::size_t g = 0; g < groups_; ++g) out -= means_[2 * g] * raw[g][0] + means_[2 * g + 1] * raw[g][1];
        return out;
    }

    Pair gradient(std::size_t g, std::span<const double> r) const {
        Pair out{0.0, 0.0};
        for (std::size_t k = 0; k < rank_[g]; ++k) {
            auto col = q(g, k);
            double acc = 0.0;
            for (std::size_t i = 0; i < n_; ++i) acc += col[i] * r[i];
            out[k] = acc;
        }
        return out;
    }

private:
    std::size_t n_;
    std::size_t groups_;
    Matrix q_;
    std::vector<double> means_;
    std::vector<std::array<Pair, 2>> basis_;
    std::vector<std::size_t> rank_;
};

/// Smallest lambda at which every group is zero: max_g ||Q_g'(y - ybar)|| / sqrt(2).
inline double lambda_max(const StandardizedDesign& sd, std::span<const double> y) {
    if (y.size() != sd.rows()) throw ShapeError("lambda_max: outcome length differs from design rows");
    bool any = false;
    for (std::size_t g = 0; g < sd.groups(); ++g) any = any || sd.rank(g) > 0;
    if (!any) throw DegenerateError("grouped design has no nonzero centered column");
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    std::vector<double> centered(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) centered[i] = y[i] - ybar;
    double best = 0.0;
    for (std::size_t g = 0; g < sd.groups(); ++g) {
        const auto grad = sd.gradient(g, centered);
        best = std::max(best, std::hypot(grad[0], grad[1]));
    }
    return best / kGroupWeight;
}

inline double lambda_max(const GroupedDesign& design, std::span<const double> y) {
    return lambda_max(StandardizedDesign(design), y);
}

/// Log-spaced from `lmax` down to `lmax * min_ratio`.
inline std::vector<double> lambda_path(double lmax, std::size_t length, double min_ratio) {
    std::vector<double> out(length);
    if (length == 1) {
        out[0] = lmax;
        return out;
    }
    const double step = std::log(min_ratio) / static_cast<double>(length - 1);
    for (std::size_t k = 0; k < length; ++k) out[k] = lmax * std::exp(step * static_cast<double>(k));
    out[0] = lmax;
    return out;
}

/// Worst KKT residuals of a solution, recomputed from its coefficients.
struct KktReport {
    /// max over active groups of ||g - kappa u|| / (1 + ||g||), g = Q'r, u = gamma/||gamma||.
    double active = 0.0;
    /// max over inactive groups of ||Q'r|| - kappa (positive means violated).
    double inactive = -kInf;

    bool passes(double bound = 1e-4) const { return active <= bound && inactive <= bound; }
};

inline KktReport kkt_report(const StandardizedDesign& sd, std::span<const double> y, const GroupSolution& sol) {
    const std::size_t n = sd.rows();
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - ybar;
    for (std::size_t g = 0; g < sd.groups(); ++g)
        for (std::size_t k = 0; k < sd.rank(g); ++k) {
            const double c = sol.standardized[g][k];
            if (c == 0.0) continue;
            auto col = sd.q(g, k);
            for (std::size_t i = 0; i < n; ++i) r[i] -= col[i] * c;
        }
    const double kappa = kGroupWeight * sol.lambda;
    KktReport out;
    for (std::size_t g = 0; g < sd.groups(); ++g) {
        if (sd.rank(g) == 0) continue;
        const auto grad = sd.gradient(g, r);
        const auto& gamma = sol.standardized[g];
        const double norm = std::hypot(gamma[0], gamma[1]);
        const double gnorm = std::hypot(grad[0], grad[1]);
        if (norm > 0.0) {
            const double d0 = grad[0] - kappa * gamma[0] / norm;
            const double d1 = grad[1] - kappa * gamma[1] / norm;
            out.active = std::max(out.active, std::hypot(d0, d1) / (1.0 + gnorm));
        } else {
            out.inactive = std::max(out.inactive, gnorm - kappa);
        }
    }
    return out;
}

namespace detail {

/// Lower-triangular factor of a symmetric positive definite matrix that
/// supports appending and deleting a row/column in quadratic time.
class UpdatableCholesky {
public:
    std::size_t size() const noexcept { return rows_.size(); }
    void clear() { rows_.clear(); }

    /// Factors the d x d row-major matrix h + ridge I, raising the ridge on breakdown.
    bool factor(const std::vector<double>& h, std::size_t d, double ridge) {
        for (int attempt = 0; attempt < 8; ++attempt, ridge *= 100.0) {
            rows_.assign(d, {});
            bool ok = true;
            for (std::size_t i = 0; i < d && ok; ++i) {
                auto& li = rows_[i];
                li.resize(i + 1);
                for (std::size_t j = 0; j <= i; ++j) {
                    const auto& lj = rows_[j];
                    double acc = h[i * d + j] + (i == j ? ridge : 0.0);
                    for (std::size_t k = 0; k < j; ++k) acc -= li[k] * lj[k];
                    if (i == j) {
                        if (!(acc > 0.0)) {
                            ok = false;
                            break;
                        }
                        li[i] = std::sqrt(acc);
                    } else {
                        li[j] = acc / lj[j];
                    }
                }
            }
            if (ok) return true;
        }
        rows_.clear();
        return false;
    }

    /// Appends a row/column given its off-diagonal entries and diagonal.
    bool append(std::span<const double> cross, double diag) {
        const std::size_t d = size();
        std::vector<double> row(d + 1);
        double ss = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const auto& li = rows_[i];
            double acc = cross[i];
            for (std::size_t k = 0; k < i; ++k) acc -= li[k] * row[k];
            row[i] = acc / li[i];
            ss += row[i] * row[i];
        }
        // A nearly dependent column gets a floored pivot; the factor is then
        // only a preconditioner, which conjugate gradients corrects.
        const double rest = std::max(diag - ss, 1e-8 * diag);
        if (!(rest > 0.0) || !std::isfinite(rest)) return false;
        row[d] = std::sqrt(rest);
        rows_.push_back(std::move(row));
        return true;
    }

    /// Deletes row/column p and restores the triangle with Givens rotations.
    void remove(std::size_t p) {
        rows_.erase(rows_.begin() + static_cast<std::ptrdiff_t>(p));
        for (std::size_t k = p; k < rows_.size(); ++k) {
            const double a = rows_[k][k], b = rows_[k][k + 1];
            const double r = std::hypot(a, b);
            const double c = a / r, s = b / r;
            for (std::size_t i = k; i < rows_.size(); ++i) {
                auto& li = rows_[i];
                const double x = li[k], y = li[k + 1];
                li[k] = c * x + s * y;
                li[k + 1] = -s * x + c * y;
            }
            rows_[k].pop_back();
        }
    }

    void solve(std::span<const double> b, std::span<double> x) const {
        const std::size_t d = size();
        for (std::size_t i = 0; i < d; ++i) {
            const auto& li = rows_[i];
            double acc = b[i];
            for (std::size_t k = 0; k < i; ++k) acc -= li[k] * x[k];
            x[i] = acc / li[i];
        }
        for (std::size_t i = d; i-- > 0;) {
            const auto& li = rows_[i];
            const double xi = x[i] / li[i];
            x[i] = xi;
            for (std::size_t k = 0; k < i; ++k) x[k] -= li[k] * xi;
        }
    }

private:
    std::vector<std::vector<double>> rows_;
};

class BlockDescent {
public:
    BlockDescent(const StandardizedDesign& sd, std::span<const double> y, const SolverConfig& cfg)
        : sd_(sd), cfg_(cfg), gamma_(sd.groups(), Pair{0.0, 0.0}), r_(y.size()) {
        ybar_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
        intercept_ = ybar_;
        for (std::size_t i = 0; i < y.size(); ++i) r_[i] = y[i] - intercept_;
        y_ = y;
    }

    GroupSolution solve(double lambda) {
        const double kappa = kGroupWeight * lambda;
        std::size_t sweeps = 0;
        bool monotone = true;
        double previous = objective(kappa);
        auto record = [&] {
            const double now = objective(kappa);
            if (now > previous + 1e-10 * (1.0 + std::abs(previous))) monotone = false;
            previous = now;
        };
        auto small = [&](double change) {
            return change <= cfg_.tolerance * std::max(norm(), std::numeric_limits<double>::min());
        };
        // Solve on the current support, then admit the groups that violate
        // optimality, worst first. Stop once the KKT conditions hold and the
        // last step moved the coefficients by less than the tolerance; when
        // Newton gives up, a full sweep provides that step instead.
        while (true) {
            sweeps += newton(kappa);
            record();
            if (certified(kappa)) {
                if (settled_ && small(last_step_)) break;
                const double change = sweep(kappa, /*active_only=*/false);
                ++sweeps;
                record();
                if (small(change)) break;
            } else {
                admit_violators(kappa);
                sweep(kappa, /*active_only=*/true);
                ++sweeps;
                record();
            }
            if (sweeps >= cfg_.max_sweeps) throw ConvergenceError(snapshot(lambda, kappa, sweeps, monotone), sweeps);
        }
        return snapshot(lambda, kappa, sweeps, monotone);
    }

private:
    double sweep(double kappa, bool active_only) {
        // Intercept in closed form; stays at ybar because Q is centered.
        double shift = 0.0;
        for (double v : r_) shift += v;
        shift /= static_cast<double>(r_.size());
        if (shift != 0.0) {
            intercept_ += shift;
            for (double& v : r_) v -= shift;
        }
        double change_sq = 0.0;
        for (std::size_t g = 0; g < sd_.groups(); ++g) {
            const std::size_t rank = sd_.rank(g);
            if (rank == 0) continue;
            auto& gamma = gamma_[g];
            if (active_only && gamma[0] == 0.0 && gamma[1] == 0.0) continue;
            auto u = sd_.gradient(g, r_);
            u[0] += gamma[0];
            u[1] += gamma[1];
            const Pair next = group_soft_threshold(u, kappa);
            const double d0 = next[0] - gamma[0];
            const double d1 = rank > 1 ? next[1] - gamma[1] : 0.0;
            if (d0 == 0.0 && d1 == 0.0) continue;
            update_residual(g, d0, d1);
            gamma = next;
            change_sq += d0 * d0 + d1 * d1;
        }
        return std::sqrt(change_sq);
    }

    void update_residual(std::size_t g, double d0, double d1) {
        const std::size_t n = r_.size();
        if (d0 != 0.0) {
            auto col = sd_.q(g, 0);
            for (std::size_t i = 0; i < n; ++i) r_[i] -= col[i] * d0;
        }
        if (d1 != 0.0) {
            auto col = sd_.q(g, 1);
            for (std::size_t i = 0; i < n; ++i) r_[i] -= col[i] * d1;
        }
    }

    static constexpr std::size_t kNewtonSteps = 50;
    static constexpr std::size_t kPcgSteps = 10;

    // Block updates of the zero groups whose gradient exceeds kappa, in
    // decreasing order of the excess.
    void admit_violators(double kappa) {
        std::vector<std::pair<double, std::size_t>> excess;
        for (std::size_t g = 0; g < sd_.groups(); ++g) {
            if (sd_.rank(g) == 0 || gamma_[g][0] != 0.0 || gamma_[g][1] != 0.0) continue;
            const auto grad = sd_.gradient(g, r_);
            const double e = std::hypot(grad[0], grad[1]) - kappa;
            if (e > 0.0) excess.emplace_back(e, g);
        }
        std::sort(excess.begin(), excess.end(), std::greater<>());
        for (const auto& [e, g] : excess) {
            const auto next = group_soft_threshold(sd_.gradient(g, r_), kappa);
            if (next[0] == 0.0 && next[1] == 0.0) continue;
            update_residual(g, next[0], sd_.rank(g) > 1 ? next[1] : 0.0);
            gamma_[g] = next;
        }
    }

    // Q_c' Q for every standardized column c, computed on first use.
    const std::vector<double>& gram(std::size_t c) {
        if (gram_.empty()) gram_.resize(2 * sd_.groups());
        auto& out = gram_[c];
        if (!out.empty()) return out;
        const auto qc = sd_.q(c / 2, c % 2);
        out.assign(2 * sd_.groups(), 0.0);
        for (std::size_t h = 0; h < sd_.groups(); ++h)
            for (std::size_t k = 0; k < sd_.rank(h); ++k) {
                const auto col = sd_.q(h, k);
                double acc = 0.0;
                for (std::size_t i = 0; i < qc.size(); ++i) acc += qc[i] * col[i];
                out[2 * h + k] = acc;
            }
        return out;
    }

    // Damped Newton iterations on the smooth restriction of the objective to
    // the current support. A step that carries a group through the origin
    // sets it to zero and shrinks the support. Returns the iterations taken.
    std::size_t newton(double kappa) {
        const std::size_t n = r_.size();
        std::vector<double> grad, h, step, w(n), trial(n);
        std::vector<Pair> next(sd_.groups());
        sync_support(kappa);
        settled_ = false;
        last_step_ = 0.0;
        std::size_t iter = 0;
        for (; iter < kNewtonSteps; ++iter) {
            const auto& cols = order_;
            const std::size_t d = cols.size();
            if (d == 0) break;
            grad.resize(d);
            step.resize(d);

            bool done = true, rough = true;
            for (std::size_t a = 0; a < d; ++a) {
                const std::size_t g = cols[a] / 2, k = cols[a] % 2;
                const auto col = sd_.q(g, k);
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += col[i] * r_[i];
                const auto& gamma = gamma_[g];
                grad[a] = kappa * gamma[k] / std::hypot(gamma[0], gamma[1]) - acc;
                const double scale = 1.0 + std::abs(acc);
                if (std::abs(grad[a]) > 1e-9 * scale) done = false;
                if (std::abs(grad[a]) > 1e-6 * scale) rough = false;
            }
            if (done) {
                settled_ = true;
                break;
            }
            // No point polishing a support that is about to grow.
            if (rough && has_violator(kappa)) break;

            hessian(kappa, h);
            double diag = 0.0;
            for (std::size_t a = 0; a < d; ++a) diag = std::max(diag, h[a * d + a]);
            if (!(factor_.size() == d && pcg(h, grad, step))) {
                if (!factor_.factor(h, d, 1e-12 * std::max(diag, 1.0))) break;
                factor_.solve(grad, step);
            }

            double slope = 0.0;
            for (std::size_t a = 0; a < d; ++a) slope -= grad[a] * step[a];
            if (!(slope < 0.0)) break;

            // w = Q_A (-step): the residual moves by -s w.
            std::fill(w.begin(), w.end(), 0.0);
            for (std::size_t a = 0; a < d; ++a) {
                const double c = -step[a];
                if (c == 0.0) continue;
                const auto col = sd_.q(cols[a] / 2, cols[a] % 2);
                for (std::size_t i = 0; i < n; ++i) w[i] += col[i] * c;
            }
            std::vector<double> delta(2 * sd_.groups(), 0.0);
            for (std::size_t a = 0; a < d; ++a) delta[cols[a]] = step[a];

            // Candidate steps: halvings of the full step plus every point
            // where a group's path crosses its orthogonal hyperplane, at
            // which that group is set to zero.
            std::vector<double> candidates;
            for (double c = 1.0; c > 1e-12; c *= 0.5) candidates.push_back(c);
            for (auto g : support_) {
                const auto& gamma = gamma_[g];
                const double gg = gamma[0] * gamma[0] + gamma[1] * gamma[1];
                const double gd = gamma[0] * delta[2 * g] + gamma[1] * delta[2 * g + 1];
                if (gd > 0.0 && gg / gd <= 1.0) candidates.push_back(std::min(1.0, gg / gd * (1.0 + 1e-12)));
            }
            auto evaluate = [&](double s, std::vector<double>& res, bool& dropped) {
                for (std::size_t i = 0; i < n; ++i) res[i] = r_[i] - s * w[i];
                double pen = 0.0;
                dropped = false;
                for (auto g : support_) {
                    const auto& gamma = gamma_[g];
                    Pair v{gamma[0] - s * delta[2 * g], gamma[1] - s * delta[2 * g + 1]};
                    if (v[0] * gamma[0] + v[1] * gamma[1] <= 0.0) {
                        for (std::size_t k = 0; k < sd_.rank(g); ++k) {
                            const auto col = sd_.q(g, k);
                            for (std::size_t i = 0; i < n; ++i) res[i] += col[i] * v[k];
                        }
                        v = {0.0, 0.0};
                        dropped = true;
                    }
                    next[g] = v;
                    pen += std::hypot(v[0], v[1]);
                }
                double rss = 0.0;
                for (double v : res) rss += v * v;
                return 0.5 * rss + kappa * pen;
            };
            const double current = objective(kappa);
            double best_s = 0.0, best = current;
            for (double c : candidates) {
                bool drop = false;
                const double value = evaluate(c, trial, drop);
                const bool ok = drop ? value < current : value <= current + 1e-4 * c * slope;
                if (ok && value < best) {
                    best = value;
                    best_s = c;
                }
            }
            if (best_s == 0.0) break;
            bool dropped = false;
            evaluate(best_s, trial, dropped);
            double moved = 0.0;
            for (auto g : support_) {
                moved += std::pow(next[g][0] - gamma_[g][0], 2) + std::pow(next[g][1] - gamma_[g][1], 2);
                gamma_[g] = next[g];
            }
            last_step_ = std::sqrt(moved);
            r_.swap(trial);
            if (dropped) {
                sync_support(kappa);
            } else if (current - best <= 1e-14 * (1.0 + std::abs(current))) {
                // Converged to rounding: further steps cannot lower the objective.
                settled_ = true;
                break;
            }
        }
        return iter + 1;
    }

    // Brings order_ (the factor's column order) in line with the nonzero
    // groups: deleted columns are removed from the factor, new ones appended.
    void sync_support(double kappa) {
        support_.clear();
        std::vector<char> in(2 * sd_.groups(), 0);
        for (std::size_t g = 0; g < sd_.groups(); ++g) {
            if (sd_.rank(g) == 0 || (gamma_[g][0] == 0.0 && gamma_[g][1] == 0.0)) continue;
            support_.push_back(g);
            for (std::size_t k = 0; k < sd_.rank(g); ++k) in[2 * g + k] = 1;
        }
        const bool factored = factor_.size() == order_.size();
        for (std::size_t p = order_.size(); p-- > 0;) {
            if (in[order_[p]]) continue;
            if (factored) factor_.remove(p);
            order_.erase(order_.begin() + static_cast<std::ptrdiff_t>(p));
        }
        std::vector<char> have(2 * sd_.groups(), 0);
        for (auto c : order_) have[c] = 1;
        bool ok = factored;
        std::vector<double> cross;
        for (auto g : support_)
            for (std::size_t k = 0; k < sd_.rank(g); ++k) {
                const std::size_t c = 2 * g + k;
                if (have[c]) continue;
                const auto& gc = gram(c);
                if (ok) {
                    cross.resize(order_.size());
                    for (std::size_t a = 0; a < order_.size(); ++a)
                        cross[a] = gc[order_[a]] + curvature(kappa, c, order_[a]);
                    ok = factor_.append(cross, gc[c] + curvature(kappa, c, c));
                }
                order_.push_back(c);
            }
        if (!ok) factor_.clear();
    }

    // Second derivative of kappa ||gamma_g|| between columns a and b.
    double curvature(double kappa, std::size_t a, std::size_t b) const {
        if (a / 2 != b / 2) return 0.0;
        const auto& gamma = gamma_[a / 2];
        const double norm = std::hypot(gamma[0], gamma[1]);
        const double ga = gamma[a % 2], gb = gamma[b % 2];
        return kappa / norm * ((a == b ? 1.0 : 0.0) - ga * gb / (norm * norm));
    }

    void hessian(double kappa, std::vector<double>& h) {
        const std::size_t d = order_.size();
        h.resize(d * d);
        for (std::size_t a = 0; a < d; ++a) {
            const auto& ga = gram_[order_[a]];
            for (std::size_t b = 0; b < d; ++b) h[a * d + b] = ga[order_[b]];
        }
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                if (order_[a] / 2 == order_[b] / 2) h[a * d + b] += curvature(kappa, order_[a], order_[b]);
    }

    // Conjugate gradients on h x = b preconditioned by the current factor,
    // which may belong to an earlier iterate. False if it converges slowly.
    bool pcg(const std::vector<double>& h, const std::vector<double>& b, std::vector<double>& x) const {
        const std::size_t d = b.size();
        std::vector<double> res(b), z(d), p(d), hp(d);
        std::fill(x.begin(), x.end(), 0.0);
        double bnorm = 0.0;
        for (double v : b) bnorm += v * v;
        bnorm = std::sqrt(bnorm);
        if (bnorm == 0.0) return true;
        factor_.solve(res, z);
        p = z;
        double rz = 0.0;
        for (std::size_t i = 0; i < d; ++i) rz += res[i] * z[i];
        for (std::size_t it = 0; it < kPcgSteps; ++it) {
            double php = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double* row = &h[i * d];
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += row[j] * p[j];
                hp[i] = acc;
                php += p[i] * acc;
            }
            if (!(php > 0.0)) return false;
            const double alpha = rz / php;
            double rn = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                x[i] += alpha * p[i];
                res[i] -= alpha * hp[i];
                rn += res[i] * res[i];
            }
            if (std::sqrt(rn) <= 1e-3 * bnorm) return true;
            factor_.solve(res, z);
            double next = 0.0;
            for (std::size_t i = 0; i < d; ++i) next += res[i] * z[i];
            const double beta = next / rz;
            rz = next;
            for (std::size_t i = 0; i < d; ++i) p[i] = z[i] + beta * p[i];
        }
        return false;
    }

    // Internal certificate, ten times tighter than the published bound.
    bool has_violator(double kappa) const {
        for (std::size_t g = 0; g < sd_.groups(); ++g) {
            if (sd_.rank(g) == 0 || gamma_[g][0] != 0.0 || gamma_[g][1] != 0.0) continue;
            const auto grad = sd_.gradient(g, r_);
            if (std::hypot(grad[0], grad[1]) > kappa + 1e-5) return true;
        }
        return false;
    }

    bool certified(double kappa) const {
        for (std::size_t g = 0; g < sd_.groups(); ++g) {
            if (sd_.rank(g) == 0) continue;
            const auto grad = sd_.gradient(g, r_);
            const auto& gamma = gamma_[g];
            const double norm = std::hypot(gamma[0], gamma[1]);
            const double gnorm = std::hypot(grad[0], grad[1]);
            if (norm > 0.0) {
                const double d = std::hypot(grad[0] - kappa * gamma[0] / norm, grad[1] - kappa * gamma[1] / norm);
                if (d > 1e-5 * (1.0 + gnorm)) return false;
            } else if (gnorm > kappa + 1e-5) {
                return false;
            }
        }
        return true;
    }

    double norm() const {
        double s = 0.0;
        for (const auto& g : gamma_) s += g[0] * g[0] + g[1] * g[1];
        return std::sqrt(s);
    }

    double objective(double kappa) const {
        double rss = 0.0;
        for (double v : r_) rss += v * v;
        double pen = 0.0;
        for (const auto& g : gamma_) pen += std::hypot(g[0], g[1]);
        return 0.5 * rss + kappa * pen;
    }

    GroupSolution snapshot(double lambda, double kappa, std::size_t sweeps, bool monotone) const {
        GroupSolution sol;
        sol.lambda = lambda;
        sol.standardized = gamma_;
        sol.coef.resize(sd_.groups());
        for (std::size_t g = 0; g < sd_.groups(); ++g) sol.coef[g] = sd_.to_raw(g, gamma_[g]);
        sol.intercept = sd_.raw_intercept(intercept_, sol.coef);
        double rss = 0.0;
        for (double v : r_) rss += v * v;
        double raw_pen = 0.0, std_pen = 0.0;
        for (std::size_t g = 0; g < sd_.groups(); ++g) {
            raw_pen += std::hypot(sol.coef[g][0], sol.coef[g][1]);
            std_pen += std::hypot(gamma_[g][0], gamma_[g][1]);
        }
        sol.objective = 0.5 * rss + kappa * raw_pen;
        sol.standardized_objective = 0.5 * rss + kappa * std_pen;
        sol.sweeps = sweeps;
        sol.monotone = monotone;
        return sol;
    }

    const StandardizedDesign& sd_;
    const SolverConfig& cfg_;
    std::vector<Pair> gamma_;
    std::vector<double> r_;
    std::span<const double> y_;
    double ybar_ = 0.0;
    double intercept_ = 0.0;
    std::vector<std::vector<double>> gram_;
    bool settled_ = false;
    double last_step_ = 0.0;
    UpdatableCholesky factor_;
    /// Standardized columns of the support in factor order.
    std::vector<std::size_t> order_;
    std::vector<std::size_t> support_;
};

}  // namespace detail

/// Solutions along `lambdas` (descending), each warm-started from the previous one.
inline std::vector<GroupSolution> solve_path(const StandardizedDesign& sd, std::span<const double> y,
                                             std::span<const double> lambdas, const SolverConfig& cfg) {
    cfg.validate();
    if (y.size() != sd.rows()) throw ShapeError("solve_path: outcome length differs from design rows");
    detail::BlockDescent solver(sd, y, cfg);
    std::vector<GroupSolution> out;
    out.reserve(lambdas.size());
    for (double lambda : lambdas) {
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
        out.push_back(solver.solve(lambda));
    }
    return out;
}

/// Full path from lambda_max down to lambda_max * path_min_ratio.
inline std::vector<GroupSolution> solve_path(const GroupedDesign& design, std::span<const double> y,
                                             const SolverConfig& cfg) {
    cfg.validate();
    StandardizedDesign sd(design);
    const auto lambdas = lambda_path(lambda_max(sd, y), cfg.path_length, cfg.path_min_ratio);
    return solve_path(sd, y, lambdas, cfg);
}

/// Fitted values theta0 + sum_g z_ig' theta_g on raw design rows.
inline std::vector<double> predict_design(const Matrix& raw, const GroupSolution& sol) {
    std::vector<double> out(raw.rows(), sol.intercept);
    for (std::size_t g = 0; g < sol.coef.size(); ++g)
        for (std::size_t k = 0; k < 2; ++k) {
            const double c = sol.coef[g][k];
            if (c == 0.0) continue;
            auto col = raw.col(2 * g + k);
            for (std::size_t i = 0; i < raw.rows(); ++i) out[i] += col[i] * c;
        }
    return out;
}

/// Fold index per row: rows are shuffled once, then each treatment arm is
/// dealt round-robin over the folds. Depends only on arm membership, not on
/// which arm is labelled treated.
inline std::vector<std::size_t> stratified_folds(std::span<const int> t, std::size_t folds, std::uint64_t seed) {
    const std::size_t n = t.size();
    if (folds < 2) throw ConfigError("need at least two folds");
    if (folds > n) throw ConfigError("more folds (" + std::to_string(folds) + ") than rows (" + std::to_string(n) + ")");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(seed, stream::kFolds);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> fold(n);
    std::array<std::size_t, 2> dealt{0, 0};
    for (auto i : order) fold[i] = dealt[t[i] == 1 ? 1 : 0]++ % folds;
    for (std::size_t arm = 0; arm < 2; ++arm)
        if (dealt[arm] < folds)
            throw ValidationError("fold construction: treatment arm " + std::to_string(arm) + " has " +
                                  std::to_string(dealt[arm]) + " rows, fewer than " + std::to_string(folds) +
                                  " folds");
    return fold;
}

struct LambdaSelection {
    double lambda = 0.0;
    std::size_t index = 0;
    std::vector<double> lambdas;
    /// Mean held-out squared error per lambda.
    std::vector<double> cv_error;
    /// Full-data solutions along `lambdas`.
    std::vector<GroupSolution> path;

    const GroupSolution& selected() const { return path[index]; }
};

namespace detail {

inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < std::min(threads, count); ++w)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) {
                try {
                    body(k);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Chooses lambda by repeated, arm-stratified K-fold cross-validation of the
/// held-out squared error. Ties go to the larger lambda.
inline LambdaSelection select_lambda(const GroupedDesign& design, std::span<const double> y, std::span<const int> t,
                                     const SolverConfig& cfg) {
    cfg.validate();
    const std::size_t n = design.rows();
    if (y.size() != n || t.size() != n) throw ShapeError("select_lambda: length mismatch");
    if (n < 2 * cfg.cv_folds)
        throw ConfigError("need at least 2*cv_folds rows (" + std::to_string(2 * cfg.cv_folds) + "), have " +
                          std::to_string(n));

    LambdaSelection sel;
    StandardizedDesign full(design);
    sel.lambdas = lambda_path(lambda_max(full, y), cfg.path_length, cfg.path_min_ratio);
    sel.path = solve_path(full, y, sel.lambdas, cfg);

    const std::size_t tasks = cfg.cv_repeats * cfg.cv_folds;
    std::vector<std::vector<double>> fold_sse(tasks, std::vector<double>(sel.lambdas.size(), 0.0));
    std::vector<std::vector<std::size_t>> assignments;
    for (std::size_t rep = 0; rep < cfg.cv_repeats; ++rep)
        assignments.push_back(stratified_folds(t, cfg.cv_folds, derive_seed(cfg.seed, rep)));

    detail::parallel_for(tasks, cfg.threads, [&](std::size_t task) {
        const std::size_t rep = task / cfg.cv_folds;
        const std::size_t fold = task % cfg.cv_folds;
        const auto& assign = assignments[rep];
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (assign[i] == fold ? test : train).push_back(i);
        const Matrix train_x = design.columns.select_rows(train);
        const Matrix test_x = design.columns.select_rows(test);
        std::vector<double> train_y(train.size());
        for (std::size_t k = 0; k < train.size(); ++k) train_y[k] = y[train[k]];
        StandardizedDesign sd(train_x);
        const auto path = solve_path(sd, train_y, sel.lambdas, cfg);
        for (std::size_t l = 0; l < path.size(); ++l) {
            const auto pred = predict_design(test_x, path[l]);
            double sse = 0.0;
            for (std::size_t k = 0; k < test.size(); ++k) {
                const double e = y[test[k]] - pred[k];
                sse += e * e;
            }
            fold_sse[task][l] = sse;
        }
    });

    sel.cv_error.assign(sel.lambdas.size(), 0.0);
    for (std::size_t task = 0; task < tasks; ++task)
        for (std::size_t l = 0; l < sel.lambdas.size(); ++l) sel.cv_error[l] += fold_sse[task][l];
    for (auto& e : sel.cv_error) e /= static_cast<double>(n * cfg.cv_repeats);

    sel.index = 0;
    for (std::size_t l = 1; l < sel.cv_error.size(); ++l)
        if (sel.cv_error[l] < sel.cv_error[sel.index]) sel.index = l;
    sel.lambda = sel.lambdas[sel.index];
    return sel;
}

}  // namespace rulehte
