#include "symreg/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "symreg/error.hpp"
#include "symreg/rng.hpp"

namespace symreg::fit {

bool Candidate::valid() const noexcept { return std::isfinite(fitness); }

double mse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size())
        throw Error("mse: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                    std::to_string(actual.size()) + ")");
    if (actual.empty()) throw Error("mse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!std::isfinite(predicted[i])) return kInfiniteError;
        const double r = actual[i] - predicted[i];
        sum += r * r;
    }
    const double m = sum / static_cast<double>(actual.size());
    return std::isfinite(m) ? m : kInfiniteError;
}

double nmse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size())
        throw Error("nmse: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                    std::to_string(actual.size()) + ")");
    if (actual.size() < 2) throw Error("nmse: needs at least two values");
    const double mean =
        std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
    double den = 0.0;
    for (double y : actual) den += (y - mean) * (y - mean);
    if (!(den > 0.0)) throw DegenerateTargetError();
    double num = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!std::isfinite(predicted[i])) return kInfiniteError;
        const double r = predicted[i] - actual[i];
        num += r * r;
    }
    const double v = num / den;
    return std::isfinite(v) ? v : kInfiniteError;
}

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

// Penalized tr-tr MSE with an evaluation budget.
class Objective {
public:
    Objective(const expr::Skeleton& s, const data::Dataset& d, const OptimizerConfig& cfg)
        : skeleton_(s), data_(d), cfg_(cfg) {}

    double operator()(const Vec& theta) {
        ++evaluations_;
        const auto pred = expr::evaluate(skeleton_, data_.features, theta);
        double sum = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double r = pred[i] - data_.target[i];
            const double sq = r * r;
            sum += std::isfinite(sq) ? sq : cfg_.penalty;
        }
        const double v = sum / static_cast<double>(pred.size());
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    }

    Vec gradient(const Vec& theta) {
        Vec g(theta.size());
        Vec probe = theta;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double h = cfg_.gradient_step * std::max(1.0, std::fabs(theta[i]));
            probe[i] = theta[i] + h;
            const double fp = (*this)(probe);
            probe[i] = theta[i] - h;
            const double fm = (*this)(probe);
            probe[i] = theta[i];
            g[i] = (fp - fm) / (2.0 * h);
            if (!std::isfinite(g[i])) g[i] = 0.0;
        }
        return g;
    }

    bool exhausted() const { return evaluations_ >= cfg_.max_evaluations; }
    std::size_t evaluations() const { return evaluations_; }

private:
    const expr::Skeleton& skeleton_;
    const data::Dataset& data_;
    const OptimizerConfig& cfg_;
    std::size_t evaluations_ = 0;
};

struct LocalResult {
    Vec theta;
    double objective;
    bool converged;
    std::size_t evaluations;
};

// BFGS on the inverse Hessian with an Armijo backtracking line search.
LocalResult bfgs(Objective& f, Vec theta, const OptimizerConfig& cfg) {
    const std::size_t n = theta.size();
    auto identity = [n] {
        std::vector<Vec> h(n, Vec(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) h[i][i] = 1.0;
        return h;
    };
    std::vector<Vec> H = identity();
    bool h_is_identity = true;
    double fx = f(theta);
    Vec g = f.gradient(theta);
    bool converged = false;

    for (std::size_t iter = 0; iter < cfg.max_iterations && !f.exhausted(); ++iter) {
        const double gnorm = norm(g);
        if (gnorm < cfg.gradient_tolerance || fx == 0.0) {
            converged = true;
            break;
        }
        Vec d(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i] -= H[i][j] * g[j];
        double slope = dot(g, d);
        if (!(slope < 0.0)) {
            H = identity();
            h_is_identity = true;
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
            slope = -gnorm * gnorm;
        }

        double alpha = h_is_identity ? std::min(1.0, 1.0 / gnorm) : 1.0;
        Vec trial(n);
        double ft = fx;
        bool accepted = false;
        for (int ls = 0; ls < 50 && !f.exhausted(); ++ls) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = theta[i] + alpha * d[i];
            ft = f(trial);
            if (ft <= fx + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (!h_is_identity) {
                H = identity();
                h_is_identity = true;
                continue;
            }
            // Stalled on a steepest-descent step: flat within finite-difference noise.
            converged = gnorm <= 1e-6 * (1.0 + fx);
            break;
        }

        Vec s(n), gt = f.gradient(trial), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial[i] - theta[i];
            y[i] = gt[i] - g[i];
        }
        const double sy = dot(s, y);
        const double step_norm = norm(s);
        theta = trial;
        const double f_prev = fx;
        fx = ft;
        g = gt;

        if (sy > 1e-16 * step_norm * norm(y)) {
            if (h_is_identity) {
                const double scale = sy / dot(y, y);
                for (std::size_t i = 0; i < n; ++i) H[i][i] = scale;
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            const double rho = 1.0 / sy;
            Vec hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) hy[i] += H[i][j] * y[j];
            const double yhy = dot(y, hy);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    H[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
            h_is_identity = false;
        }

        if (step_norm <= 1e-15 * (1.0 + norm(theta)) && f_prev - fx <= 1e-16 * std::fabs(fx)) {
            converged = norm(g) <= 1e-6 * (1.0 + fx);
            break;
        }
    }
    if (!converged && norm(g) < cfg.gradient_tolerance) converged = true;
    return {std::move(theta), fx, converged, f.evaluations()};
}

} // namespace

FitResult fit_params(const expr::Skeleton& skeleton, const data::Dataset& tr_tr,
                     const OptimizerConfig& config, std::uint64_t seed) {
    FitResult out;
    if (skeleton.param_count == 0) {
        const auto pred = expr::evaluate(skeleton, tr_tr.features, {});
        out.train_mse = mse(pred, tr_tr.target);
        out.converged = true;
        out.evaluations = 1;
        return out;
    }

    const std::size_t restarts = std::max<std::size_t>(1, config.restarts);
    bool have_best = false;
    double best_objective = 0.0;
    for (std::size_t r = 0; r < restarts; ++r) {
        Vec start(skeleton.param_count, 1.0);
        if (r > 0) {
            Rng rng(derive_seed(seed, r));
            for (double& v : start) v = rng.normal();
        }
        Objective objective(skeleton, tr_tr, config);
        LocalResult local = bfgs(objective, std::move(start), config);
        out.evaluations += local.evaluations;
        const double train = mse(expr::evaluate(skeleton, tr_tr.features, local.theta), tr_tr.target);
        const bool better = !have_best || train < out.train_mse ||
                            (train == out.train_mse && local.objective < best_objective);
        if (better) {
            have_best = true;
            out.params = local.theta;
            out.train_mse = train;
            out.converged = local.converged && std::isfinite(train);
            best_objective = local.objective;
        }
        out.restarts_used = r + 1;
    }
    return out;
}

Candidate evaluate_candidate(const expr::Skeleton& skeleton, const data::SplitView& split,
                             const OptimizerConfig& config, std::uint64_t seed) {
    Candidate c;
    c.skeleton = skeleton;
    c.fit = fit_params(skeleton, split.tr_tr, config, seed);
    const auto pred = expr::evaluate(skeleton, split.tr_val.features, c.fit.params);
    try {
        c.val_nmse = nmse(pred, split.tr_val.target);
    } catch (const Error&) {
        // Degenerate or too-small tr-val: the candidate cannot be ranked.
        c.val_nmse = kInfiniteError;
    }
    c.fitness = std::isfinite(c.val_nmse) ? -c.val_nmse : kInvalidFitness;
    return c;
}

double heldout_nmse(const Candidate& c, const data::Dataset& d) {
    if (c.fit.params.size() < c.skeleton.param_count) return kInfiniteError;
    const auto pred = expr::evaluate(c.skeleton, d.features, c.fit.params);
    try {
        return nmse(pred, d.target);
    } catch (const DegenerateTargetError&) {
        return kInfiniteError;
    }
}

} // namespace symreg::fit
