#ifndef INVGLM_OPTIM_HPP
#define INVGLM_OPTIM_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"

namespace invglm {

struct OptimSettings {
    std::size_t max_inner_iter = 500;
    double grad_tol = 1e-7;  // sup-norm of the (projected) gradient
    // stop when an accepted step lowers f by at most f_rel_tol * max(1, |f|);
    // this is what ends the nonsmooth (median) subproblems
    double f_rel_tol = 1e-10;
    double step_shrink = 0.5;
    double armijo_c = 1e-4;
    double initial_step = 1.0;

    void validate() const {
        require(max_inner_iter >= 1, "max_inner_iter must be >= 1");
        require(grad_tol >= 0.0, "grad_tol must be >= 0");
        require(f_rel_tol >= 0.0, "f_rel_tol must be >= 0");
        require(step_shrink > 0.0 && step_shrink < 1.0, "step_shrink must lie in (0, 1)");
        require(armijo_c > 0.0 && armijo_c < 1.0, "armijo_c must lie in (0, 1)");
        require(initial_step > 0.0, "initial_step must be > 0");
    }
};

struct OptimOutcome {
    Vector minimizer;
    double objective_value = 0.0;
    std::size_t iterations_used = 0;
    bool converged = false;
    std::vector<double> trace;  // objective after each accepted step, starting point first
};

/// Objective oracle: returns f(x) and, when `grad` is non-null, writes the gradient.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

namespace detail {

inline std::string describe(const Vector& x) {
    std::ostringstream os;
    os.precision(17);
    os << "[";
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "]";
    return os.str();
}

inline void check_finite(double f, const Vector& g, const Vector& x, const char* where) {
    if (!std::isfinite(f) || !g.allFinite())
        throw NumericalError(std::string(where) + ": non-finite objective or gradient at x = " +
                             describe(x));
}

inline constexpr double kMinStep = 1e-20;

inline bool stalled(double f_old, double f_new, double tol) {
    return f_old - f_new <= tol * std::max({1.0, std::abs(f_old), std::abs(f_new)});
}

}  // namespace detail

/// Projected gradient descent on the box [lower, upper] with Armijo
/// backtracking along the projection arc. Trial steps use the
/// Barzilai-Borwein length of the previous iteration. Coordinates in `fixed`
/// are held at their upper bound.
inline OptimOutcome minimize_box(const Objective& f, const Vector& lower, const Vector& upper,
                                 const Vector& x0, const IndexSet& fixed,
                                 const OptimSettings& settings) {
    settings.validate();
    const Eigen::Index n = x0.size();
    require(lower.size() == n && upper.size() == n, "box bounds must match the length of x0");
    require((lower.array() <= upper.array()).all(), "lower bound exceeds upper bound");
    require((x0.array() >= lower.array()).all() && (x0.array() <= upper.array()).all(),
            "x0 lies outside the box: " + detail::describe(x0));
    check_index_set(fixed, static_cast<std::size_t>(n), "fixed set");

    Vector free_mask = Vector::Ones(n);
    Vector x = x0;
    for (auto j : fixed) {
        free_mask[static_cast<Eigen::Index>(j)] = 0.0;
        x[static_cast<Eigen::Index>(j)] = upper[static_cast<Eigen::Index>(j)];
    }
    auto project = [&](const Vector& z) {
        Vector out = z.cwiseMax(lower).cwiseMin(upper);
        for (auto j : fixed) out[static_cast<Eigen::Index>(j)] = upper[static_cast<Eigen::Index>(j)];
        return out;
    };

    OptimOutcome out;
    Vector g;
    double fx = f(x, &g);
    detail::check_finite(fx, g, x, "minimize_box");
    g = g.cwiseProduct(free_mask);
    out.trace.push_back(fx);

    double alpha = settings.initial_step;
    std::size_t it = 0;
    for (; it < settings.max_inner_iter; ++it) {
        if ((project(x - g) - x).cwiseAbs().maxCoeff() <= settings.grad_tol) {
            out.converged = true;
            break;
        }
        double t = alpha;
        Vector xn, gn;
        double fn = 0.0;
        bool accepted = false;
        while (t >= detail::kMinStep) {
            xn = project(x - t * g);
            const double decrease = g.dot(xn - x);
            fn = f(xn, &gn);
            if (std::isfinite(fn) && gn.allFinite() && fn <= fx + settings.armijo_c * decrease) {
                accepted = true;
                break;
            }
            t *= settings.step_shrink;
        }
        if (!accepted) break;
        gn = gn.cwiseProduct(free_mask);
        const Vector s = xn - x;
        const Vector yv = gn - g;
        const double sy = s.dot(yv);
        if (s.squaredNorm() == 0.0) {
            // projection pinned every coordinate; nothing left to move
            out.converged = (project(xn - gn) - xn).cwiseAbs().maxCoeff() <= settings.grad_tol;
            x = xn, g = gn, fx = fn;
            out.trace.push_back(fx);
            ++it;
            break;
        }
        alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : std::min(1e12, 2.0 * t);
        const bool stop = detail::stalled(fx, fn, settings.f_rel_tol);
        x = std::move(xn);
        g = std::move(gn);
        fx = fn;
        out.trace.push_back(fx);
        if (stop) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.minimizer = x;
    out.objective_value = fx;
    out.iterations_used = it;
    return out;
}

/// Unconstrained descent with limited-memory BFGS directions and Armijo
/// backtracking; falls back to steepest descent whenever the quasi-Newton
/// direction is not a descent direction.
inline OptimOutcome minimize_unconstrained(const Objective& f, const Vector& x0,
                                           const OptimSettings& settings) {
    settings.validate();
    constexpr std::size_t kMemory = 8;
    OptimOutcome out;
    Vector x = x0;
    Vector g;
    double fx = f(x, &g);
    detail::check_finite(fx, g, x, "minimize_unconstrained");
    out.trace.push_back(fx);

    std::deque<Vector> S, Y;
    std::deque<double> rho;
    std::size_t it = 0;
    for (; it < settings.max_inner_iter; ++it) {
        if (g.cwiseAbs().maxCoeff() <= settings.grad_tol) {
            out.converged = true;
            break;
        }
        // two-loop recursion
        Vector d = -g;
        std::vector<double> alphas(S.size());
        for (std::size_t k = S.size(); k-- > 0;) {
            alphas[k] = rho[k] * S[k].dot(d);
            d -= alphas[k] * Y[k];
        }
        double t0 = 1.0;
        if (!S.empty()) {
            d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        } else {
            t0 = settings.initial_step / std::max(1.0, g.cwiseAbs().maxCoeff());
        }
        for (std::size_t k = 0; k < S.size(); ++k) {
            const double beta = rho[k] * Y[k].dot(d);
            d += (alphas[k] - beta) * S[k];
        }
        double slope = g.dot(d);
        if (!(slope < 0.0) || !d.allFinite()) {
            S.clear(), Y.clear(), rho.clear();
            d = -g;
            slope = -g.squaredNorm();
            t0 = settings.initial_step / std::max(1.0, g.cwiseAbs().maxCoeff());
        }
        double t = t0;
        Vector xn, gn;
        double fn = 0.0;
        bool accepted = false;
        while (t >= detail::kMinStep) {
            xn = x + t * d;
            fn = f(xn, &gn);
            if (std::isfinite(fn) && gn.allFinite() && fn <= fx + settings.armijo_c * t * slope) {
                accepted = true;
                break;
            }
            t *= settings.step_shrink;
        }
        if (!accepted) {
            if (S.empty()) break;
            // stale curvature pairs; retry this iteration as steepest descent
            S.clear(), Y.clear(), rho.clear();
            continue;
        }
        Vector s = xn - x;
        Vector yv = gn - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            S.push_back(std::move(s));
            Y.push_back(std::move(yv));
            rho.push_back(1.0 / sy);
            if (S.size() > kMemory) S.pop_front(), Y.pop_front(), rho.pop_front();
        }
        const bool stop = detail::stalled(fx, fn, settings.f_rel_tol);
        x = std::move(xn);
        g = std::move(gn);
        fx = fn;
        out.trace.push_back(fx);
        if (stop) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.minimizer = x;
    out.objective_value = fx;
    out.iterations_used = it;
    return out;
}

/// Objective over the per-environment intercepts.
///
/// `joint` evaluates the full objective and its gradient. When `separable` is
/// set the objective equals a constant plus a positive multiple of
/// sum_e f_e(theta_e), and `component(e, t)` returns {f_e, f_e', f_e''}.
struct ThetaObjective {
    Objective joint;
    bool separable = false;
    std::function<std::array<double, 3>(std::size_t, double)> component;
};

inline constexpr double kThetaBracket = 50.0;

namespace detail {

// Safeguarded Newton on f' inside [lo, hi]; bisects whenever the Newton step
// leaves the current bracket or the curvature is not positive.
inline std::pair<double, bool> newton_1d(const std::function<std::array<double, 3>(double)>& fn,
                                         double t0, double tol, std::size_t max_iter) {
    double lo = -kThetaBracket, hi = kThetaBracket;
    const double start = std::clamp(t0, lo, hi);
    const auto f_start = fn(start);
    double t = start;
    bool converged = false;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const auto [f, d1, d2] = fn(t);
        if (!std::isfinite(f) || !std::isfinite(d1))
            throw NumericalError("intercept update: non-finite objective at theta = " +
                                 std::to_string(t));
        if (std::abs(d1) <= tol) {
            converged = true;
            break;
        }
        if (d1 > 0.0) hi = t; else lo = t;
        if (hi - lo <= 1e-13 * std::max(1.0, std::abs(t))) break;
        double next = d2 > 0.0 ? t - d1 / d2 : lo + 0.5 * (hi - lo);
        if (!(next > lo && next < hi)) next = lo + 0.5 * (hi - lo);
        t = next;
    }
    if (fn(t)[0] > f_start[0]) return {start, false};
    return {t, converged};
}

}  // namespace detail

/// Minimizes over the intercept vector: independent 1-D Newton solves when the
/// objective is separable, joint quasi-Newton descent otherwise.
inline OptimOutcome minimize_scalars(const ThetaObjective& obj, const Vector& theta0,
                                     const OptimSettings& settings) {
    settings.validate();
    if (!obj.separable) return minimize_unconstrained(obj.joint, theta0, settings);
    require(static_cast<bool>(obj.component), "separable intercept objective needs a component oracle");
    OptimOutcome out;
    out.trace.push_back(obj.joint(theta0, nullptr));
    out.minimizer = theta0;
    out.converged = true;
    for (Eigen::Index e = 0; e < theta0.size(); ++e) {
        const auto comp = [&](double t) { return obj.component(static_cast<std::size_t>(e), t); };
        const auto [t, ok] = detail::newton_1d(comp, theta0[e], settings.grad_tol, settings.max_inner_iter);
        out.minimizer[e] = t;
        out.converged = out.converged && ok;
    }
    out.objective_value = obj.joint(out.minimizer, nullptr);
    out.trace.push_back(out.objective_value);
    out.iterations_used = 1;
    return out;
}

}  // namespace invglm

#endif
