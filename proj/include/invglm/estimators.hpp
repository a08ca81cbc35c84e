#ifndef INVGLM_ESTIMATORS_HPP
#define INVGLM_ESTIMATORS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "aggregator.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "glm_core.hpp"
#include "objectives.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace invglm {

struct FilmConfig {
    Penalties pen{};
    IndexSet exogenous;  // J: coordinates pinned to a_j = 1
    Aggregator agg = Aggregator::mean();
    std::size_t max_outer_iter = 100;
    double outer_tol = 1e-6;  // relative change in the outer objective
    OptimSettings optim{};
    // j is selected when |beta_j| >= support_threshold * max_k |beta_k|. The
    // split beta = a * b is not scale identified, so a_j alone carries no
    // support information.
    double support_threshold = 0.05;

    void validate(std::size_t p) const {
        pen.validate();
        check_index_set(exogenous, p, "exogenous set J");
        optim.validate();
        require(max_outer_iter >= 1, "max_outer_iter must be >= 1");
        require(outer_tol >= 0.0, "outer_tol must be >= 0");
        require(support_threshold > 0.0 && support_threshold < 1.0,
                "support_threshold must lie in (0, 1)");
    }
};

struct FitInit {
    Vector a;
    Vector b;
    Vector theta;
};

struct FitResult {
    std::string method_tag;
    Vector a_hat;
    Vector b_hat;
    Vector beta_hat;
    std::vector<std::string> env_ids;  // keys of theta_hat
    Vector theta_hat;
    IndexSet selected_support;
    std::vector<double> objective_trace;
    bool converged = false;
    std::optional<Penalties> chosen_lambdas;
    std::vector<std::string> warnings;
    std::string diagnostic;

    double theta_for(const std::string& id) const {
        for (std::size_t e = 0; e < env_ids.size(); ++e)
            if (env_ids[e] == id) return theta_hat[static_cast<Eigen::Index>(e)];
        throw ContractError("fit has no intercept for environment '" + id + "'");
    }
};

// Coordinates whose magnitude reaches `rel` times the largest one; empty for beta = 0.
inline IndexSet relative_support(const Vector& beta, double rel) {
    IndexSet s;
    const double top = beta.size() ? beta.cwiseAbs().maxCoeff() : 0.0;
    if (!(top > 0.0)) return s;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (std::abs(beta[j]) >= rel * top) s.push_back(static_cast<std::size_t>(j));
    return s;
}

inline IndexSet nonzero_support(const Vector& beta, double tol = 0.0) {
    IndexSet s;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (std::abs(beta[j]) > tol) s.push_back(static_cast<std::size_t>(j));
    return s;
}

// --- Pooled and oracle GLM ------------------------------------------------

namespace detail {

// Damped Newton on (1/E) sum_e L^e(beta, theta_e) + ridge ||beta||^2 jointly in
// (beta, theta).
inline FitResult pooled_newton(const ProblemModel& model, double ridge) {
    const auto p = static_cast<Eigen::Index>(model.p());
    const auto E = static_cast<Eigen::Index>(model.size());
    const double inv_e = 1.0 / static_cast<double>(E);
    Vector x = Vector::Zero(p + E);

    auto value = [&](const Vector& z) {
        double v = 0.0;
        for (Eigen::Index e = 0; e < E; ++e)
            v += model[static_cast<std::size_t>(e)].at(z.head(p), z[p + e], Need::Value).loss;
        return v * inv_e + ridge * z.head(p).squaredNorm();
    };

    FitResult r;
    r.method_tag = "pooled";
    double fx = value(x);
    r.objective_trace.push_back(fx);
    constexpr int kMaxIter = 100;
    for (int it = 0; it < kMaxIter; ++it) {
        Vector grad = Vector::Zero(p + E);
        Matrix hess = Matrix::Zero(p + E, p + E);
        grad.head(p) = 2.0 * ridge * x.head(p);
        hess.topLeftCorner(p, p).diagonal().setConstant(2.0 * ridge);
        for (Eigen::Index e = 0; e < E; ++e) {
            const auto& env = model[static_cast<std::size_t>(e)];
            const auto pt = env.at(x.head(p), x[p + e], Need::Curvature);
            grad.head(p) += inv_e * pt.grad;
            grad[p + e] = inv_e * pt.grad_theta;
            hess.topLeftCorner(p, p) += inv_e * env.hessian(pt);
            hess.block(0, p + e, p, 1) = inv_e * pt.cross;
            hess.block(p + e, 0, 1, p) = inv_e * pt.cross.transpose();
            hess(p + e, p + e) = inv_e * pt.theta_curv;
        }
        if (!grad.allFinite()) throw NumericalError("pooled GLM: non-finite gradient at " + describe(x));
        if (grad.cwiseAbs().maxCoeff() <= 1e-10) {
            r.converged = true;
            break;
        }
        Eigen::LDLT<Matrix> ldlt(hess);
        const Vector dvec = ldlt.vectorD().cwiseAbs();
        if (ldlt.info() != Eigen::Success || dvec.minCoeff() <= 1e-12 * std::max(1.0, dvec.maxCoeff())) {
            r.diagnostic = "pooled GLM: Hessian is singular or ill-conditioned (consider ridge > 0)";
            break;
        }
        const Vector step = ldlt.solve(-grad);
        double t = 1.0;
        bool moved = false;
        while (t > 1e-12) {
            const Vector xn = x + t * step;
            const double fn = value(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * t * grad.dot(step)) {
                x = xn;
                fx = fn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        r.objective_trace.push_back(fx);
        if (!moved) {
            // at machine precision the Newton direction no longer decreases f
            r.converged = grad.cwiseAbs().maxCoeff() <= 1e-6;
            if (!r.converged) r.diagnostic = "pooled GLM: line search failed";
            break;
        }
    }
    if (!r.converged && r.diagnostic.empty())
        r.diagnostic = "pooled GLM: iteration limit reached (possible separation)";
    r.beta_hat = x.head(p);
    r.b_hat = r.beta_hat;
    r.a_hat = Vector::Ones(p);
    r.theta_hat = x.tail(E);
    r.env_ids = model.env_ids();
    r.selected_support = nonzero_support(r.beta_hat);
    return r;
}

}  // namespace detail

/// Per-environment-intercept GLM on all features and environments.
inline FitResult fit_pooled_glm(const MultiEnvData& data, LinkFamily link, double ridge = 0.0) {
    require(ridge >= 0.0 && std::isfinite(ridge), "ridge must be finite and >= 0");
    return detail::pooled_newton(ProblemModel(data, link), ridge);
}

/// Pooled GLM restricted to the columns `invariant_set` and the environments
/// `inlier_env_ids`; coefficients outside the set are exactly zero.
inline FitResult fit_oracle_glm(const MultiEnvData& data, LinkFamily link,
                                const IndexSet& invariant_set,
                                const std::vector<std::string>& inlier_env_ids) {
    check_index_set(invariant_set, data.p(), "invariant set");
    require(!inlier_env_ids.empty(), "oracle GLM needs at least one inlier environment");
    const auto sub = data.subset(inlier_env_ids).select_columns(invariant_set);
    FitResult r = fit_pooled_glm(sub, link, 0.0);
    Vector beta = Vector::Zero(static_cast<Eigen::Index>(data.p()));
    for (std::size_t k = 0; k < invariant_set.size(); ++k)
        beta[static_cast<Eigen::Index>(invariant_set[k])] = r.beta_hat[static_cast<Eigen::Index>(k)];
    r.method_tag = "oracle";
    r.beta_hat = beta;
    r.b_hat = beta;
    r.a_hat = Vector::Ones(static_cast<Eigen::Index>(data.p()));
    r.selected_support = nonzero_support(beta);
    return r;
}

// --- FILM / Robust-FILM ---------------------------------------------------

namespace detail {

inline ThetaObjective theta_objective(const ProblemModel& model, const Vector& a, const Vector& b,
                                      const Penalties& pen, const Aggregator& agg) {
    ThetaObjective obj;
    obj.joint = [&model, a, b, pen, agg](const Vector& theta, Vector* grad) {
        const FilmParams prm{a, b, theta};
        auto ev = film_objective(model, prm, pen, agg, grad ? WrtTheta : WrtNone);
        if (grad) *grad = std::move(ev.grad_theta);
        return ev.value;
    };
    obj.separable = agg.is_mean();
    if (obj.separable) {
        const Vector beta = a.cwiseProduct(b);
        const Vector a2 = a.cwiseProduct(a);
        obj.component = [&model, beta, a2, pen](std::size_t e, double t) -> std::array<double, 3> {
            const auto pt = model[e].at(beta, t, Need::Curvature);
            double f = pt.loss, d1 = pt.grad_theta, d2 = pt.theta_curv;
            if (pen.lambda1 != 0.0) {
                const Vector u = a2.cwiseProduct(pt.grad);
                f += pen.lambda1 * u.dot(pt.grad);
                d1 += 2.0 * pen.lambda1 * u.dot(pt.cross);
                const auto third = model[e].theta_third(beta, t).first;
                d2 += 2.0 * pen.lambda1 *
                      (a2.dot(pt.cross.cwiseAbs2()) + u.dot(third));
            }
            return {f, d1, d2};
        };
    }
    return obj;
}

inline void check_init(const FitInit& init, std::size_t p, std::size_t E) {
    FilmParams{init.a, init.b, init.theta}.validate(p, E);
}

}  // namespace detail

/// Alternating minimization (surrogate a-step, b-step, theta-step) on a
/// prepared problem. The aggregator in `config` selects FILM (Mean) or the
/// robust variant (Median / TrimmedMean).
inline FitResult fit_alternating(const ProblemModel& model, const FilmConfig& config,
                                 const FitInit& init) {
    const std::size_t p = model.p();
    const std::size_t E = model.size();
    config.validate(p);
    detail::check_init(init, p, E);

    Vector a = init.a, b = init.b, theta = init.theta;
    for (auto j : config.exogenous) a[static_cast<Eigen::Index>(j)] = 1.0;
    const Vector lower = Vector::Zero(static_cast<Eigen::Index>(p));
    const Vector upper = Vector::Ones(static_cast<Eigen::Index>(p));

    auto q_value = [&](const Vector& aa, const Vector& bb, const Vector& tt) {
        return film_objective(model, FilmParams{aa, bb, tt}, config.pen, config.agg).value;
    };

    FitResult r;
    r.method_tag = config.agg.is_mean() ? "film" : "robust-film";
    double q_prev = q_value(a, b, theta);
    if (!std::isfinite(q_prev))
        throw NumericalError("FILM: non-finite objective at the initial point a = " +
                             detail::describe(a) + ", b = " + detail::describe(b));
    r.objective_trace.push_back(q_prev);

    for (std::size_t k = 0; k < config.max_outer_iter; ++k) {
        try {
            const auto anchor = make_anchor(model, b, theta, a.cwiseProduct(b));
            const Objective surrogate = [&](const Vector& aa, Vector* g) {
                auto ev = film_surrogate(model, aa, anchor, config.pen, config.agg, g != nullptr);
                if (g) *g = std::move(ev.grad);
                return ev.value;
            };
            a = minimize_box(surrogate, lower, upper, a, config.exogenous, config.optim).minimizer;

            const Objective b_obj = [&](const Vector& bb, Vector* g) {
                auto ev = film_objective(model, FilmParams{a, bb, theta}, config.pen, config.agg,
                                         g ? WrtB : WrtNone);
                if (g) *g = std::move(ev.grad_b);
                return ev.value;
            };
            b = minimize_unconstrained(b_obj, b, config.optim).minimizer;

            theta = minimize_scalars(detail::theta_objective(model, a, b, config.pen, config.agg),
                                     theta, config.optim)
                        .minimizer;
        } catch (const NumericalError& err) {
            throw NumericalError("FILM outer iteration " + std::to_string(k) + " (a = " +
                                 detail::describe(a) + ", b = " + detail::describe(b) +
                                 "): " + err.what());
        }
        const double q = q_value(a, b, theta);
        if (!std::isfinite(q))
            throw NumericalError("FILM outer iteration " + std::to_string(k) +
                                 ": non-finite objective at a = " + detail::describe(a) +
                                 ", b = " + detail::describe(b));
        r.objective_trace.push_back(q);
        if (std::abs(q - q_prev) <= config.outer_tol * std::max(1.0, std::abs(q_prev))) {
            r.converged = true;
            break;
        }
        q_prev = q;
    }
    r.a_hat = a;
    r.b_hat = b;
    r.beta_hat = a.cwiseProduct(b);
    r.env_ids = model.env_ids();
    r.theta_hat = theta;
    r.selected_support = relative_support(r.beta_hat, config.support_threshold);
    return r;
}

/// FILM with environment-mean aggregation.
inline FitResult fit_film(const MultiEnvData& data, LinkFamily link, const FilmConfig& config,
                          const FitInit& init) {
    require(config.agg.is_mean(), "fit_film requires the mean aggregator; use fit_robust_film");
    return fit_alternating(ProblemModel(data, link), config, init);
}

/// Robust-FILM: the same loop with a robust aggregator over environments.
/// A Mean aggregator reproduces fit_film exactly.
inline FitResult fit_robust_film(const MultiEnvData& data, LinkFamily link,
                                 const FilmConfig& config, const FitInit& init) {
    return fit_alternating(ProblemModel(data, link), config, init);
}

// --- Initial points and cross-validation ----------------------------------

/// Warm start (a = 0.5, b = 2 * pooled GLM beta) followed by `n_random` draws
/// with a_j ~ U(0.2, 0.8), b_j ~ N(0, 1), theta = 0.
inline std::vector<FitInit> default_inits(const MultiEnvData& train, LinkFamily link,
                                          std::size_t n_random, std::uint64_t seed) {
    const auto p = static_cast<Eigen::Index>(train.p());
    const auto E = static_cast<Eigen::Index>(train.size());
    std::vector<FitInit> inits;
    Vector warm_b = Vector::Zero(p);
    {
        const auto pooled = fit_pooled_glm(train, link, 0.0);
        if (pooled.beta_hat.allFinite()) warm_b = 2.0 * pooled.beta_hat;
    }
    inits.push_back(FitInit{Vector::Constant(p, 0.5), warm_b, Vector::Zero(E)});
    Rng rng = make_rng(seed, {kTagInits});
    std::uniform_real_distribution<double> unif(0.2, 0.8);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < n_random; ++l) {
        FitInit in{Vector(p), Vector(p), Vector::Zero(E)};
        for (Eigen::Index j = 0; j < p; ++j) in.a[j] = unif(rng);
        for (Eigen::Index j = 0; j < p; ++j) in.b[j] = normal(rng);
        inits.push_back(std::move(in));
    }
    return inits;
}

enum class ValidationCriterion { FullObjective, PooledLoss };

struct CvConfig {
    std::vector<FitInit> inits;  // L starting triples (theta sized for train envs)
    std::vector<Penalties> lambda_grid;  // M pairs
    std::vector<std::string> train_envs;
    std::vector<std::string> val_env_ids;
    ValidationCriterion criterion = ValidationCriterion::FullObjective;
};

// Evenly spaced lambda1 values with a shared lambda2.
inline std::vector<Penalties> lambda1_grid(double lo, double hi, std::size_t count, double lambda2) {
    require(count >= 1, "lambda grid needs at least one value");
    std::vector<Penalties> grid;
    for (std::size_t m = 0; m < count; ++m) {
        const double t = count == 1 ? 0.0 : static_cast<double>(m) / static_cast<double>(count - 1);
        grid.push_back(Penalties{lo + t * (hi - lo), lambda2});
    }
    return grid;
}

/// Intercepts for the given environments with the coefficients held fixed,
/// each minimizing that environment's own negative log-likelihood.
inline Vector refit_intercepts(const ProblemModel& model, const Vector& beta,
                               const OptimSettings& settings) {
    Vector theta0 = Vector::Zero(static_cast<Eigen::Index>(model.size()));
    ThetaObjective obj;
    obj.joint = [&](const Vector& t, Vector*) {
        double v = 0.0;
        for (std::size_t e = 0; e < model.size(); ++e)
            v += model[e].at(beta, t[static_cast<Eigen::Index>(e)], Need::Value).loss;
        return v;
    };
    obj.separable = true;
    obj.component = [&](std::size_t e, double t) -> std::array<double, 3> {
        const auto pt = model[e].at(beta, t, Need::Curvature);
        return {pt.loss, pt.grad_theta, pt.theta_curv};
    };
    return minimize_scalars(obj, theta0, settings).minimizer;
}

/// Validation criterion of a fitted (a, b) on held-out environments.
inline double validation_score(const ProblemModel& val_model, const FitResult& fit,
                               const Penalties& pen, const Aggregator& agg,
                               ValidationCriterion criterion, const OptimSettings& settings,
                               Vector* theta_val = nullptr) {
    const Vector tv = refit_intercepts(val_model, fit.beta_hat, settings);
    if (theta_val) *theta_val = tv;
    const Penalties used = criterion == ValidationCriterion::PooledLoss ? Penalties{0.0, 0.0} : pen;
    return film_objective(val_model, FilmParams{fit.a_hat, fit.b_hat, tv}, used, agg).value;
}

/// Grid search over initial points and tuning pairs: every (l, m) is fit on
/// the training environments and scored on the validation environments.
/// Ties go to the smaller validation value, then smaller lambda1, then the
/// earlier initial point.
inline FitResult fit_cv(const MultiEnvData& data, LinkFamily link, const CvConfig& cv,
                        const FilmConfig& base) {
    require(!cv.inits.empty(), "cross-validation needs at least one initial point");
    require(!cv.lambda_grid.empty(), "cross-validation needs at least one tuning pair");
    require(!cv.train_envs.empty() && !cv.val_env_ids.empty(),
            "cross-validation needs training and validation environments");
    const std::set<std::string> tr(cv.train_envs.begin(), cv.train_envs.end());
    for (const auto& v : cv.val_env_ids)
        require(!tr.contains(v), "environment '" + v + "' is both a training and a validation environment");

    const ProblemModel train(data.subset(cv.train_envs), link);
    const ProblemModel val(data.subset(cv.val_env_ids), link);

    std::optional<FitResult> best;
    Vector best_theta_val;
    std::tuple<double, double, std::size_t> best_key{std::numeric_limits<double>::infinity(), 0.0, 0};
    std::vector<std::string> failures;
    for (std::size_t l = 0; l < cv.inits.size(); ++l) {
        for (const auto& pen : cv.lambda_grid) {
            FilmConfig cfg = base;
            cfg.pen = pen;
            FitResult fit;
            try {
                fit = fit_alternating(train, cfg, cv.inits[l]);
            } catch (const NumericalError& err) {
                failures.push_back(err.what());
                continue;
            }
            Vector tv;
            const double score = validation_score(val, fit, pen, base.agg, cv.criterion, base.optim, &tv);
            if (!std::isfinite(score)) continue;
            const std::tuple<double, double, std::size_t> key{score, pen.lambda1, l};
            if (!best || key < best_key) {
                best_key = key;
                fit.chosen_lambdas = pen;
                best = std::move(fit);
                best_theta_val = tv;
            }
        }
    }
    if (!best)
        throw NumericalError("cross-validation: every candidate fit failed" +
                             (failures.empty() ? std::string() : ": " + failures.front()));
    FitResult r = std::move(*best);
    r.method_tag += "-cv";
    for (std::size_t v = 0; v < cv.val_env_ids.size(); ++v) {
        r.env_ids.push_back(cv.val_env_ids[v]);
        r.theta_hat.conservativeResize(r.theta_hat.size() + 1);
        r.theta_hat[r.theta_hat.size() - 1] = best_theta_val[static_cast<Eigen::Index>(v)];
    }
    if (!failures.empty())
        r.warnings.push_back(std::to_string(failures.size()) + " candidate fit(s) failed numerically");
    return r;
}

// --- EILLS ----------------------------------------------------------------

inline constexpr std::size_t kEillsDefaultMaxP = 20;

namespace detail {

// Exact minimizer of the identity-link subset objective: quadratic in beta_S.
class EillsQuadratic {
public:
    EillsQuadratic(const MultiEnvData& data, const Penalties& pen) : pen_(pen) {
        const auto p = static_cast<Eigen::Index>(data.p());
        gbar_ = Matrix::Zero(p, p);
        cbar_ = Vector::Zero(p);
        for (const auto& env : data) {
            const double n = static_cast<double>(env.n());
            grams_.push_back(env.x.transpose() * env.x / n);
            xtys_.push_back(env.x.transpose() * env.y / n);
            gbar_ += grams_.back();
            cbar_ += xtys_.back();
        }
        gbar_ /= static_cast<double>(data.size());
        cbar_ /= static_cast<double>(data.size());
    }

    // Returns (objective, beta_S) for support S.
    std::pair<double, Vector> solve(const IndexSet& S) const {
        const auto k = static_cast<Eigen::Index>(S.size());
        if (k == 0) return {0.0, Vector()};
        const double E = static_cast<double>(grams_.size());
        Matrix A(k, k);
        Vector rhs(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            rhs[i] = cbar_[static_cast<Eigen::Index>(S[i])];
            for (Eigen::Index j = 0; j < k; ++j)
                A(i, j) = gbar_(static_cast<Eigen::Index>(S[i]), static_cast<Eigen::Index>(S[j]));
        }
        std::vector<Matrix> ms;
        std::vector<Vector> cs;
        for (std::size_t e = 0; e < grams_.size(); ++e) {
            Matrix m(k, k);
            Vector c(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                c[i] = xtys_[e][static_cast<Eigen::Index>(S[i])];
                for (Eigen::Index j = 0; j < k; ++j)
                    m(i, j) = grams_[e](static_cast<Eigen::Index>(S[i]), static_cast<Eigen::Index>(S[j]));
            }
            if (pen_.lambda1 != 0.0) {
                A.noalias() += (2.0 * pen_.lambda1 / E) * (m.transpose() * m);
                rhs.noalias() += (2.0 * pen_.lambda1 / E) * (m.transpose() * c);
            }
            ms.push_back(std::move(m));
            cs.push_back(std::move(c));
        }
        Vector beta = A.ldlt().solve(rhs);
        double loss = 0.0, mom = 0.0;
        for (std::size_t e = 0; e < ms.size(); ++e) {
            const Vector mb = ms[e] * beta;
            loss += 0.5 * beta.dot(mb) - cs[e].dot(beta);
            mom += (mb - cs[e]).squaredNorm();
        }
        const double value = loss / E + pen_.lambda1 * mom / E + pen_.lambda2 * static_cast<double>(k);
        return {value, std::move(beta)};
    }

private:
    Penalties pen_;
    std::vector<Matrix> grams_;
    std::vector<Vector> xtys_;
    Matrix gbar_;
    Vector cbar_;
};

inline IndexSet mask_to_set(std::uint64_t mask) {
    IndexSet s;
    for (std::size_t j = 0; mask; ++j, mask >>= 1)
        if (mask & 1U) s.push_back(j);
    return s;
}

}  // namespace detail

/// Minimizes the subset objective over beta supported on `support` with the
/// generic quasi-Newton solver. Returns (objective, beta) with beta of length p.
inline std::pair<double, Vector> eills_subset_solve(const ProblemModel& model, const IndexSet& support,
                                                    const Penalties& pen, const OptimSettings& settings) {
    const auto p = static_cast<Eigen::Index>(model.p());
    const auto k = static_cast<Eigen::Index>(support.size());
    auto embed = [&](const Vector& z) {
        Vector beta = Vector::Zero(p);
        for (Eigen::Index i = 0; i < k; ++i) beta[static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)])] = z[i];
        return beta;
    };
    if (k == 0) return {eills_eval(model, Vector::Zero(p), support, pen).value, Vector::Zero(p)};
    const Objective obj = [&](const Vector& z, Vector* g) {
        auto ev = eills_eval(model, embed(z), support, pen, g != nullptr);
        if (g) {
            g->resize(k);
            for (Eigen::Index i = 0; i < k; ++i) (*g)[i] = ev.grad[static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)])];
        }
        return ev.value;
    };
    const auto out = minimize_unconstrained(obj, Vector::Zero(k), settings);
    return {out.objective_value, embed(out.minimizer)};
}

/// Brute-force search over all 2^p supports. Ties go to the smaller support,
/// then to the lexicographically smaller one.
inline FitResult fit_eills(const MultiEnvData& data, LinkFamily link, const Penalties& pen,
                           std::size_t max_p = kEillsDefaultMaxP, const OptimSettings& settings = {}) {
    pen.validate();
    const std::size_t p = data.p();
    if (p > max_p)
        throw RefusalError("EILLS refuses p = " + std::to_string(p) + " > max_p = " +
                           std::to_string(max_p) + ": exhaustive search costs 2^p subset solves");
    require(p < 63, "EILLS enumeration supports p < 63");
    FitResult r;
    r.method_tag = "eills";
    if (!link.is_identity()) r.warnings.push_back("EILLS with a logit link is experimental");

    std::optional<detail::EillsQuadratic> quad;
    std::optional<ProblemModel> model;
    if (link.is_identity()) quad.emplace(data, pen);
    else model.emplace(data, link);

    double best = std::numeric_limits<double>::infinity();
    IndexSet best_set;
    Vector best_beta = Vector::Zero(static_cast<Eigen::Index>(p));
    const std::uint64_t count = std::uint64_t{1} << p;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        const IndexSet S = detail::mask_to_set(mask);
        double value;
        Vector beta = Vector::Zero(static_cast<Eigen::Index>(p));
        if (quad) {
            auto [v, bs] = quad->solve(S);
            value = v;
            for (std::size_t i = 0; i < S.size(); ++i)
                beta[static_cast<Eigen::Index>(S[i])] = bs[static_cast<Eigen::Index>(i)];
        } else {
            std::tie(value, beta) = eills_subset_solve(*model, S, pen, settings);
        }
        if (!std::isfinite(value)) continue;
        const bool better = value < best ||
                            (value == best && (S.size() < best_set.size() ||
                                               (S.size() == best_set.size() && S < best_set)));
        if (better) {
            best = value;
            best_set = S;
            best_beta = beta;
        }
    }
    r.beta_hat = best_beta;
    r.b_hat = best_beta;
    r.a_hat = Vector::Zero(static_cast<Eigen::Index>(p));
    for (auto j : best_set) r.a_hat[static_cast<Eigen::Index>(j)] = 1.0;
    r.env_ids = data.env_ids();
    r.theta_hat = Vector::Zero(static_cast<Eigen::Index>(data.size()));
    r.selected_support = nonzero_support(best_beta);
    r.objective_trace.push_back(best);
    r.converged = true;
    return r;
}

// --- CoCo -----------------------------------------------------------------

inline constexpr double kCocoSupportTol = 1e-6;

/// Multi-start descent on the CoCo objective. Start 0 is b = 0, start 1 the
/// pooled GLM fit, the rest are N(0, 1) draws.
inline FitResult fit_coco(const MultiEnvData& data, LinkFamily link, const IndexSet& exogenous,
                          const OptimSettings& settings, std::size_t n_starts, std::uint64_t seed = 0) {
    require(n_starts >= 1, "CoCo needs at least one start");
    check_index_set(exogenous, data.p(), "exogenous set J");
    const ProblemModel model(data, link);
    const auto p = static_cast<Eigen::Index>(data.p());
    std::vector<Vector> starts{Vector::Zero(p)};
    if (n_starts >= 2) {
        const auto pooled = fit_pooled_glm(data, link, 0.0);
        starts.push_back(pooled.beta_hat.allFinite() ? pooled.beta_hat : Vector::Zero(p));
    }
    Rng rng = make_rng(seed, {kTagCocoStarts});
    std::normal_distribution<double> normal(0.0, 1.0);
    while (starts.size() < n_starts) {
        Vector b(p);
        for (Eigen::Index j = 0; j < p; ++j) b[j] = normal(rng);
        starts.push_back(std::move(b));
    }
    const Objective obj = [&](const Vector& b, Vector* g) {
        auto ev = coco_eval(model, b, exogenous, g != nullptr);
        if (g) *g = std::move(ev.grad);
        return ev.value;
    };
    FitResult r;
    r.method_tag = "coco";
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        const auto out = minimize_unconstrained(obj, s, settings);
        if (out.objective_value < best) {
            best = out.objective_value;
            r.beta_hat = out.minimizer;
            r.converged = out.converged;
            r.objective_trace = out.trace;
        }
    }
    if (exogenous.empty())
        r.warnings.push_back("CoCo without exogenous variables admits the degenerate solution b = 0");
    r.b_hat = r.beta_hat;
    r.a_hat = Vector::Ones(p);
    r.env_ids = data.env_ids();
    r.theta_hat = Vector::Zero(static_cast<Eigen::Index>(data.size()));
    r.selected_support = nonzero_support(r.beta_hat, kCocoSupportTol);
    return r;
}

// --- Prediction -----------------------------------------------------------

/// Mean response psi'(X beta_hat + theta).
inline Vector predict(const FitResult& result, const Matrix& x, double theta, LinkFamily link) {
    require(x.cols() == result.beta_hat.size(),
            "prediction matrix has " + std::to_string(x.cols()) + " columns, fit has p = " +
                std::to_string(result.beta_hat.size()));
    Vector eta = x * result.beta_hat;
    eta.array() += theta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = link.mean(eta[i]);
    return eta;
}

}  // namespace invglm

#endif
