#ifndef INVGLM_OBJECTIVES_HPP
#define INVGLM_OBJECTIVES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "aggregator.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "glm_core.hpp"

namespace invglm {

/// Relaxed parameterization beta = a (.) b with per-environment intercepts.
struct FilmParams {
    Vector a;
    Vector b;
    Vector theta;

    Vector beta() const { return a.cwiseProduct(b); }

    void validate(std::size_t p, std::size_t n_envs) const {
        require(static_cast<std::size_t>(a.size()) == p,
                "a has length " + std::to_string(a.size()) + ", expected p = " + std::to_string(p));
        require(static_cast<std::size_t>(b.size()) == p,
                "b has length " + std::to_string(b.size()) + ", expected p = " + std::to_string(p));
        require(static_cast<std::size_t>(theta.size()) == n_envs,
                "theta has length " + std::to_string(theta.size()) + ", expected " +
                    std::to_string(n_envs) + " environments");
        require(a.allFinite() && b.allFinite() && theta.allFinite(), "parameters must be finite");
        require((a.array() >= 0.0).all() && (a.array() <= 1.0).all(), "a must lie in [0, 1]^p");
    }
};

struct Penalties {
    double lambda1 = 0.0;  // invariance (gradient moment) weight
    double lambda2 = 0.0;  // support bimodality / cardinality weight

    void validate() const {
        require(lambda1 >= 0.0 && std::isfinite(lambda1), "lambda1 must be finite and >= 0");
        require(lambda2 >= 0.0 && std::isfinite(lambda2), "lambda2 must be finite and >= 0");
    }
};

inline double bimodality_penalty(const Vector& a) {
    return (a.array() * (1.0 - a.array())).sum();
}

// Which gradient blocks to produce.
enum Wrt : unsigned { WrtNone = 0, WrtA = 1, WrtB = 2, WrtTheta = 4, WrtAll = 7 };

struct FilmEval {
    double value = 0.0;
    Vector grad_a;
    Vector grad_b;
    Vector grad_theta;
};

/// Relaxed loss with aggregator:
///   Psi_e(L^e(a.b, theta_e)) + lambda1 Psi_e(sum_j a_j^2 g_ej^2) + lambda2 sum_j a_j(1 - a_j)
/// where g_e = grad_beta L^e(a.b, theta_e). With the Mean aggregator this is the
/// plain environment-averaged objective.
inline FilmEval film_objective(const ProblemModel& model, const FilmParams& params,
                               const Penalties& pen, const Aggregator& agg,
                               unsigned wrt = WrtNone) {
    const std::size_t E = model.size();
    const Vector beta = params.beta();
    const Vector a2 = params.a.cwiseProduct(params.a);
    const bool need_pen = pen.lambda1 != 0.0;
    const Need need = wrt == WrtNone ? (need_pen ? Need::Gradient : Need::Value)
                                     : (need_pen ? Need::Curvature : Need::Gradient);

    std::vector<LossPoint> pts;
    pts.reserve(E);
    std::vector<double> losses(E), moments(E, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
        pts.push_back(model[e].at(beta, params.theta[static_cast<Eigen::Index>(e)], need));
        losses[e] = pts.back().loss;
        if (need_pen) moments[e] = a2.dot(pts.back().grad.cwiseAbs2());
    }
    const auto L = agg.apply(losses);
    const auto P = agg.apply(moments);

    FilmEval out;
    out.value = L.value + pen.lambda1 * P.value + pen.lambda2 * bimodality_penalty(params.a);
    if (wrt == WrtNone) return out;

    const auto p = static_cast<Eigen::Index>(model.p());
    if (wrt & WrtA) out.grad_a = pen.lambda2 * (1.0 - 2.0 * params.a.array()).matrix();
    if (wrt & WrtB) out.grad_b = Vector::Zero(p);
    if (wrt & WrtTheta) out.grad_theta = Vector::Zero(static_cast<Eigen::Index>(E));

    for (std::size_t e = 0; e < E; ++e) {
        const auto ei = static_cast<Eigen::Index>(e);
        const double wl = L.weights[ei];
        const double wp = need_pen ? pen.lambda1 * P.weights[ei] : 0.0;
        if (wl == 0.0 && wp == 0.0) continue;
        const LossPoint& pt = pts[e];
        Vector hu;
        Vector u;
        if (wp != 0.0) {
            u = a2.cwiseProduct(pt.grad);
            if (wrt & (WrtA | WrtB)) hu = model[e].hess_times(pt, u);
        }
        if (wrt & WrtB) {
            out.grad_b += wl * params.a.cwiseProduct(pt.grad);
            if (wp != 0.0) out.grad_b += 2.0 * wp * params.a.cwiseProduct(hu);
        }
        if (wrt & WrtA) {
            out.grad_a += wl * params.b.cwiseProduct(pt.grad);
            if (wp != 0.0) {
                out.grad_a += 2.0 * wp * params.a.cwiseProduct(pt.grad.cwiseAbs2());
                out.grad_a += 2.0 * wp * params.b.cwiseProduct(hu);
            }
        }
        if (wrt & WrtTheta) {
            double g = wl * pt.grad_theta;
            if (wp != 0.0) g += 2.0 * wp * u.dot(pt.cross);
            out.grad_theta[ei] = g;
        }
    }
    return out;
}

/// Frozen quantities of the surrogate: (b_k, theta_k, beta_k) and the squared
/// per-environment gradients at beta_k, computed once per outer iteration.
struct SurrogateAnchor {
    Vector b;
    Vector theta;
    Vector beta;
    Matrix sq_grads;  // E x p, entry (e, j) = (grad_j L^e(beta_k, theta_k^e))^2
};

inline SurrogateAnchor make_anchor(const ProblemModel& model, const Vector& b, const Vector& theta,
                                   const Vector& beta) {
    require(static_cast<std::size_t>(b.size()) == model.p() &&
                static_cast<std::size_t>(beta.size()) == model.p(),
            "anchor b/beta must have length p = " + std::to_string(model.p()));
    require(static_cast<std::size_t>(theta.size()) == model.size(),
            "anchor theta must have one entry per environment");
    SurrogateAnchor anc{b, theta, beta, Matrix(model.size(), model.p())};
    for (std::size_t e = 0; e < model.size(); ++e) {
        const auto g = model[e].at(beta, theta[static_cast<Eigen::Index>(e)], Need::Gradient).grad;
        anc.sq_grads.row(static_cast<Eigen::Index>(e)) = g.cwiseAbs2().transpose();
    }
    return anc;
}

struct SurrogateEval {
    double value = 0.0;
    Vector grad;  // in a
};

/// Quadratic surrogate in a with the moment penalty frozen at the anchor:
///   Psi_e(L^e(a.b_k, theta_k^e)) + lambda1 Psi_e(sum_j a_j^2 G_ej) + lambda2 sum_j a_j(1 - a_j)
inline SurrogateEval film_surrogate(const ProblemModel& model, const Vector& a,
                                    const SurrogateAnchor& anc, const Penalties& pen,
                                    const Aggregator& agg, bool with_grad = false) {
    require(static_cast<std::size_t>(a.size()) == model.p(),
            "a has length " + std::to_string(a.size()) + ", expected p = " + std::to_string(model.p()));
    const std::size_t E = model.size();
    const Vector beta = a.cwiseProduct(anc.b);
    const Vector a2 = a.cwiseProduct(a);
    std::vector<LossPoint> pts;
    pts.reserve(E);
    std::vector<double> losses(E), moments(E);
    for (std::size_t e = 0; e < E; ++e) {
        const auto ei = static_cast<Eigen::Index>(e);
        pts.push_back(model[e].at(beta, anc.theta[ei], with_grad ? Need::Gradient : Need::Value));
        losses[e] = pts.back().loss;
        moments[e] = anc.sq_grads.row(ei).dot(a2);
    }
    const auto L = agg.apply(losses);
    const auto P = agg.apply(moments);
    SurrogateEval out;
    out.value = L.value + pen.lambda1 * P.value + pen.lambda2 * bimodality_penalty(a);
    if (!with_grad) return out;
    out.grad = pen.lambda2 * (1.0 - 2.0 * a.array()).matrix();
    for (std::size_t e = 0; e < E; ++e) {
        const auto ei = static_cast<Eigen::Index>(e);
        if (L.weights[ei] != 0.0) out.grad += L.weights[ei] * anc.b.cwiseProduct(pts[e].grad);
        if (P.weights[ei] != 0.0 && pen.lambda1 != 0.0)
            out.grad += (2.0 * pen.lambda1 * P.weights[ei]) *
                        a.cwiseProduct(anc.sq_grads.row(ei).transpose());
    }
    return out;
}

// --- Convenience forms on raw data (row-wise evaluation) -------------------

inline double q_loss(const MultiEnvData& data, LinkFamily link, const FilmParams& params,
                     const Penalties& pen) {
    params.validate(data.p(), data.size());
    pen.validate();
    return film_objective(ProblemModel(data, link, EvalMode::Direct), params, pen, Aggregator::mean())
        .value;
}

inline double q_robust(const MultiEnvData& data, LinkFamily link, const FilmParams& params,
                       const Penalties& pen, const Aggregator& agg) {
    params.validate(data.p(), data.size());
    pen.validate();
    return film_objective(ProblemModel(data, link, EvalMode::Direct), params, pen, agg).value;
}

inline double q_bar_robust(const MultiEnvData& data, LinkFamily link, const Vector& a,
                           const SurrogateAnchor& anc, const Penalties& pen, const Aggregator& agg) {
    require((a.array() >= 0.0).all() && (a.array() <= 1.0).all(), "a must lie in [0, 1]^p");
    pen.validate();
    return film_surrogate(ProblemModel(data, link, EvalMode::Direct), a, anc, pen, agg).value;
}

inline double q_bar(const MultiEnvData& data, LinkFamily link, const Vector& a,
                    const SurrogateAnchor& anc, const Penalties& pen) {
    return q_bar_robust(data, link, a, anc, pen, Aggregator::mean());
}

// Anchor built from raw data.
inline SurrogateAnchor make_anchor(const MultiEnvData& data, LinkFamily link, const Vector& b,
                                   const Vector& theta, const Vector& beta) {
    return make_anchor(ProblemModel(data, link, EvalMode::Direct), b, theta, beta);
}

// --- EILLS ----------------------------------------------------------------

struct EillsEval {
    double value = 0.0;
    Vector grad;  // in beta, zero off the support
};

/// Subset objective with zero intercepts:
///   mean_e L^e(beta, 0) + lambda1 mean_e sum_{j in S} (grad_j L^e(beta, 0))^2 + lambda2 |S|
inline EillsEval eills_eval(const ProblemModel& model, const Vector& beta, const IndexSet& support,
                            const Penalties& pen, bool with_grad = false) {
    const std::size_t p = model.p();
    require(static_cast<std::size_t>(beta.size()) == p,
            "beta has length " + std::to_string(beta.size()) + ", expected p = " + std::to_string(p));
    check_index_set(support, p, "support");
    Vector mask = Vector::Zero(static_cast<Eigen::Index>(p));
    for (auto j : support) mask[static_cast<Eigen::Index>(j)] = 1.0;
    for (std::size_t j = 0; j < p; ++j)
        require(beta[static_cast<Eigen::Index>(j)] == 0.0 || mask[static_cast<Eigen::Index>(j)] == 1.0,
                "beta is nonzero at index " + std::to_string(j) + " outside the declared support");

    const double E = static_cast<double>(model.size());
    const bool need_pen = pen.lambda1 != 0.0 && !support.empty();
    EillsEval out;
    double loss = 0.0, mom = 0.0;
    if (with_grad) out.grad = Vector::Zero(static_cast<Eigen::Index>(p));
    for (std::size_t e = 0; e < model.size(); ++e) {
        const Need need = with_grad && need_pen ? Need::Curvature
                          : (with_grad || need_pen) ? Need::Gradient
                                                    : Need::Value;
        const auto pt = model[e].at(beta, 0.0, need);
        loss += pt.loss;
        if (need_pen) {
            const Vector mg = mask.cwiseProduct(pt.grad);
            mom += mg.squaredNorm();
            if (with_grad) out.grad += 2.0 * pen.lambda1 * model[e].hess_times(pt, mg);
        }
        if (with_grad) out.grad += pt.grad;
    }
    out.value = loss / E + pen.lambda1 * mom / E + pen.lambda2 * static_cast<double>(support.size());
    if (with_grad) out.grad = mask.cwiseProduct(out.grad) / E;
    return out;
}

inline double eills_objective(const MultiEnvData& data, LinkFamily link, const Vector& beta,
                              const IndexSet& support, const Penalties& pen) {
    pen.validate();
    return eills_eval(ProblemModel(data, link, EvalMode::Direct), beta, support, pen).value;
}

// --- CoCo -----------------------------------------------------------------

struct CocoEval {
    double value = 0.0;
    Vector grad;
};

inline constexpr double kCocoNormFloor = 1e-12;

/// mean_e || bt (.) grad L^e(b, 0) ||_2 with bt_j = 1 on J and b_j elsewhere.
inline CocoEval coco_eval(const ProblemModel& model, const Vector& b, const IndexSet& exogenous,
                          bool with_grad = false) {
    const std::size_t p = model.p();
    require(static_cast<std::size_t>(b.size()) == p,
            "b has length " + std::to_string(b.size()) + ", expected p = " + std::to_string(p));
    check_index_set(exogenous, p, "exogenous set J");
    Vector bt = b;
    Vector free_mask = Vector::Ones(static_cast<Eigen::Index>(p));
    for (auto j : exogenous) {
        bt[static_cast<Eigen::Index>(j)] = 1.0;
        free_mask[static_cast<Eigen::Index>(j)] = 0.0;
    }
    const double E = static_cast<double>(model.size());
    CocoEval out;
    if (with_grad) out.grad = Vector::Zero(static_cast<Eigen::Index>(p));
    double acc = 0.0;
    for (std::size_t e = 0; e < model.size(); ++e) {
        const auto pt = model[e].at(b, 0.0, with_grad ? Need::Curvature : Need::Gradient);
        const Vector v = bt.cwiseProduct(pt.grad);
        const double r = v.norm();
        acc += r;
        if (with_grad && r >= kCocoNormFloor) {
            Vector g = free_mask.cwiseProduct(v).cwiseProduct(pt.grad);
            g += model[e].hess_times(pt, bt.cwiseProduct(v));
            out.grad += g / r;
        }
    }
    out.value = acc / E;
    if (with_grad) out.grad /= E;
    return out;
}

inline double coco_objective(const MultiEnvData& data, LinkFamily link, const Vector& b,
                             const IndexSet& exogenous) {
    return coco_eval(ProblemModel(data, link, EvalMode::Direct), b, exogenous).value;
}

}  // namespace invglm

#endif
