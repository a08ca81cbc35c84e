#ifndef INVGLM_GLM_CORE_HPP
#define INVGLM_GLM_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "link.hpp"

namespace invglm {

namespace detail {

inline void check_beta(const EnvironmentData& env, const Vector& beta) {
    require(static_cast<std::size_t>(beta.size()) == env.p(),
            "beta has length " + std::to_string(beta.size()) + " but environment '" + env.env_id +
                "' has p = " + std::to_string(env.p()));
}

}  // namespace detail

// Per-environment negative log-likelihood, averaged over rows:
//   (1/n) sum_i psi(x_i'beta + theta) - y_i (x_i'beta + theta)
inline double nll(const EnvironmentData& env, LinkFamily link, const Vector& beta, double theta) {
    detail::check_beta(env, beta);
    const Vector eta = (env.x * beta).array() + theta;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) acc += link.psi(eta[i]) - env.y[i] * eta[i];
    return acc / static_cast<double>(env.n());
}

inline Vector nll_grad_beta(const EnvironmentData& env, LinkFamily link, const Vector& beta,
                            double theta) {
    detail::check_beta(env, beta);
    Vector r = (env.x * beta).array() + theta;
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = link.mean(r[i]) - env.y[i];
    return env.x.transpose() * r / static_cast<double>(env.n());
}

inline double nll_grad_theta(const EnvironmentData& env, LinkFamily link, const Vector& beta,
                             double theta) {
    detail::check_beta(env, beta);
    const Vector eta = (env.x * beta).array() + theta;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) acc += link.mean(eta[i]) - env.y[i];
    return acc / static_cast<double>(env.n());
}

/// Local first- and second-order information of one environment's loss.
///
/// `grad` is the gradient in beta, `grad_theta` the derivative in the
/// intercept. `cross` is d(grad)/d(theta) = X'w/n and `theta_curv` is
/// d(grad_theta)/d(theta) = mean(w), where w = psi''(eta).
struct LossPoint {
    double loss = 0.0;
    Vector grad;
    double grad_theta = 0.0;
    Vector cross;
    double theta_curv = 0.0;
    Vector weights;  // psi''(eta) per row; empty for the identity link
};

enum class Need { Value, Gradient, Curvature };

// Quadratic evaluates identity-link losses from sufficient statistics; Direct
// always makes a pass over the rows. Logit losses are always row-wise.
enum class EvalMode { Quadratic, Direct };

/// Loss evaluator for one environment, used inside the optimizers.
///
/// For the identity link the loss is quadratic and is evaluated from the
/// sufficient statistics X'X/n, X'y/n, colMeans(X) and mean(y), so every
/// evaluation costs O(p^2) regardless of n.
class EnvModel {
public:
    EnvModel(const EnvironmentData& env, LinkFamily link, EvalMode mode = EvalMode::Quadratic)
        : link_(link), n_(static_cast<double>(env.n())),
          quadratic_(link.is_identity() && mode == EvalMode::Quadratic) {
        env.check_outcomes(link);
        if (quadratic_) {
            gram_ = env.x.transpose() * env.x / n_;
            xty_ = env.x.transpose() * env.y / n_;
            colmean_ = env.x.colwise().mean().transpose();
            ymean_ = env.y.mean();
        } else {
            x_ = env.x;
            y_ = env.y;
            colmean_ = env.x.colwise().mean().transpose();
        }
        p_ = env.p();
    }

    std::size_t p() const { return p_; }
    LinkFamily link() const { return link_; }

    LossPoint at(const Vector& beta, double theta, Need need = Need::Curvature) const {
        LossPoint pt;
        if (quadratic_) {
            const Vector gb = gram_ * beta;
            const double mb = colmean_.dot(beta);
            pt.loss = 0.5 * beta.dot(gb) + theta * mb + 0.5 * theta * theta - xty_.dot(beta) -
                      theta * ymean_;
            if (need == Need::Value) return pt;
            pt.grad = gb + theta * colmean_ - xty_;
            pt.grad_theta = mb + theta - ymean_;
            if (need == Need::Gradient) return pt;
            pt.cross = colmean_;
            pt.theta_curv = 1.0;
            return pt;
        }
        const Eigen::Index n = x_.rows();
        Vector eta = x_ * beta;
        eta.array() += theta;
        double loss = 0.0;
        if (need == Need::Value) {
            for (Eigen::Index i = 0; i < n; ++i) loss += link_.psi(eta[i]) - y_[i] * eta[i];
            pt.loss = loss / n_;
            return pt;
        }
        Vector resid(n);
        if (need == Need::Curvature) pt.weights.resize(n);
        double rsum = 0.0, wsum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto [psi, mu] = link_.psi_and_mean(eta[i]);
            loss += psi - y_[i] * eta[i];
            resid[i] = mu - y_[i];
            rsum += resid[i];
            if (need == Need::Curvature) {
                pt.weights[i] = link_.is_identity() ? 1.0 : mu * (1.0 - mu);
                wsum += pt.weights[i];
            }
        }
        pt.loss = loss / n_;
        pt.grad = x_.transpose() * resid / n_;
        pt.grad_theta = rsum / n_;
        if (need == Need::Gradient) return pt;
        pt.cross = x_.transpose() * pt.weights / n_;
        pt.theta_curv = wsum / n_;
        return pt;
    }

    // Hessian of the loss in beta applied to v, at the point that produced `pt`.
    Vector hess_times(const LossPoint& pt, const Vector& v) const {
        if (quadratic_) return gram_ * v;
        Vector xv = x_ * v;
        xv.array() *= pt.weights.array();
        return x_.transpose() * xv / n_;
    }

    // Full Hessian in beta (p x p).
    Matrix hessian(const LossPoint& pt) const {
        if (quadratic_) return gram_;
        return x_.transpose() * pt.weights.asDiagonal() * x_ / n_;
    }

    // d(cross)/d(theta) = X'psi'''/n and d(theta_curv)/d(theta) = mean(psi''').
    std::pair<Vector, double> theta_third(const Vector& beta, double theta) const {
        if (link_.is_identity()) return {Vector::Zero(static_cast<Eigen::Index>(p_)), 0.0};
        Vector eta = x_ * beta;
        eta.array() += theta;
        Vector t(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) t[i] = link_.variance_slope(eta[i]);
        return {x_.transpose() * t / n_, t.mean()};
    }

private:
    LinkFamily link_;
    double n_;
    bool quadratic_;
    std::size_t p_ = 0;
    Matrix gram_;
    Vector xty_;
    Vector colmean_;
    double ymean_ = 0.0;
    Matrix x_;
    Vector y_;
};

/// All environments of a problem, prepared for repeated evaluation.
class ProblemModel {
public:
    ProblemModel(const MultiEnvData& data, LinkFamily link, EvalMode mode = EvalMode::Quadratic)
        : link_(link), p_(data.p()) {
        envs_.reserve(data.size());
        for (const auto& e : data) {
            envs_.emplace_back(e, link, mode);
            ids_.push_back(e.env_id);
        }
    }

    std::size_t size() const { return envs_.size(); }
    std::size_t p() const { return p_; }
    LinkFamily link() const { return link_; }
    const EnvModel& operator[](std::size_t e) const { return envs_[e]; }
    const std::vector<std::string>& env_ids() const { return ids_; }

private:
    LinkFamily link_;
    std::size_t p_;
    std::vector<EnvModel> envs_;
    std::vector<std::string> ids_;
};

}  // namespace invglm

#endif
