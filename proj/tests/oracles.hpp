// Straightforward scalar-loop reference implementations used as test oracles.
// Nothing here calls into the library's evaluation code.
#ifndef INVGLM_TESTS_ORACLES_HPP
#define INVGLM_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "invglm/invglm.hpp"

namespace oracle {

using invglm::Vector;
using invglm::Matrix;

inline double psi(bool logit, double eta) { return logit ? std::log1p(std::exp(eta)) : 0.5 * eta * eta; }
inline double mu(bool logit, double eta) { return logit ? 1.0 / (1.0 + std::exp(-eta)) : eta; }

struct Env {
    std::vector<std::vector<double>> x;  // rows
    std::vector<double> y;
};

inline std::vector<Env> unpack(const invglm::MultiEnvData& data) {
    std::vector<Env> out;
    for (const auto& e : data) {
        Env env;
        for (Eigen::Index i = 0; i < e.x.rows(); ++i) {
            std::vector<double> row;
            for (Eigen::Index j = 0; j < e.x.cols(); ++j) row.push_back(e.x(i, j));
            env.x.push_back(row);
            env.y.push_back(e.y[i]);
        }
        out.push_back(env);
    }
    return out;
}

inline double eta_of(const std::vector<double>& row, const std::vector<double>& beta, double theta) {
    double s = theta;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * beta[j];
    return s;
}

inline double loss(bool logit, const Env& env, const std::vector<double>& beta, double theta) {
    double s = 0.0;
    for (std::size_t i = 0; i < env.y.size(); ++i) {
        const double eta = eta_of(env.x[i], beta, theta);
        s += psi(logit, eta) - env.y[i] * eta;
    }
    return s / static_cast<double>(env.y.size());
}

inline std::vector<double> grad(bool logit, const Env& env, const std::vector<double>& beta, double theta) {
    std::vector<double> g(beta.size(), 0.0);
    for (std::size_t i = 0; i < env.y.size(); ++i) {
        const double r = mu(logit, eta_of(env.x[i], beta, theta)) - env.y[i];
        for (std::size_t j = 0; j < beta.size(); ++j) g[j] += env.x[i][j] * r;
    }
    for (auto& v : g) v /= static_cast<double>(env.y.size());
    return g;
}

enum class Agg { Mean, Median, Trimmed };

inline double aggregate(std::vector<double> v, Agg kind, double trim = 0.0) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    if (kind == Agg::Median) return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
    std::size_t k = 0;
    if (kind == Agg::Trimmed) k = static_cast<std::size_t>(std::floor(trim * static_cast<double>(m)));
    double s = 0.0;
    for (std::size_t i = k; i < m - k; ++i) s += v[i];
    return s / static_cast<double>(m - 2 * k);
}

inline std::vector<double> std_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline double q(bool logit, const std::vector<Env>& envs, const Vector& a, const Vector& b, const Vector& theta,
                double l1, double l2, Agg agg = Agg::Mean, double trim = 0.0) {
    std::vector<double> beta(static_cast<std::size_t>(a.size()));
    for (std::size_t j = 0; j < beta.size(); ++j) beta[j] = a[static_cast<Eigen::Index>(j)] * b[static_cast<Eigen::Index>(j)];
    std::vector<double> losses, moments;
    for (std::size_t e = 0; e < envs.size(); ++e) {
        const double th = theta[static_cast<Eigen::Index>(e)];
        losses.push_back(loss(logit, envs[e], beta, th));
        const auto g = grad(logit, envs[e], beta, th);
        double m = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double aj = a[static_cast<Eigen::Index>(j)];
            m += aj * aj * g[j] * g[j];
        }
        moments.push_back(m);
    }
    double bim = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) bim += a[j] * (1.0 - a[j]);
    return aggregate(losses, agg, trim) + l1 * aggregate(moments, agg, trim) + l2 * bim;
}

// Surrogate: pooled loss at a (.) b_k with theta_k, moment term frozen at beta_k.
inline double q_bar(bool logit, const std::vector<Env>& envs, const Vector& a, const Vector& bk,
                    const Vector& thetak, const Vector& betak, double l1, double l2, Agg agg = Agg::Mean,
                    double trim = 0.0) {
    std::vector<double> beta(static_cast<std::size_t>(a.size()));
    for (std::size_t j = 0; j < beta.size(); ++j) beta[j] = a[static_cast<Eigen::Index>(j)] * bk[static_cast<Eigen::Index>(j)];
    std::vector<double> losses, moments;
    for (std::size_t e = 0; e < envs.size(); ++e) {
        const double th = thetak[static_cast<Eigen::Index>(e)];
        losses.push_back(loss(logit, envs[e], beta, th));
        const auto g = grad(logit, envs[e], std_vec(betak), th);
        double m = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double aj = a[static_cast<Eigen::Index>(j)];
            m += aj * aj * g[j] * g[j];
        }
        moments.push_back(m);
    }
    double bim = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) bim += a[j] * (1.0 - a[j]);
    return aggregate(losses, agg, trim) + l1 * aggregate(moments, agg, trim) + l2 * bim;
}

inline double eills(bool logit, const std::vector<Env>& envs, const Vector& beta, const std::vector<std::size_t>& S,
                    double l1, double l2) {
    double lsum = 0.0, msum = 0.0;
    for (const auto& env : envs) {
        lsum += loss(logit, env, std_vec(beta), 0.0);
        const auto g = grad(logit, env, std_vec(beta), 0.0);
        for (auto j : S) msum += g[j] * g[j];
    }
    const double E = static_cast<double>(envs.size());
    return lsum / E + l1 * msum / E + l2 * static_cast<double>(S.size());
}

inline double coco(bool logit, const std::vector<Env>& envs, const Vector& b, const std::vector<std::size_t>& J) {
    double s = 0.0;
    for (const auto& env : envs) {
        const auto g = grad(logit, env, std_vec(b), 0.0);
        double n2 = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const bool pinned = std::find(J.begin(), J.end(), j) != J.end();
            const double w = pinned ? 1.0 : b[static_cast<Eigen::Index>(j)];
            n2 += w * w * g[j] * g[j];
        }
        s += std::sqrt(n2);
    }
    return s / static_cast<double>(envs.size());
}

// Central differences of f at x.
inline Vector fd_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        Vector xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        g[i] = (f(xp) - f(xm)) / (2.0 * step);
    }
    return g;
}

// Sup-norm discrepancy relative to the gradient scale (floored at 1).
inline double rel_err(const Vector& analytic, const Vector& numeric) {
    const double scale = std::max({1.0, analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff()});
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// Random multi-environment data; logistic outcomes are Bernoulli draws.
inline invglm::MultiEnvData random_data(std::mt19937_64& rng, bool logit, std::size_t E, std::size_t n,
                                        std::size_t p) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::vector<invglm::EnvironmentData> envs;
    for (std::size_t e = 0; e < E; ++e) {
        Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
        Vector y(static_cast<Eigen::Index>(n));
        const double shift = 0.3 * static_cast<double>(e);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = N(rng) + shift;
            const double eta = x.row(i).sum() * 0.5 + N(rng);
            y[i] = logit ? (std::uniform_real_distribution<double>(0, 1)(rng) < mu(true, eta) ? 1.0 : 0.0) : eta;
        }
        envs.emplace_back("e" + std::to_string(e + 1), std::move(x), std::move(y));
    }
    return invglm::MultiEnvData(std::move(envs));
}

inline Vector random_vec(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
    std::normal_distribution<double> N(0.0, sd);
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = N(rng);
    return v;
}

inline Vector random_unit(std::mt19937_64& rng, std::size_t n, double lo = 0.05, double hi = 0.95) {
    std::uniform_real_distribution<double> U(lo, hi);
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = U(rng);
    return v;
}

// Minimizer of a function known to be an exact quadratic, recovered from
// objective values alone: f(0), f(e_i), f(-e_i) and f(e_i + e_j) determine the
// Hessian and gradient at 0. Returns (minimum value, minimizer).
inline std::pair<double, Vector> quadratic_min(const std::function<double(const Vector&)>& f, std::size_t k) {
    const auto n = static_cast<Eigen::Index>(k);
    const Vector zero = Vector::Zero(n);
    if (k == 0) return {f(zero), zero};
    const double f0 = f(zero);
    Vector fp(n), fm(n), g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector ei = zero;
        ei[i] = 1.0;
        fp[i] = f(ei);
        fm[i] = f(-ei);
        g[i] = 0.5 * (fp[i] - fm[i]);
    }
    Matrix H(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        H(i, i) = fp[i] + fm[i] - 2.0 * f0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            Vector eij = zero;
            eij[i] = eij[j] = 1.0;
            H(i, j) = H(j, i) = f(eij) - fp[i] - fp[j] + f0;
        }
    }
    const Vector x = H.fullPivLu().solve(-g);
    return {f(x), x};
}

}  // namespace oracle

#endif
