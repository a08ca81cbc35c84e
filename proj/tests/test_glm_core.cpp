#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace invglm;

namespace {

EnvironmentData tiny_env() {
    Matrix x(4, 2);
    x << 1, 0, 0, 1, 1, 1, 2, -1;
    Vector y(4);
    y << 1, 0, 1, 0;
    return EnvironmentData("e", x, y);
}

}  // namespace

TEST(Link, LogitPsiIsOverflowSafe) {
    const auto logit = LinkFamily::logit();
    for (double eta : {-1e4, -700.0, -30.0, 0.0, 30.0, 700.0, 1e4}) {
        EXPECT_TRUE(std::isfinite(logit.psi(eta))) << eta;
        EXPECT_TRUE(std::isfinite(logit.mean(eta))) << eta;
        EXPECT_TRUE(std::isfinite(logit.variance(eta))) << eta;
    }
    EXPECT_DOUBLE_EQ(logit.psi(1e4), 1e4);
    EXPECT_EQ(logit.psi(-1e4), 0.0);
    EXPECT_NEAR(logit.psi(0.0), std::log(2.0), 1e-15);
}

TEST(Link, PsiAndMeanAgreeWithSeparateCalls) {
    for (auto link : {LinkFamily::identity(), LinkFamily::logit()}) {
        for (double eta : {-40.0, -3.0, -0.1, 0.0, 0.7, 5.0, 60.0}) {
            const auto [p, m] = link.psi_and_mean(eta);
            EXPECT_NEAR(p, link.psi(eta), 1e-15 * std::max(1.0, std::abs(p)));
            EXPECT_NEAR(m, link.mean(eta), 1e-16);
        }
    }
}

TEST(Link, DerivativesMatchFiniteDifferences) {
    for (auto link : {LinkFamily::identity(), LinkFamily::logit()}) {
        for (double eta : {-4.0, -0.5, 0.3, 2.5}) {
            const double h = 1e-5;
            EXPECT_NEAR(link.mean(eta), (link.psi(eta + h) - link.psi(eta - h)) / (2 * h), 1e-9);
            EXPECT_NEAR(link.variance(eta), (link.mean(eta + h) - link.mean(eta - h)) / (2 * h), 1e-9);
            EXPECT_NEAR(link.variance_slope(eta), (link.variance(eta + h) - link.variance(eta - h)) / (2 * h), 1e-9);
        }
    }
}

TEST(Link, ParseNames) {
    EXPECT_EQ(parse_link("linear"), LinkFamily::identity());
    EXPECT_EQ(parse_link("logit"), LinkFamily::logit());
    EXPECT_THROW(parse_link("probit"), ContractError);
}

TEST(Nll, IdentityAtZeroIsHalfMeanSquare) {
    Matrix x = Matrix::Ones(3, 1);
    Vector y(3);
    y << 1, 2, 3;
    EnvironmentData env("e", x, y);
    EXPECT_NEAR(nll(env, LinkFamily::identity(), Vector::Zero(1), 0.0), 0.0, 1e-15);
    // psi(eta) - y eta at eta = 1: 0.5 - y
    EXPECT_NEAR(nll(env, LinkFamily::identity(), Vector::Ones(1), 0.0), 0.5 - 2.0, 1e-15);
}

TEST(Nll, LogitMatchesHandValues) {
    const auto env = tiny_env();
    Vector beta(2);
    beta << 0.5, -1.0;
    // eta = 0.5, -1.0, -0.5, 2.0
    const double expect = (std::log1p(std::exp(0.5)) - 0.5 + std::log1p(std::exp(-1.0)) +
                           std::log1p(std::exp(-0.5)) + 0.5 + std::log1p(std::exp(2.0))) /
                          4.0;
    EXPECT_NEAR(nll(env, LinkFamily::logit(), beta, 0.0), expect, 1e-15);
}

TEST(Nll, ContractErrors) {
    const auto env = tiny_env();
    EXPECT_THROW(nll(env, LinkFamily::logit(), Vector::Zero(3), 0.0), ContractError);
    Vector bad_y(4);
    bad_y << 0, 1, 0.5, 1;
    EXPECT_THROW(EnvironmentData("e", env.x, bad_y).check_outcomes(LinkFamily::logit()), ContractError);
    Matrix xn = env.x;
    xn(0, 0) = std::nan("");
    EXPECT_THROW(EnvironmentData("e", xn, env.y), ContractError);
}

TEST(Nll, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(11);
    for (bool logit : {false, true}) {
        const LinkFamily link = logit ? LinkFamily::logit() : LinkFamily::identity();
        for (int rep = 0; rep < 25; ++rep) {
            const auto data = oracle::random_data(rng, logit, 1, 15, 4);
            const auto& env = data[0];
            const Vector beta = oracle::random_vec(rng, 4);
            const double theta = oracle::random_vec(rng, 1)[0];
            const auto fb = [&](const Vector& b) { return nll(env, link, b, theta); };
            EXPECT_LE(oracle::rel_err(nll_grad_beta(env, link, beta, theta), oracle::fd_grad(fb, beta)), 1e-5);
            const auto ft = [&](const Vector& t) { return nll(env, link, beta, t[0]); };
            Vector t0(1);
            t0 << theta;
            Vector gt(1);
            gt << nll_grad_theta(env, link, beta, theta);
            EXPECT_LE(oracle::rel_err(gt, oracle::fd_grad(ft, t0)), 1e-5);
        }
    }
}

TEST(Nll, ConvexAlongLines) {
    std::mt19937_64 rng(5);
    for (bool logit : {false, true}) {
        const LinkFamily link = logit ? LinkFamily::logit() : LinkFamily::identity();
        const auto data = oracle::random_data(rng, logit, 1, 30, 3);
        for (int rep = 0; rep < 20; ++rep) {
            const Vector b0 = oracle::random_vec(rng, 3, 2.0), b1 = oracle::random_vec(rng, 3, 2.0);
            const auto f = [&](double t) { return nll(data[0], link, b0 + t * (b1 - b0), 0.3); };
            for (double t = -1.0; t <= 2.0; t += 0.25)
                EXPECT_GE(f(t + 0.1) - 2 * f(t) + f(t - 0.1), -1e-10);
        }
    }
}

TEST(EnvModel, AgreesWithScalarLoops) {
    std::mt19937_64 rng(3);
    for (bool logit : {false, true}) {
        const LinkFamily link = logit ? LinkFamily::logit() : LinkFamily::identity();
        for (int rep = 0; rep < 10; ++rep) {
            const auto data = oracle::random_data(rng, logit, 1, 9, 3);
            const auto env = oracle::unpack(data)[0];
            const Vector beta = oracle::random_vec(rng, 3);
            const double theta = 0.4;
            for (auto mode : {EvalMode::Quadratic, EvalMode::Direct}) {
                const EnvModel m(data[0], link, mode);
                const auto pt = m.at(beta, theta);
                EXPECT_LE(oracle::rel_diff(pt.loss, oracle::loss(logit, env, oracle::std_vec(beta), theta)), 1e-13);
                const auto g = oracle::grad(logit, env, oracle::std_vec(beta), theta);
                for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(pt.grad[static_cast<Eigen::Index>(j)], g[j], 1e-12);
                // Hessian and cross terms against differences of the gradient
                const auto gfun = [&](const Vector& b, double t) { return m.at(b, t, Need::Gradient); };
                const Matrix H = m.hessian(pt);
                for (Eigen::Index j = 0; j < 3; ++j) {
                    Vector bp = beta, bm = beta;
                    bp[j] += 1e-6;
                    bm[j] -= 1e-6;
                    const Vector col = (gfun(bp, theta).grad - gfun(bm, theta).grad) / 2e-6;
                    EXPECT_LE((H.col(j) - col).cwiseAbs().maxCoeff(), 1e-6);
                }
                const Vector cross = (gfun(beta, theta + 1e-6).grad - gfun(beta, theta - 1e-6).grad) / 2e-6;
                EXPECT_LE((pt.cross - cross).cwiseAbs().maxCoeff(), 1e-6);
                const double tc = (gfun(beta, theta + 1e-6).grad_theta - gfun(beta, theta - 1e-6).grad_theta) / 2e-6;
                EXPECT_NEAR(pt.theta_curv, tc, 1e-6);
                const Vector v = oracle::random_vec(rng, 3);
                EXPECT_LE((m.hess_times(pt, v) - H * v).cwiseAbs().maxCoeff(), 1e-12);
            }
        }
    }
}

TEST(EnvModel, ThetaThirdDerivatives) {
    std::mt19937_64 rng(8);
    const auto data = oracle::random_data(rng, true, 1, 20, 3);
    const EnvModel m(data[0], LinkFamily::logit());
    const Vector beta = oracle::random_vec(rng, 3);
    const auto [dcross, dcurv] = m.theta_third(beta, 0.2);
    const auto hi = m.at(beta, 0.2 + 1e-6), lo = m.at(beta, 0.2 - 1e-6);
    EXPECT_LE((dcross - (hi.cross - lo.cross) / 2e-6).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(dcurv, (hi.theta_curv - lo.theta_curv) / 2e-6, 1e-6);
}

TEST(MultiEnvData, SubsetAndColumns) {
    std::mt19937_64 rng(1);
    const auto data = oracle::random_data(rng, false, 3, 5, 4);
    EXPECT_EQ(data.n_total(), 15u);
    const auto sub = data.subset({"e3", "e1"});
    EXPECT_EQ(sub.env_ids(), (std::vector<std::string>{"e3", "e1"}));
    const auto cols = data.select_columns({1, 3});
    EXPECT_EQ(cols.feature_names(), (std::vector<std::string>{"x2", "x4"}));
    EXPECT_EQ(cols[0].x.col(1), data[0].x.col(3));
    EXPECT_THROW(data.subset({"nope"}), ContractError);
    EXPECT_THROW(data.select_columns({4}), ContractError);
    std::vector<EnvironmentData> dup{data[0], data[0]};
    EXPECT_THROW(MultiEnvData(std::move(dup)), ContractError);
}
