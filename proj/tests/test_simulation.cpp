#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace invglm;

namespace {

// O(n^2) pair counting with ties worth one half.
double auc_pairs(const Vector& s, const Vector& y) {
    double wins = 0.0, pairs = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (y[i] != 1.0) continue;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            if (y[j] != 0.0) continue;
            pairs += 1.0;
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return wins / pairs;
}

}  // namespace

TEST(Dgp, ShapesIdsAndDeterminism) {
    DgpSpec spec;
    spec.seed = 7;
    const auto data = generate_dataset(spec, {OutlierKind::PureNoise});
    EXPECT_EQ(data.env_ids(), (std::vector<std::string>{"env_1", "env_2", "env_3", "outlier_1"}));
    for (const auto& env : data) {
        EXPECT_EQ(env.n(), 500u);
        EXPECT_EQ(env.p(), 10u);
    }
    const auto again = generate_dataset(spec, {OutlierKind::PureNoise});
    for (std::size_t e = 0; e < data.size(); ++e) {
        EXPECT_EQ(data[e].x, again[e].x);
        EXPECT_EQ(data[e].y, again[e].y);
    }
    // environments are independent streams: dropping the outlier leaves inliers unchanged
    const auto plain = generate_dataset(spec);
    EXPECT_EQ(plain[1].x, data[1].x);
    spec.seed = 8;
    EXPECT_NE(generate_dataset(spec)[0].y, plain[0].y);
}

TEST(Dgp, TruthAndGammaGrid) {
    DgpSpec spec;
    EXPECT_EQ(spec.invariant_set(), (IndexSet{0, 1, 2}));
    const Vector b = spec.beta_star();
    EXPECT_EQ(b.head(3), (Vector(3) << 2, 3, 4).finished());
    EXPECT_EQ(b.tail(7), Vector::Zero(7));
    EXPECT_DOUBLE_EQ(spec.gamma_for(0), 2.0);
    EXPECT_DOUBLE_EQ(spec.gamma_for(1), 4.0);
    EXPECT_DOUBLE_EQ(spec.gamma_for(2), 6.0);
    spec.s = 4;
    EXPECT_THROW(spec.validate(), ContractError);
}

TEST(Dgp, LogisticOutcomesAreBinary) {
    DgpSpec spec;
    spec.link = LinkKind::Logit;
    spec.seed = 2;
    const auto data = generate_dataset(spec, {OutlierKind::FlippedEffects});
    data.check_outcomes(LinkFamily::logit());
    double ones = 0.0;
    for (const auto& env : data) ones += env.y.sum();
    EXPECT_GT(ones, 0.0);
    EXPECT_LT(ones, static_cast<double>(data.n_total()));
}

TEST(Dgp, SpuriousFeatureTracksTheOutcome) {
    // within an environment the spurious covariate correlates with the residual
    DgpSpec spec;
    spec.n_per_env = 20000;
    spec.seed = 3;
    const auto data = generate_dataset(spec);
    const auto& env = data[2];
    const Vector resid = env.y - env.x * spec.beta_star();
    const double cov = (env.x.col(3).array() * resid.array()).mean();
    EXPECT_GT(std::abs(cov), 0.5);
    // null covariates do not
    EXPECT_LT(std::abs((env.x.col(7).array() * resid.array()).mean()), 0.05);
}

TEST(Outliers, SchemesDiffer) {
    DgpSpec spec;
    spec.seed = 4;
    for (auto kind : {OutlierKind::PureNoise, OutlierKind::PermutedFeatures, OutlierKind::RotatedFeatures,
                      OutlierKind::FlippedEffects}) {
        const auto data = generate_dataset(spec, {kind});
        EXPECT_EQ(data.size(), 4u);
        EXPECT_EQ(data[3].env_id, "outlier_1");
        EXPECT_EQ(parse_outlier(outlier_name(kind)), kind);
    }
    EXPECT_THROW(parse_outlier("sideways"), ContractError);
}

TEST(Outliers, RotationIsOrthogonal) {
    Rng r(5);
    const Matrix q = random_rotation(6, r);
    EXPECT_LE((q.transpose() * q - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Metrics, ExactTruthAndAccuracy) {
    DgpSpec spec;
    FitResult r;
    r.beta_hat = spec.beta_star();
    r.selected_support = spec.invariant_set();
    auto m = evaluate(r, spec);
    EXPECT_EQ(m.estimation_error, 0.0);
    EXPECT_EQ(m.selection_accuracy, 1.0);
    r.selected_support = {0, 1, 2, 3};
    EXPECT_DOUBLE_EQ(evaluate(r, spec).selection_accuracy, 0.9);
    r.beta_hat[0] += 3.0;
    r.beta_hat[5] -= 4.0;
    EXPECT_DOUBLE_EQ(evaluate(r, spec).estimation_error, 5.0);
}

TEST(Metrics, AucMatchesPairCounting) {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 30; ++rep) {
        const Eigen::Index n = 10 + rep * 6;
        Vector s(n), y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            s[i] = std::round(oracle::random_vec(rng, 1)[0] * 3.0);  // plenty of ties
            y[i] = i % 3 == 0 ? 1.0 : 0.0;
        }
        EXPECT_DOUBLE_EQ(auc(s, y), auc_pairs(s, y));
    }
    Vector s(4), y(4);
    s << 1, 2, 3, 4;
    y << 0, 0, 1, 1;
    EXPECT_EQ(auc(s, y), 1.0);
    EXPECT_EQ(auc(-s, y), 0.0);
    EXPECT_THROW(auc(s, Vector::Zero(4)), ContractError);
}

TEST(Metrics, NullAucNearHalf) {
    std::mt19937_64 rng(7);
    const Eigen::Index n = 20000;
    Vector s = oracle::random_vec(rng, static_cast<std::size_t>(n)), y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = i % 2;
    EXPECT_NEAR(auc(s, y), 0.5, 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Metrics, TruthBeatsZeroOnHeldOutLogisticData) {
    DgpSpec spec;
    spec.link = LinkKind::Logit;
    spec.seed = 8;
    const auto data = generate_dataset(spec);
    const auto& env = data[0];
    const double with_truth = auc(env.x * spec.beta_star(), env.y);
    const double with_zero = auc(env.x * Vector::Zero(10), env.y);
    EXPECT_DOUBLE_EQ(with_zero, 0.5);
    EXPECT_GT(with_truth, with_zero);
}

TEST(Experiment, MedianOf) {
    EXPECT_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median_of({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_TRUE(std::isnan(median_of({})));
}

TEST(Experiment, SplitFollowsProtocol) {
    DgpSpec spec;
    spec.seed = 1;
    const auto split = protocol_split(generate_dataset(spec, {OutlierKind::RotatedFeatures}));
    EXPECT_EQ(split.train, (std::vector<std::string>{"env_1", "env_2", "outlier_1"}));
    EXPECT_EQ(split.val, (std::vector<std::string>{"env_3"}));
}

TEST(Experiment, IdenticalForAnyJobCount) {
    auto grid = sweep_grid("sweep-n", LinkKind::Identity);
    grid.resize(2);
    for (auto& pt : grid) pt.spec.p = 5;
    Protocol proto;
    proto.n_random_inits = 3;
    proto.lambda1_count = 2;
    const std::vector<Method> methods{Method::Oracle, Method::Pooled, Method::Film, Method::Eills};
    const auto one = run_experiment(grid, methods, 3, 42, proto, 1);
    const auto four = run_experiment(grid, methods, 3, 42, proto, 4);
    ASSERT_EQ(one.cells.size(), four.cells.size());
    for (std::size_t i = 0; i < one.cells.size(); ++i) {
        EXPECT_EQ(one.cells[i].median_error, four.cells[i].median_error);
        EXPECT_EQ(one.cells[i].median_accuracy, four.cells[i].median_accuracy);
        EXPECT_EQ(one.cells[i].n_replicates, 3u);
    }
    EXPECT_EQ(one.cells_failed, 0u);
}

TEST(Experiment, EillsSkippedForLogistic) {
    auto grid = sweep_grid("sweep-n", LinkKind::Logit);
    grid.resize(1);
    grid[0].spec.p = 4;
    grid[0].spec.n_per_env = 100;
    const auto t = run_experiment(grid, {Method::Pooled, Method::Eills}, 1, 3);
    EXPECT_EQ(t.cells.size(), 1u);
    EXPECT_EQ(find_cell(t, grid[0].label, Method::Eills), nullptr);
    EXPECT_NE(find_cell(t, grid[0].label, Method::Pooled), nullptr);
}

TEST(Experiment, Grids) {
    EXPECT_EQ(sweep_grid("sweep-n", LinkKind::Identity).size(), 5u);
    EXPECT_EQ(sweep_grid("sweep-p", LinkKind::Identity).back().spec.p, 20u);
    EXPECT_EQ(sweep_grid("sweep-E", LinkKind::Logit).front().spec.n_inlier_envs, 3u);
    EXPECT_EQ(sweep_grid("sweep-gamma", LinkKind::Identity)[2].spec.gamma_base, 6.0);
    EXPECT_THROW(sweep_grid("sweep-q", LinkKind::Identity), ContractError);
    const auto t1 = table1_grid();
    ASSERT_EQ(t1.size(), 8u);
    EXPECT_EQ(t1[0].label, "linear/pure-noise");
    EXPECT_EQ(t1[7].label, "logistic/flipped");
    for (Method m : all_methods()) EXPECT_EQ(parse_method(method_name(m)), m);
}

TEST(Bench, RowsPerPointAndMethod) {
    BenchSettings bs;
    bs.film.max_outer_iter = 5;
    const auto rows = run_bench({4, 5}, {Method::Eills, Method::Film}, 1, 9, bs);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.n_runs, 1u);
        EXPECT_GT(r.mean_seconds, 0.0);
    }
    bs.max_p = 4;
    const auto refused = run_bench({5}, {Method::Eills}, 1, 9, bs);
    EXPECT_EQ(refused[0].n_runs, 0u);
    EXPECT_FALSE(refused[0].note.empty());
}
