#ifndef INVGLM_RUNNER_HPP
#define INVGLM_RUNNER_HPP

#include <random>
#include <set>
#include <string>
#include <vector>

#include "estimators.hpp"
#include "io.hpp"

namespace invglm {

struct RunOutcome {
    FitResult result;
    std::uint64_t seed = 0;
};

namespace detail {

// Column means and standard deviations over the pooled rows of `train`.
inline std::pair<Vector, Vector> pooled_moments(const MultiEnvData& train) {
    const auto p = static_cast<Eigen::Index>(train.p());
    Vector sum = Vector::Zero(p), sq = Vector::Zero(p);
    double n = 0.0;
    for (const auto& env : train) {
        sum += env.x.colwise().sum().transpose();
        sq += env.x.array().square().colwise().sum().matrix().transpose();
        n += static_cast<double>(env.n());
    }
    const Vector mean = sum / n;
    Vector sd = ((sq / n).array() - mean.array().square()).max(0.0).sqrt().matrix();
    for (Eigen::Index j = 0; j < p; ++j)
        if (!(sd[j] > 0.0)) throw ContractError("standardize: feature " + train.feature_names()[static_cast<std::size_t>(j)] +
                                               " is constant on the training environments");
    return {mean, sd};
}

inline MultiEnvData zscore(const MultiEnvData& data, const Vector& mean, const Vector& sd) {
    std::vector<EnvironmentData> envs;
    for (const auto& env : data) {
        Matrix x = (env.x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
        envs.emplace_back(env.env_id, std::move(x), env.y);
    }
    return MultiEnvData(std::move(envs), data.feature_names());
}

// Maps a fit on z-scored features back to the original feature scale.
inline void unscale(FitResult& r, const Vector& mean, const Vector& sd) {
    const double shift = (r.beta_hat.array() * mean.array() / sd.array()).sum();
    r.b_hat = (r.b_hat.array() / sd.array()).matrix();
    r.beta_hat = r.a_hat.cwiseProduct(r.b_hat);
    if (r.theta_hat.size() > 0) r.theta_hat.array() -= shift;
}

}  // namespace detail

/// Runs the fit described by `config` on `data`.
inline RunOutcome run_configured_fit(const MultiEnvData& data, const RunConfig& config) {
    const LinkFamily link = parse_link(config.link);
    data.check_outcomes(link);
    RunOutcome out;
    out.seed = config.seed ? *config.seed : std::random_device{}();

    for (const auto& id : config.val_envs)
        if (!data.contains(id)) throw ContractError("config field 'val_envs': unknown environment '" + id + "'");
    for (const auto& id : config.train_envs)
        if (!data.contains(id)) throw ContractError("config field 'train_envs': unknown environment '" + id + "'");
    std::vector<std::string> train_ids = config.train_envs;
    if (train_ids.empty()) {
        const std::set<std::string> val(config.val_envs.begin(), config.val_envs.end());
        for (const auto& id : data.env_ids())
            if (!val.contains(id)) train_ids.push_back(id);
    }
    if (train_ids.empty()) throw ContractError("config field 'train_envs': no training environments remain");

    const IndexSet J = resolve_features(config.exogenous, data, "J");

    MultiEnvData work = data;
    Vector mean, sd;
    if (config.standardize) {
        std::tie(mean, sd) = detail::pooled_moments(data.subset(train_ids));
        work = detail::zscore(data, mean, sd);
    }
    const MultiEnvData train = work.subset(train_ids);

    FilmConfig film;
    film.exogenous = J;
    film.max_outer_iter = config.max_outer_iter;
    film.outer_tol = config.outer_tol;
    film.optim.max_inner_iter = config.max_inner_iter;
    film.optim.grad_tol = config.grad_tol;
    film.optim.f_rel_tol = config.f_rel_tol;
    film.support_threshold = config.support_threshold;

    FitResult r;
    switch (config.method) {
        case FitMethod::Film:
        case FitMethod::RobustFilm: {
            if (config.method == FitMethod::Film) {
                if (config.aggregator != "median" && config.aggregator != "mean")
                    throw ContractError("config field 'aggregator': film always uses the mean");
                film.agg = Aggregator::mean();
            } else {
                film.agg = parse_aggregator(config.aggregator, config.trim_fraction);
            }
            const auto inits = default_inits(train, link, config.n_inits, out.seed);
            if (!config.val_envs.empty()) {
                CvConfig cv;
                cv.inits = inits;
                cv.train_envs = train_ids;
                cv.val_env_ids = config.val_envs;
                cv.criterion = config.validation == "pooled-loss" ? ValidationCriterion::PooledLoss
                                                                   : ValidationCriterion::FullObjective;
                if (!config.lambda1_grid.empty()) {
                    for (double l : config.lambda1_grid) cv.lambda_grid.push_back({l, config.lambda2});
                } else if (config.lambda1) {
                    cv.lambda_grid.push_back({*config.lambda1, config.lambda2});
                } else {
                    cv.lambda_grid = lambda1_grid(50.0, 125.0, 4, config.lambda2);
                }
                r = fit_cv(work, link, cv, film);
            } else {
                // no validation data: keep the start with the lowest final training objective
                film.pen = {config.lambda1.value_or(100.0), config.lambda2};
                const ProblemModel model(train, link);
                std::optional<FitResult> best;
                for (const auto& init : inits) {
                    FitResult f = fit_alternating(model, film, init);
                    if (!best || f.objective_trace.back() < best->objective_trace.back()) best = std::move(f);
                }
                r = std::move(*best);
                r.chosen_lambdas = film.pen;
            }
            break;
        }
        case FitMethod::Eills:
            r = fit_eills(train, link, {config.lambda1.value_or(1.0), config.lambda2}, config.max_p, film.optim);
            break;
        case FitMethod::Coco:
            r = fit_coco(train, link, J, film.optim, config.n_starts, out.seed);
            break;
        case FitMethod::Pooled:
            r = fit_pooled_glm(train, link, config.ridge);
            break;
        case FitMethod::Oracle: {
            const IndexSet S = resolve_features(config.oracle_support, data, "oracle_support");
            for (const auto& id : config.inlier_envs)
                if (!data.contains(id)) throw ContractError("config field 'inlier_envs': unknown environment '" + id + "'");
            r = fit_oracle_glm(work, link, S, config.inlier_envs.empty() ? train_ids : config.inlier_envs);
            break;
        }
    }
    if (config.standardize) detail::unscale(r, mean, sd);
    out.result = std::move(r);
    return out;
}

}  // namespace invglm

#endif
