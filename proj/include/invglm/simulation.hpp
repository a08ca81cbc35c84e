#ifndef INVGLM_SIMULATION_HPP
#define INVGLM_SIMULATION_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "link.hpp"
#include "rng.hpp"

namespace invglm {

/// Synthetic invariant-features design: s invariant covariates, q spurious
/// covariates driven by the outcome, and p - s - q null covariates.
struct DgpSpec {
    LinkKind link = LinkKind::Identity;
    std::size_t s = 3;
    std::size_t q = 1;
    std::size_t p = 10;
    std::vector<double> beta_s{2.0, 3.0, 4.0};
    double gamma_base = 2.0;
    std::vector<double> theta_e;  // per inlier environment; empty means all zero
    double sigma_e = 1.0;
    std::size_t n_per_env = 500;
    std::size_t n_inlier_envs = 3;
    std::uint64_t seed = 0;

    void validate() const {
        require(s >= 1 && q >= 1 && p >= 1, "s, q and p must be positive");
        require(s + q <= p, "s + q must not exceed p");
        require(beta_s.size() == s, "beta_s must have s entries");
        require(n_per_env >= 1 && n_inlier_envs >= 1, "sample size and environment count must be positive");
        require(theta_e.empty() || theta_e.size() == n_inlier_envs, "theta_e needs one entry per inlier environment");
        require(sigma_e > 0.0, "sigma_e must be positive");
    }

    // Spurious strength for inlier environment e: evenly spaced from gamma to gamma + 4.
    double gamma_for(std::size_t e) const {
        if (n_inlier_envs == 1) return gamma_base;
        return gamma_base + 4.0 * static_cast<double>(e) / static_cast<double>(n_inlier_envs - 1);
    }

    double theta_for(std::size_t e) const { return theta_e.empty() ? 0.0 : theta_e[e]; }

    Vector beta_star() const {
        Vector b = Vector::Zero(static_cast<Eigen::Index>(p));
        for (std::size_t j = 0; j < s; ++j) b[static_cast<Eigen::Index>(j)] = beta_s[j];
        return b;
    }

    IndexSet invariant_set() const {
        IndexSet S(s);
        std::iota(S.begin(), S.end(), std::size_t{0});
        return S;
    }

    LinkFamily link_family() const { return LinkFamily(link); }
};

inline std::string inlier_env_id(std::size_t e) { return "env_" + std::to_string(e + 1); }
inline std::string outlier_env_id(std::size_t k) { return "outlier_" + std::to_string(k + 1); }

namespace detail {

// Rows of an invariant-model environment with the given effects and spurious strength.
inline EnvironmentData draw_model_env(const DgpSpec& spec, Rng& rng, const std::string& id,
                                      const Vector& beta_s, double gamma, double theta) {
    const auto n = static_cast<Eigen::Index>(spec.n_per_env);
    const auto s = static_cast<Eigen::Index>(spec.s);
    const auto q = static_cast<Eigen::Index>(spec.q);
    const auto p = static_cast<Eigen::Index>(spec.p);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix x(n, p);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double eta = theta;
        for (Eigen::Index j = 0; j < s; ++j) {
            x(i, j) = normal(rng);
            eta += beta_s[j] * x(i, j);
        }
        if (spec.link == LinkKind::Identity) {
            y[i] = eta + spec.sigma_e * normal(rng);
        } else {
            y[i] = unif(rng) < LinkFamily::expit(eta) ? 1.0 : 0.0;
        }
        for (Eigen::Index j = s; j < s + q; ++j) x(i, j) = gamma * y[i] + normal(rng);
        for (Eigen::Index j = s + q; j < p; ++j) x(i, j) = normal(rng);
    }
    return EnvironmentData(id, std::move(x), std::move(y));
}

}  // namespace detail

/// Inlier environment `env_index` of the design; the stream is keyed on
/// (seed, env_index) so environments can be drawn in any order.
inline EnvironmentData generate_inlier(const DgpSpec& spec, std::size_t env_index) {
    spec.validate();
    require(env_index < spec.n_inlier_envs, "env_index " + std::to_string(env_index) +
                                                " out of range (" + std::to_string(spec.n_inlier_envs) +
                                                " inlier environments)");
    Rng rng = make_rng(spec.seed, {kTagInlier, env_index});
    Vector bs = Eigen::Map<const Vector>(spec.beta_s.data(), static_cast<Eigen::Index>(spec.s));
    return detail::draw_model_env(spec, rng, inlier_env_id(env_index), bs, spec.gamma_for(env_index),
                                  spec.theta_for(env_index));
}

enum class OutlierKind { PureNoise, PermutedFeatures, RotatedFeatures, FlippedEffects };

inline std::string outlier_name(OutlierKind k) {
    switch (k) {
        case OutlierKind::PureNoise: return "pure-noise";
        case OutlierKind::PermutedFeatures: return "permuted";
        case OutlierKind::RotatedFeatures: return "rotated";
        case OutlierKind::FlippedEffects: return "flipped";
    }
    return "?";
}

inline OutlierKind parse_outlier(const std::string& s) {
    if (s == "pure-noise") return OutlierKind::PureNoise;
    if (s == "permuted") return OutlierKind::PermutedFeatures;
    if (s == "rotated") return OutlierKind::RotatedFeatures;
    if (s == "flipped") return OutlierKind::FlippedEffects;
    throw ContractError("unknown outlier scheme '" + s + "' (expected pure-noise, permuted, rotated or flipped)");
}

/// Haar-distributed rotation: QR of a Gaussian matrix with the sign of R's
/// diagonal folded into Q, then one column flipped if needed so det = +1.
inline Matrix random_rotation(std::size_t p, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(p);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    if (q.determinant() < 0.0) q.col(0) *= -1.0;
    return q;
}

/// An outlier scheme with its randomly drawn parameters.
struct OutlierScheme {
    OutlierKind kind = OutlierKind::PureNoise;
    std::vector<std::size_t> permutation;  // new column j takes old column permutation[j]
    Matrix rotation;                       // rows are mapped x -> O x

    static OutlierScheme make(OutlierKind kind, std::size_t p, std::uint64_t seed, std::size_t index = 0) {
        OutlierScheme sc;
        sc.kind = kind;
        Rng rng = make_rng(seed, {kTagScheme, index});
        if (kind == OutlierKind::PermutedFeatures) {
            sc.permutation.resize(p);
            std::iota(sc.permutation.begin(), sc.permutation.end(), std::size_t{0});
            std::shuffle(sc.permutation.begin(), sc.permutation.end(), rng);
        } else if (kind == OutlierKind::RotatedFeatures) {
            sc.rotation = random_rotation(p, rng);
        }
        return sc;
    }
};

/// Outlier environment number `index` (id "outlier_<index+1>"). Model-based
/// schemes draw like an inlier with spurious strength gamma + 2, the middle
/// of the inlier grid.
inline EnvironmentData generate_outlier(const DgpSpec& spec, const OutlierScheme& scheme,
                                        std::size_t index = 0) {
    spec.validate();
    Rng rng = make_rng(spec.seed, {kTagOutlier, index});
    const std::string id = outlier_env_id(index);
    const auto n = static_cast<Eigen::Index>(spec.n_per_env);
    const auto p = static_cast<Eigen::Index>(spec.p);
    Vector bs = Eigen::Map<const Vector>(spec.beta_s.data(), static_cast<Eigen::Index>(spec.s));
    const double gamma = spec.gamma_base + 2.0;
    switch (scheme.kind) {
        case OutlierKind::PureNoise: {
            std::normal_distribution<double> normal(0.0, 1.0);
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            Matrix x(n, p);
            Vector y(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < p; ++j) {
                    const double z = normal(rng);
                    const double a = normal(rng), b = normal(rng);
                    x(i, j) = z / std::sqrt((a * a + b * b) / 2.0);  // t with 2 d.o.f.
                }
                if (spec.link == LinkKind::Identity) y[i] = -5.0 + 10.0 * unif(rng);
                else y[i] = unif(rng) < 0.1 ? 1.0 : 0.0;
            }
            return EnvironmentData(id, std::move(x), std::move(y));
        }
        case OutlierKind::PermutedFeatures: {
            require(scheme.permutation.size() == spec.p, "permutation must have p entries");
            auto env = detail::draw_model_env(spec, rng, id, bs, gamma, 0.0);
            Matrix x(n, p);
            for (Eigen::Index j = 0; j < p; ++j)
                x.col(j) = env.x.col(static_cast<Eigen::Index>(scheme.permutation[static_cast<std::size_t>(j)]));
            return EnvironmentData(id, std::move(x), std::move(env.y));
        }
        case OutlierKind::RotatedFeatures: {
            require(scheme.rotation.rows() == p && scheme.rotation.cols() == p, "rotation must be p x p");
            auto env = detail::draw_model_env(spec, rng, id, bs, gamma, 0.0);
            Matrix x = env.x * scheme.rotation.transpose();
            return EnvironmentData(id, std::move(x), std::move(env.y));
        }
        case OutlierKind::FlippedEffects:
            return detail::draw_model_env(spec, rng, id, -bs, gamma, 0.0);
    }
    throw ContractError("unhandled outlier scheme");
}

/// All inlier environments followed by one outlier environment per entry of `outliers`.
inline MultiEnvData generate_dataset(const DgpSpec& spec, const std::vector<OutlierKind>& outliers = {}) {
    std::vector<EnvironmentData> envs;
    for (std::size_t e = 0; e < spec.n_inlier_envs; ++e) envs.push_back(generate_inlier(spec, e));
    for (std::size_t k = 0; k < outliers.size(); ++k)
        envs.push_back(generate_outlier(spec, OutlierScheme::make(outliers[k], spec.p, spec.seed, k), k));
    return MultiEnvData(std::move(envs));
}

// --- Metrics --------------------------------------------------------------

struct Metrics {
    double estimation_error = 0.0;
    double selection_accuracy = 0.0;
    std::optional<double> auc;
};

inline double selection_accuracy(const IndexSet& selected, const IndexSet& truth, std::size_t p) {
    std::vector<bool> sel(p, false), tru(p, false);
    for (auto j : selected) sel.at(j) = true;
    for (auto j : truth) tru.at(j) = true;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < p; ++j) hits += sel[j] == tru[j] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(p);
}

inline Metrics evaluate(const FitResult& result, const Vector& beta_star, const IndexSet& truth) {
    require(result.beta_hat.size() == beta_star.size(),
            "fit has p = " + std::to_string(result.beta_hat.size()) + " but truth has p = " +
                std::to_string(beta_star.size()));
    Metrics m;
    m.estimation_error = (result.beta_hat - beta_star).norm();
    m.selection_accuracy = selection_accuracy(result.selected_support, truth,
                                              static_cast<std::size_t>(beta_star.size()));
    return m;
}

inline Metrics evaluate(const FitResult& result, const DgpSpec& spec) {
    return evaluate(result, spec.beta_star(), spec.invariant_set());
}

/// Area under the ROC curve via the rank-sum statistic, ties given average ranks.
inline double auc(const Vector& scores, const Vector& labels) {
    require(scores.size() == labels.size(), "scores and labels differ in length");
    const auto n = static_cast<std::size_t>(scores.size());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return scores[static_cast<Eigen::Index>(i)] < scores[static_cast<Eigen::Index>(j)];
    });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t k = i;
        while (k + 1 < n && scores[static_cast<Eigen::Index>(order[k + 1])] == scores[static_cast<Eigen::Index>(order[i])]) ++k;
        const double avg = 0.5 * static_cast<double>(i + k) + 1.0;
        for (std::size_t t = i; t <= k; ++t) rank[order[t]] = avg;
        i = k + 1;
    }
    double n_pos = 0.0, rank_pos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = labels[static_cast<Eigen::Index>(i)];
        require(l == 0.0 || l == 1.0, "AUC labels must be 0 or 1");
        if (l == 1.0) {
            n_pos += 1.0;
            rank_pos += rank[i];
        }
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    require(n_pos > 0.0 && n_neg > 0.0, "AUC needs both positive and negative labels");
    return (rank_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

// --- Experiment protocol --------------------------------------------------

enum class Method { Oracle, Pooled, Film, FilmJ1, RobustFilm, RobustFilmJ1, Eills, Coco };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Oracle: return "oracle";
        case Method::Pooled: return "pooled";
        case Method::Film: return "film";
        case Method::FilmJ1: return "film-j1";
        case Method::RobustFilm: return "robust-film";
        case Method::RobustFilmJ1: return "robust-film-j1";
        case Method::Eills: return "eills";
        case Method::Coco: return "coco";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::Oracle, Method::Pooled, Method::Film, Method::FilmJ1, Method::RobustFilm,
                     Method::RobustFilmJ1, Method::Eills, Method::Coco})
        if (method_name(m) == s) return m;
    throw ContractError("unknown method '" + s + "'");
}

inline const std::vector<Method>& all_methods() {
    static const std::vector<Method> m{Method::Oracle, Method::Pooled, Method::Film, Method::FilmJ1,
                                       Method::RobustFilm, Method::RobustFilmJ1, Method::Eills, Method::Coco};
    return m;
}

/// Fitting protocol of the simulation study.
struct Protocol {
    std::size_t n_random_inits = 30;
    double lambda1_lo = 50.0;
    double lambda1_hi = 125.0;
    std::size_t lambda1_count = 4;
    double lambda2 = 0.1;
    Penalties eills_pen{1.0, 0.1};
    IndexSet coco_exogenous{0};
    std::size_t coco_starts = 5;
    // base settings; pen, J and agg are set per method. The outer loop is capped
    // at 20 passes here: later passes only drift along the a/b scale direction.
    FilmConfig film = [] {
        FilmConfig c;
        c.max_outer_iter = 20;
        return c;
    }();
    ValidationCriterion criterion = ValidationCriterion::FullObjective;
};

/// Training / validation split: validation is the last inlier environment,
/// training is the remaining inliers plus every outlier.
struct EnvSplit {
    std::vector<std::string> inliers;
    std::vector<std::string> train;
    std::vector<std::string> val;
};

inline EnvSplit protocol_split(const MultiEnvData& data) {
    EnvSplit s;
    std::vector<std::string> outliers;
    for (const auto& id : data.env_ids()) (id.rfind("outlier_", 0) == 0 ? outliers : s.inliers).push_back(id);
    require(s.inliers.size() >= 2, "the protocol needs at least two inlier environments");
    s.val = {s.inliers.back()};
    s.train.assign(s.inliers.begin(), s.inliers.end() - 1);
    s.train.insert(s.train.end(), outliers.begin(), outliers.end());
    return s;
}

/// Runs one method on one simulated dataset following the study protocol.
/// Returns std::nullopt for a method that does not apply (EILLS on logistic data).
inline std::optional<FitResult> fit_method(Method method, const MultiEnvData& data, const DgpSpec& spec,
                                           const Protocol& proto, std::uint64_t seed) {
    const LinkFamily link = spec.link_family();
    const EnvSplit split = protocol_split(data);
    switch (method) {
        case Method::Oracle: return fit_oracle_glm(data, link, spec.invariant_set(), split.inliers);
        case Method::Pooled: return fit_pooled_glm(data, link, 0.0);
        case Method::Eills:
            if (!link.is_identity()) return std::nullopt;
            return fit_eills(data, link, proto.eills_pen);
        case Method::Coco:
            return fit_coco(data, link, proto.coco_exogenous, proto.film.optim, proto.coco_starts, seed);
        default: break;
    }
    CvConfig cv;
    cv.train_envs = split.train;
    cv.val_env_ids = split.val;
    cv.criterion = proto.criterion;
    cv.lambda_grid = lambda1_grid(proto.lambda1_lo, proto.lambda1_hi, proto.lambda1_count, proto.lambda2);
    cv.inits = default_inits(data.subset(split.train), link, proto.n_random_inits, seed);
    FilmConfig cfg = proto.film;
    const bool robust = method == Method::RobustFilm || method == Method::RobustFilmJ1;
    cfg.agg = robust ? Aggregator::median() : Aggregator::mean();
    cfg.exogenous = (method == Method::FilmJ1 || method == Method::RobustFilmJ1) ? IndexSet{0} : IndexSet{};
    FitResult r = fit_cv(data, link, cv, cfg);
    r.method_tag = method_name(method);
    return r;
}

/// One grid point of an experiment: a design plus the outlier environments to add.
struct ExperimentPoint {
    std::string label;
    DgpSpec spec;
    std::vector<OutlierKind> outliers;
};

struct ReplicateRecord {
    std::size_t point = 0;
    std::size_t replicate = 0;
    Method method = Method::Oracle;
    bool ok = false;
    Metrics metrics;
    std::string diagnostic;
};

struct ExperimentCell {
    std::string grid_value;
    Method method = Method::Oracle;
    double median_error = std::nan("");
    double median_accuracy = std::nan("");
    std::size_t n_replicates = 0;
    std::size_t n_failed = 0;
};

struct ExperimentTable {
    std::vector<ExperimentCell> cells;       // point-major, then method order
    std::vector<ReplicateRecord> records;    // every attempted (point, replicate, method)
    std::size_t cells_attempted = 0;
    std::size_t cells_failed = 0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

// Runs `task(i)` for i in [0, count) on `jobs` threads; results are stored by
// index so output never depends on scheduling.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) task(i);
        });
    for (auto& t : pool) t.join();
}

/// Replicated simulation over grid points. Every replicate regenerates data
/// from seed streams keyed on (seed, point, replicate) and fits every method;
/// failures are recorded rather than thrown.
inline ExperimentTable run_experiment(const std::vector<ExperimentPoint>& grid,
                                      const std::vector<Method>& methods, std::size_t replicates,
                                      std::uint64_t seed, const Protocol& proto = {},
                                      std::size_t jobs = 1) {
    require(!grid.empty(), "experiment grid is empty");
    require(!methods.empty(), "experiment needs at least one method");
    require(replicates >= 1, "experiment needs at least one replicate");
    const std::size_t tasks = grid.size() * replicates;
    std::vector<std::vector<ReplicateRecord>> per_task(tasks);
    parallel_for(tasks, jobs, [&](std::size_t t) {
        const std::size_t pt = t / replicates, rep = t % replicates;
        DgpSpec spec = grid[pt].spec;
        spec.seed = derive_seed(seed, {pt, rep});
        std::vector<ReplicateRecord> recs;
        std::optional<MultiEnvData> data;
        std::string data_error;
        try {
            data = generate_dataset(spec, grid[pt].outliers);
        } catch (const std::exception& err) {
            data_error = err.what();
        }
        for (Method m : methods) {
            ReplicateRecord rec{pt, rep, m, false, {}, {}};
            if (!data) {
                rec.diagnostic = "data generation failed: " + data_error;
                recs.push_back(rec);
                continue;
            }
            try {
                const auto fit = fit_method(m, *data, spec, proto, derive_seed(spec.seed, {kTagInits, 0}));
                if (!fit) continue;  // not applicable
                rec.metrics = evaluate(*fit, spec);
                rec.ok = true;
            } catch (const std::exception& err) {
                rec.diagnostic = err.what();
            }
            recs.push_back(rec);
        }
        per_task[t] = std::move(recs);
    });

    ExperimentTable table;
    for (auto& recs : per_task)
        for (auto& r : recs) table.records.push_back(std::move(r));
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        for (Method m : methods) {
            ExperimentCell cell;
            cell.grid_value = grid[pt].label;
            cell.method = m;
            std::vector<double> errs, accs;
            bool seen = false;
            for (const auto& r : table.records) {
                if (r.point != pt || r.method != m) continue;
                seen = true;
                if (r.ok) {
                    errs.push_back(r.metrics.estimation_error);
                    accs.push_back(r.metrics.selection_accuracy);
                } else {
                    ++cell.n_failed;
                }
            }
            if (!seen) continue;  // method not applicable at this point
            cell.median_error = median_of(errs);
            cell.median_accuracy = median_of(accs);
            cell.n_replicates = errs.size();
            ++table.cells_attempted;
            if (errs.empty()) ++table.cells_failed;
            table.cells.push_back(cell);
        }
    }
    return table;
}

inline const ExperimentCell* find_cell(const ExperimentTable& t, const std::string& grid_value, Method m) {
    for (const auto& c : t.cells)
        if (c.grid_value == grid_value && c.method == m) return &c;
    return nullptr;
}

// --- Experiment designs ---------------------------------------------------

// Outlier-free sweeps: one parameter varies, the rest stay at the defaults
// (n = 500, p = 10, E = 3, gamma = 2).
inline std::vector<ExperimentPoint> sweep_grid(const std::string& name, LinkKind link) {
    std::vector<ExperimentPoint> grid;
    const auto point = [&](std::size_t value, auto&& set) {
        ExperimentPoint pt;
        pt.label = std::to_string(value);
        pt.spec.link = link;
        set(pt.spec, value);
        pt.spec.validate();
        grid.push_back(std::move(pt));
    };
    if (name == "sweep-n") {
        for (std::size_t n : {100, 250, 500, 1000, 2000}) point(n, [](DgpSpec& s, std::size_t v) { s.n_per_env = v; });
    } else if (name == "sweep-p") {
        for (std::size_t p : {5, 10, 15, 20}) point(p, [](DgpSpec& s, std::size_t v) { s.p = v; });
    } else if (name == "sweep-E") {
        for (std::size_t e : {3, 4, 5, 6}) point(e, [](DgpSpec& s, std::size_t v) { s.n_inlier_envs = v; });
    } else if (name == "sweep-gamma") {
        for (std::size_t g : {2, 4, 6, 8, 10})
            point(g, [](DgpSpec& s, std::size_t v) { s.gamma_base = static_cast<double>(v); });
    } else {
        throw ContractError("unknown sweep '" + name + "' (sweep-n, sweep-p, sweep-E, sweep-gamma)");
    }
    return grid;
}

// The outlier table: both links crossed with the four outlier schemes, one
// outlier environment each, labelled "<link>/<scheme>".
inline std::vector<ExperimentPoint> table1_grid() {
    std::vector<ExperimentPoint> grid;
    for (LinkKind link : {LinkKind::Identity, LinkKind::Logit}) {
        for (OutlierKind k : {OutlierKind::PureNoise, OutlierKind::PermutedFeatures, OutlierKind::RotatedFeatures,
                              OutlierKind::FlippedEffects}) {
            ExperimentPoint pt;
            pt.spec.link = link;
            pt.outliers = {k};
            pt.label = std::string(LinkFamily(link).name()) + "/" + outlier_name(k);
            grid.push_back(std::move(pt));
        }
    }
    return grid;
}

// --- Runtime benchmark ----------------------------------------------------

struct BenchRow {
    std::size_t p = 0;
    Method method = Method::Film;
    double mean_seconds = std::nan("");
    std::size_t n_runs = 0;
    std::string note;  // e.g. refusal message
};

struct BenchSettings {
    std::size_t n_per_env = 100;
    std::size_t n_envs = 2;
    Penalties film_pen{100.0, 0.1};
    Penalties eills_pen{1.0, 0.1};
    IndexSet coco_exogenous{0};
    std::size_t max_p = kEillsDefaultMaxP;
    FilmConfig film{};
};

/// Mean wall-clock seconds per (p, method) for single fits on two linear
/// environments.
inline std::vector<BenchRow> run_bench(const std::vector<std::size_t>& p_values, const std::vector<Method>& methods,
                                       std::size_t replicates, std::uint64_t seed,
                                       const BenchSettings& bs = {}) {
    require(replicates >= 1, "benchmark needs at least one replicate");
    std::vector<BenchRow> rows;
    for (std::size_t pi = 0; pi < p_values.size(); ++pi) {
        const std::size_t p = p_values[pi];
        for (Method m : methods) {
            BenchRow row;
            row.p = p;
            row.method = m;
            double total = 0.0;
            for (std::size_t rep = 0; rep < replicates; ++rep) {
                DgpSpec spec;
                spec.p = p;
                spec.n_per_env = bs.n_per_env;
                spec.n_inlier_envs = bs.n_envs;
                spec.seed = derive_seed(seed, {p, rep});
                const auto data = generate_dataset(spec);
                const LinkFamily link = LinkFamily::identity();
                const auto start = std::chrono::steady_clock::now();
                try {
                    switch (m) {
                        case Method::Eills: fit_eills(data, link, bs.eills_pen, bs.max_p); break;
                        case Method::Coco: fit_coco(data, link, bs.coco_exogenous, bs.film.optim, 1); break;
                        case Method::Film:
                        case Method::RobustFilm: {
                            FilmConfig cfg = bs.film;
                            cfg.pen = bs.film_pen;
                            cfg.agg = m == Method::Film ? Aggregator::mean() : Aggregator::median();
                            const auto init = default_inits(data, link, 0, spec.seed).front();
                            fit_robust_film(data, link, cfg, init);
                            break;
                        }
                        case Method::Pooled: fit_pooled_glm(data, link); break;
                        case Method::Oracle: fit_oracle_glm(data, link, spec.invariant_set(), data.env_ids()); break;
                        default: throw ContractError("method " + method_name(m) + " is not benchmarked");
                    }
                } catch (const RefusalError& err) {
                    row.note = err.what();
                    break;
                }
                total += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                ++row.n_runs;
            }
            if (row.n_runs > 0) row.mean_seconds = total / static_cast<double>(row.n_runs);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace invglm

#endif
