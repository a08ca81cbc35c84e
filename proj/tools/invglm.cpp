// invglm: simulate, fit, reproduce and evaluate invariant GLMs from the shell.
//
// Exit codes: 0 ok, 2 input error, 3 non-convergence, 4 refusal, 5 too many
// failed experiment cells.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "invglm/invglm.hpp"

namespace fs = std::filesystem;
using namespace invglm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitRefusal = 4;
constexpr int kExitDegraded = 5;

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : "NA"; }

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::string link = "linear";
    std::size_t n = 500, p = 10, s = 3, q = 1, envs = 3;
    double gamma = 2.0, sigma = 1.0;
    std::vector<double> beta, theta;
    std::vector<std::string> outliers;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
    DgpSpec spec;
    spec.link = parse_link(a.link).kind();
    spec.n_per_env = a.n;
    spec.p = a.p;
    spec.s = a.s;
    spec.q = a.q;
    spec.n_inlier_envs = a.envs;
    spec.gamma_base = a.gamma;
    spec.sigma_e = a.sigma;
    spec.theta_e = a.theta;
    if (!a.beta.empty()) spec.beta_s = a.beta;
    else if (a.s != 3) spec.beta_s.assign(a.s, 1.0);
    spec.seed = a.seed ? *a.seed : std::random_device{}();
    spec.validate();
    std::vector<OutlierKind> outliers;
    for (const auto& o : a.outliers) outliers.push_back(parse_outlier(o));

    const MultiEnvData data = generate_dataset(spec, outliers);
    write_dataset_csv(a.out, data);

    std::vector<std::string> gammas;
    for (std::size_t e = 0; e < spec.n_inlier_envs; ++e) gammas.push_back(format_double(spec.gamma_for(e)));
    std::ostringstream msg;
    msg << "wrote " << a.out << ": " << data.size() << " environments (" << join(data.env_ids(), ", ")
        << "), n = " << spec.n_per_env << " per environment, p = " << spec.p << ", gamma grid "
        << join(gammas, ",");
    if (!outliers.empty()) msg << " (outliers " << format_double(spec.gamma_base + 2.0) << ")";
    msg << ", seed " << spec.seed;
    std::cout << msg.str() << "\n";
    return kExitOk;
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
    std::string data, config, out;
    std::string validation;
    bool standardize = false;
};

int cmd_fit(const FitArgs& a) {
    const MultiEnvData data = read_dataset_csv(a.data);
    RunConfig config = parse_run_config_text(read_file(a.config), a.config);
    if (!a.validation.empty()) config.validation = a.validation;
    if (a.standardize) config.standardize = true;
    // re-run the schema checks so command-line overrides are validated too
    config = parse_run_config(nlohmann::json::parse(run_config_to_json(config).dump()));
    if (!fs::exists(fs::absolute(a.out).parent_path()))
        throw ContractError("output directory for '" + a.out + "' does not exist");

    const auto start = std::chrono::steady_clock::now();
    RunOutcome run = run_configured_fit(data, config);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.result.method_tag = run.result.method_tag.empty() ? fit_method_name(config.method) : run.result.method_tag;
    config.seed = run.seed;

    write_file_atomic(a.out, result_to_json(run.result, data.feature_names(), config, run.seed, wall).dump(2) + "\n");
    std::vector<std::string> support;
    for (auto j : run.result.selected_support) support.push_back(data.feature_names()[j]);
    std::cout << fit_method_name(config.method) << ": support {" << join(support, ", ") << "}, "
              << (run.result.converged ? "converged" : "not converged") << ", " << format_double(wall) << " s -> "
              << a.out << "\n";
    for (const auto& w : run.result.warnings) std::cerr << "warning: " << w << "\n";
    return run.result.converged ? kExitOk : kExitNotConverged;
}

// --- reproduce --------------------------------------------------------------

struct ReproduceArgs {
    std::string experiment;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicates;
    bool quick = false;
    std::optional<std::size_t> jobs;
    std::string out = "results";
    std::string validation = "objective";
};

std::size_t default_jobs() {
    if (const char* env = std::getenv("INVGLM_JOBS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw ContractError("INVGLM_JOBS must be a positive integer, got '" + std::string(env) + "'");
    }
    return 1;
}

std::string table_csv(const ExperimentTable& t) {
    std::string s = "grid_value,method,median_error,median_accuracy,n_replicates\n";
    for (const auto& c : t.cells)
        s += c.grid_value + "," + method_name(c.method) + "," + cell(c.median_error) + "," + cell(c.median_accuracy) +
             "," + std::to_string(c.n_replicates) + "\n";
    return s;
}

void append_errors(std::string& csv, const std::string& experiment, const ExperimentTable& t,
                   const std::vector<ExperimentPoint>& grid) {
    for (const auto& r : t.records) {
        if (r.ok) continue;
        std::string diag = r.diagnostic;
        std::replace(diag.begin(), diag.end(), '\n', ' ');
        std::replace(diag.begin(), diag.end(), '"', '\'');
        csv += experiment + "," + grid[r.point].label + "," + std::to_string(r.replicate) + "," + method_name(r.method) +
               ",\"" + diag + "\"\n";
    }
}

std::string table1_wide_csv(const ExperimentTable& t, const std::vector<ExperimentPoint>& grid,
                            const std::vector<Method>& methods) {
    std::string s = "model,outlier_scheme";
    for (Method m : methods) s += "," + method_name(m);
    s += "\n";
    for (const auto& pt : grid) {
        s += std::string(pt.spec.link_family().name()) + "," + outlier_name(pt.outliers.front());
        for (Method m : methods) {
            const ExperimentCell* c = find_cell(t, pt.label, m);
            s += "," + (c ? cell(c->median_error) : std::string("NA"));
        }
        s += "\n";
    }
    return s;
}

int cmd_reproduce(const ReproduceArgs& a) {
    if (!a.seed) throw ContractError("reproduce requires --seed");
    const bool bench = a.experiment == "bench";
    std::size_t reps = a.replicates.value_or(bench ? 5 : 50);
    if (a.quick) reps = std::max<std::size_t>(1, reps / 10);
    const std::size_t jobs = a.jobs.value_or(default_jobs());
    if (jobs == 0) throw ContractError("--jobs must be positive");
    fs::create_directories(a.out);
    const fs::path dir(a.out);

    Protocol proto;
    proto.criterion = a.validation == "pooled-loss" ? ValidationCriterion::PooledLoss : ValidationCriterion::FullObjective;

    std::string errors = "experiment,grid_value,replicate,method,diagnostic\n";
    std::size_t attempted = 0, failed = 0;

    if (bench) {
        const std::vector<Method> methods{Method::Eills, Method::Film, Method::RobustFilm, Method::Coco};
        BenchSettings bs;
        bs.film = proto.film;
        const auto rows = run_bench({5, 10, 15, 20}, methods, reps, *a.seed, bs);
        std::string s = "p,method,mean_seconds\n";
        for (const auto& r : rows) {
            s += std::to_string(r.p) + "," + method_name(r.method) + "," + cell(r.mean_seconds) + "\n";
            ++attempted;
            if (r.n_runs == 0) {
                ++failed;
                errors += "bench," + std::to_string(r.p) + ",0," + method_name(r.method) + ",\"" + r.note + "\"\n";
            }
        }
        write_file_atomic(dir / "bench.csv", s);
        std::cout << "wrote " << (dir / "bench.csv").string() << " (" << rows.size() << " rows, " << reps
                  << " replicates)\n";
    } else if (a.experiment == "table1") {
        const auto grid = table1_grid();
        const auto& methods = all_methods();
        const auto t = run_experiment(grid, methods, reps, *a.seed, proto, jobs);
        attempted += t.cells_attempted;
        failed += t.cells_failed;
        append_errors(errors, a.experiment, t, grid);
        write_file_atomic(dir / "table1.csv", table_csv(t));
        write_file_atomic(dir / "table1_wide.csv", table1_wide_csv(t, grid, methods));
        std::cout << "wrote " << (dir / "table1.csv").string() << " and table1_wide.csv (" << grid.size()
                  << " rows, " << reps << " replicates)\n";
    } else {
        const std::vector<Method> methods{Method::Oracle, Method::Pooled, Method::Film,
                                          Method::RobustFilm, Method::Eills, Method::Coco};
        const std::vector<LinkKind> links{LinkKind::Identity, LinkKind::Logit};
        for (std::size_t li = 0; li < links.size(); ++li) {
            const auto grid = sweep_grid(a.experiment, links[li]);
            const auto t = run_experiment(grid, methods, reps, derive_seed(*a.seed, {li}), proto, jobs);
            attempted += t.cells_attempted;
            failed += t.cells_failed;
            const std::string name = a.experiment + "_" + std::string(LinkFamily(links[li]).name());
            append_errors(errors, name, t, grid);
            write_file_atomic(dir / (name + ".csv"), table_csv(t));
            std::cout << "wrote " << (dir / (name + ".csv")).string() << " (" << grid.size() << " grid values, "
                      << reps << " replicates)\n";
        }
    }
    write_file_atomic(dir / "errors.csv", errors);
    const std::size_t done = attempted - failed;
    if (attempted > 0 && 10 * done < 9 * attempted) {
        std::cerr << "only " << done << " of " << attempted << " cells completed; see errors.csv\n";
        return kExitDegraded;
    }
    return kExitOk;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
    std::string result;
    std::string beta_star;
    std::string test;
};

Vector parse_beta_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string tok;
    std::size_t k = 0;
    while (std::getline(ss, tok, ',')) {
        ++k;
        const auto b = tok.find_first_not_of(" \t"), e = tok.find_last_not_of(" \t");
        if (b == std::string::npos) throw ContractError("--beta-star: entry " + std::to_string(k) + " is empty");
        v.push_back(detail::parse_number(tok.substr(b, e - b + 1), 1, "beta-star[" + std::to_string(k) + "]"));
    }
    if (v.empty()) throw ContractError("--beta-star: no values");
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int cmd_evaluate(const EvaluateArgs& a) {
    if (a.beta_star.empty() && a.test.empty())
        throw ContractError("evaluate needs --beta-star or --test");
    const LoadedResult res = load_result(read_file(a.result), a.result);
    nlohmann::ordered_json out;
    out["method_tag"] = res.method_tag;
    if (!a.beta_star.empty()) {
        const Vector beta_star = parse_beta_list(a.beta_star);
        FitResult fit;
        fit.beta_hat = res.beta_hat;
        fit.selected_support = res.selected_support;
        const Metrics m = evaluate(fit, beta_star, nonzero_support(beta_star, 0.0));
        out["estimation_error"] = m.estimation_error;
        out["selection_accuracy"] = m.selection_accuracy;
    }
    if (!a.test.empty()) {
        const MultiEnvData test = read_dataset_csv(a.test);
        if (test.feature_names() != res.names)
            throw ContractError(a.test + ": feature columns do not match the result's beta_hat");
        test.check_outcomes(LinkFamily::logit());
        Vector scores(static_cast<Eigen::Index>(test.n_total())), labels(scores.size());
        Eigen::Index off = 0;
        for (const auto& env : test) {
            scores.segment(off, env.x.rows()) = env.x * res.beta_hat;
            labels.segment(off, env.x.rows()) = env.y;
            off += env.x.rows();
        }
        out["auc"] = auc(scores, labels);
        out["n_test"] = test.n_total();
    }
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const RefusalError& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kExitRefusal;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNotConverged;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invariant generalized linear models across environments"};
    app.require_subcommand(1);
    int code = kExitOk;

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Draw a multi-environment dataset");
    simulate->add_option("--link", sim.link, "linear or logistic")->check(CLI::IsMember({"linear", "logistic"}));
    simulate->add_option("--n", sim.n, "Observations per environment")->check(CLI::PositiveNumber);
    simulate->add_option("--p", sim.p, "Number of features")->check(CLI::PositiveNumber);
    simulate->add_option("--s", sim.s, "Invariant features (x1..xs)")->check(CLI::PositiveNumber);
    simulate->add_option("--q", sim.q, "Spurious features following the invariant ones")->check(CLI::PositiveNumber);
    simulate->add_option("--envs", sim.envs, "Inlier environments")->check(CLI::PositiveNumber);
    simulate->add_option("--gamma", sim.gamma, "Spurious strength of the first environment");
    simulate->add_option("--sigma", sim.sigma, "Noise scale of the linear model")->check(CLI::PositiveNumber);
    simulate->add_option("--beta", sim.beta, "Invariant coefficients, one per invariant feature")->delimiter(',');
    simulate->add_option("--theta", sim.theta, "Intercept per inlier environment")->delimiter(',');
    simulate->add_option("--outlier", sim.outliers, "Append an outlier environment (repeatable)")
        ->check(CLI::IsMember({"pure-noise", "permuted", "rotated", "flipped"}));
    simulate->add_option("--seed", sim.seed, "Random seed (default: entropy)");
    simulate->add_option("-o,--output", sim.out, "Output CSV")->required();
    simulate->callback([&] { code = guarded([&] { return cmd_simulate(sim); }); });

    FitArgs fit;
    auto* fitc = app.add_subcommand("fit", "Fit a configured method to a dataset");
    fitc->add_option("--data", fit.data, "Dataset CSV")->required();
    fitc->add_option("--config", fit.config, "Run configuration JSON")->required();
    fitc->add_option("-o,--output", fit.out, "Result JSON")->required();
    fitc->add_option("--validation", fit.validation, "Override the tuning criterion")
        ->check(CLI::IsMember({"objective", "pooled-loss"}));
    fitc->add_flag("--standardize", fit.standardize, "z-score features with pooled training statistics");
    fitc->callback([&] { code = guarded([&] { return cmd_fit(fit); }); });

    ReproduceArgs rep;
    auto* repc = app.add_subcommand("reproduce", "Rerun a simulation experiment");
    repc->add_option("experiment", rep.experiment, "sweep-n, sweep-p, sweep-E, sweep-gamma, table1 or bench")
        ->required()
        ->check(CLI::IsMember({"sweep-n", "sweep-p", "sweep-E", "sweep-gamma", "table1", "bench"}));
    repc->add_option("--seed", rep.seed, "Master seed (required)");
    repc->add_option("--replicates", rep.replicates, "Replicates per grid value (default 50, bench 5)")
        ->check(CLI::PositiveNumber);
    repc->add_flag("--quick", rep.quick, "Divide the replicate count by 10");
    repc->add_option("--jobs", rep.jobs, "Worker threads (default $INVGLM_JOBS or 1)");
    repc->add_option("--out", rep.out, "Output directory");
    repc->add_option("--validation", rep.validation, "Tuning criterion")
        ->check(CLI::IsMember({"objective", "pooled-loss"}));
    repc->callback([&] { code = guarded([&] { return cmd_reproduce(rep); }); });

    EvaluateArgs ev;
    auto* evc = app.add_subcommand("evaluate", "Score a result against the truth");
    evc->add_option("--result", ev.result, "Result JSON")->required();
    evc->add_option("--beta-star", ev.beta_star, "True coefficients, comma separated");
    evc->add_option("--test", ev.test, "Labelled logistic test dataset for AUC");
    evc->callback([&] { code = guarded([&] { return cmd_evaluate(ev); }); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }
    return code;
}
