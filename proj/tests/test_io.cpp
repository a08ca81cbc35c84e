#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"

using namespace invglm;

namespace {

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ContractError& e) {
        return e.what();
    }
    return "";
}

nlohmann::json base_config() { return {{"method", "pooled"}}; }

}  // namespace

TEST(Csv, RoundTripIsExact) {
    std::mt19937_64 rng(1);
    for (bool logit : {false, true}) {
        auto data = oracle::random_data(rng, logit, 3, 7, 4);
        const auto back = dataset_from_csv(dataset_to_csv(data));
        ASSERT_EQ(back.env_ids(), data.env_ids());
        for (std::size_t e = 0; e < data.size(); ++e) {
            EXPECT_EQ(back[e].x, data[e].x);
            EXPECT_EQ(back[e].y, data[e].y);
        }
    }
    // awkward values survive too
    Matrix x(2, 1);
    x << 1e-310, -0.1;
    Vector y(2);
    y << 1.0 / 3.0, 12345678.901234567;
    const MultiEnvData tiny({EnvironmentData("a", x, y)});
    const auto back = dataset_from_csv(dataset_to_csv(tiny));
    EXPECT_EQ(back[0].x, x);
    EXPECT_EQ(back[0].y, y);
}

TEST(Csv, InterleavedRowsGroupByFirstAppearance) {
    const auto d = dataset_from_csv("env_id,y,x1\nb,1,2\na,3,4\nb,5,6\n");
    EXPECT_EQ(d.env_ids(), (std::vector<std::string>{"b", "a"}));
    EXPECT_EQ(d[0].n(), 2u);
    EXPECT_EQ(d[0].y[1], 5.0);
}

TEST(Csv, RejectionsNameTheLocation) {
    EXPECT_NE(message_of([] { dataset_from_csv("id,y,x1\na,1,2\n"); }).find("header"), std::string::npos);
    EXPECT_NE(message_of([] { dataset_from_csv("env_id,y,x2\na,1,2\n"); }).find("expected 'x1'"), std::string::npos);
    EXPECT_NE(message_of([] { dataset_from_csv("env_id,y,x1\na,1\n"); }).find("line 2 has 2 fields"), std::string::npos);
    const auto nan = message_of([] { dataset_from_csv("env_id,y,x1\na,1,2\na,1,nan\n"); });
    EXPECT_NE(nan.find("line 3, column 'x1'"), std::string::npos) << nan;
    const auto inf = message_of([] { dataset_from_csv("env_id,y,x1\na,inf,2\n"); });
    EXPECT_NE(inf.find("column 'y'"), std::string::npos) << inf;
    EXPECT_NE(message_of([] { dataset_from_csv("env_id,y,x1\na,1,2x\n"); }).find("not a number"), std::string::npos);
    EXPECT_NE(message_of([] { dataset_from_csv("env_id,y,x1\n"); }).find("no data rows"), std::string::npos);
    EXPECT_NE(message_of([] { dataset_from_csv(""); }).find("empty"), std::string::npos);
}

TEST(Files, AtomicWriteNeedsAnExistingDirectory) {
    const auto dir = std::filesystem::temp_directory_path() / "invglm_io_test";
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "f.txt", "hello");
    EXPECT_EQ(read_file(dir / "f.txt"), "hello");
    write_file_atomic(dir / "f.txt", "again");
    EXPECT_EQ(read_file(dir / "f.txt"), "again");
    const auto msg = message_of([&] { write_file_atomic(dir / "missing" / "f.txt", "x"); });
    EXPECT_NE(msg.find("directory does not exist"), std::string::npos) << msg;
    std::filesystem::remove_all(dir);
}

TEST(Config, Defaults) {
    const auto c = parse_run_config(base_config());
    EXPECT_EQ(c.method, FitMethod::Pooled);
    EXPECT_EQ(c.link, "linear");
    EXPECT_EQ(c.lambda2, 0.1);
    EXPECT_EQ(c.n_inits, 30u);
    EXPECT_FALSE(c.seed.has_value());
}

TEST(Config, Rejections) {
    const auto with = [](nlohmann::json extra) {
        auto j = base_config();
        j.update(extra);
        return message_of([&] { parse_run_config(j); });
    };
    EXPECT_NE(with({{"lamda1", 3}}).find("'lamda1': unknown key"), std::string::npos);
    EXPECT_NE(message_of([] { parse_run_config({{"link", "linear"}}); }).find("'method'"), std::string::npos);
    EXPECT_NE(with({{"method", "lasso"}}), "");
    EXPECT_NE(with({{"link", "probit"}}).find("'link'"), std::string::npos);
    EXPECT_NE(with({{"lambda1", 1}, {"lambda1_grid", {1, 2}}}).find("'lambda1'"), std::string::npos);
    EXPECT_NE(with({{"method", "film"}, {"lambda1_grid", {1, 2}}}).find("val_envs"), std::string::npos);
    EXPECT_EQ(with({{"method", "film"}, {"lambda1_grid", {1, 2}}, {"val_envs", {"e3"}}}), "");
    EXPECT_NE(with({{"method", "oracle"}}).find("'oracle_support'"), std::string::npos);
    EXPECT_NE(with({{"lambda2", -1}}).find("'lambda2'"), std::string::npos);
    EXPECT_NE(with({{"lambda2", "big"}}).find("'lambda2'"), std::string::npos);
    EXPECT_NE(with({{"trim_fraction", 0.5}}).find("'trim_fraction'"), std::string::npos);
    EXPECT_NE(with({{"support_threshold", 1.0}}).find("'support_threshold'"), std::string::npos);
    EXPECT_NE(with({{"aggregator", "mode"}}).find("'aggregator'"), std::string::npos);
    EXPECT_NE(with({{"seed", -3}}).find("'seed'"), std::string::npos);
    EXPECT_NE(with({{"n_inits", 2.5}}).find("'n_inits'"), std::string::npos);
    EXPECT_NE(with({{"standardize", 1}}).find("'standardize'"), std::string::npos);
    EXPECT_NE(message_of([] { parse_run_config_text("{\"method\":"); }).find("invalid JSON"), std::string::npos);
    EXPECT_NE(message_of([] { parse_run_config(nlohmann::json::array()); }), "");
}

TEST(Config, EchoParsesBackToTheSameConfig) {
    const nlohmann::json j = {{"method", "robust-film"},
                              {"link", "logit"},
                              {"lambda1_grid", {50, 75}},
                              {"val_envs", {"env_3"}},
                              {"J", {"x1", 2}},
                              {"aggregator", "trimmed-mean"},
                              {"trim_fraction", 0.2},
                              {"seed", 99},
                              {"standardize", true}};
    const auto c = parse_run_config(j);
    const auto echo = run_config_to_json(c);
    const auto again = parse_run_config(nlohmann::json::parse(echo.dump()));
    EXPECT_EQ(run_config_to_json(again).dump(), echo.dump());
    EXPECT_EQ(again.seed, std::optional<std::uint64_t>(99));
    EXPECT_EQ(again.lambda1_grid, (std::vector<double>{50, 75}));
    ASSERT_EQ(again.exogenous.size(), 2u);
    EXPECT_EQ(std::get<std::string>(again.exogenous[0]), "x1");
    EXPECT_EQ(std::get<std::size_t>(again.exogenous[1]), 2u);
}

TEST(Config, FeatureReferences) {
    std::mt19937_64 rng(2);
    const auto data = oracle::random_data(rng, false, 2, 4, 5);
    EXPECT_EQ(resolve_features({std::string("x4"), std::size_t{1}, std::size_t{4}}, data, "J"), (IndexSet{0, 3}));
    EXPECT_NE(message_of([&] { resolve_features({std::string("z")}, data, "J"); }).find("unknown feature 'z'"),
              std::string::npos);
    EXPECT_NE(message_of([&] { resolve_features({std::size_t{6}}, data, "J"); }).find("exceeds p = 5"),
              std::string::npos);
}

TEST(Result, JsonRoundTrip) {
    FitResult r;
    r.method_tag = "film";
    r.a_hat = (Vector(3) << 1.0, 0.0, 0.5).finished();
    r.b_hat = (Vector(3) << 2.0, 7.0, -4.0).finished();
    r.beta_hat = r.a_hat.cwiseProduct(r.b_hat);
    r.env_ids = {"e1", "e2"};
    r.theta_hat = (Vector(2) << 0.1, -0.2).finished();
    r.selected_support = {0, 2};
    r.objective_trace = {3.0, 2.0, 1.5};
    r.converged = true;
    r.chosen_lambdas = Penalties{75.0, 0.1};
    const std::vector<std::string> names{"x1", "x2", "x3"};
    RunConfig cfg;
    const auto j = result_to_json(r, names, cfg, 5, 0.25);
    EXPECT_EQ(j["theta_hat"]["e2"], -0.2);
    EXPECT_EQ(j["chosen_lambdas"]["lambda1"], 75.0);
    EXPECT_EQ(j["seed"], 5);
    EXPECT_EQ(j["selected_support"], nlohmann::ordered_json({"x1", "x3"}));
    const auto back = load_result(j.dump(2));
    EXPECT_EQ(back.names, names);
    EXPECT_EQ(back.beta_hat, r.beta_hat);
    EXPECT_EQ(back.selected_support, r.selected_support);
    EXPECT_EQ(back.method_tag, "film");
    EXPECT_NE(message_of([] { load_result("{}"); }).find("beta_hat"), std::string::npos);
    EXPECT_NE(message_of([] { load_result(R"({"beta_hat":{"x1":1},"selected_support":["x9"]})"); }).find("x9"),
              std::string::npos);
}

TEST(Runner, PooledOnOneEnvironmentIsLeastSquares) {
    std::mt19937_64 rng(3);
    const auto data = oracle::random_data(rng, false, 1, 40, 3);
    const auto c = parse_run_config({{"method", "pooled"}, {"seed", 1}});
    const auto out = run_configured_fit(data, c);
    const auto& env = data[0];
    Matrix design(env.x.rows(), 4);
    design << env.x, Vector::Ones(env.x.rows());
    const Vector coef = design.colPivHouseholderQr().solve(env.y);
    EXPECT_LE((out.result.beta_hat - coef.head(3)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(out.result.theta_hat[0], coef[3], 1e-6);
    EXPECT_EQ(out.seed, 1u);
}

TEST(Runner, StandardizingDoesNotChangeThePooledFit) {
    // pooled least squares is equivariant under affine rescaling of features
    std::mt19937_64 rng(4);
    const auto data = oracle::random_data(rng, false, 2, 30, 3);
    auto c = parse_run_config({{"method", "pooled"}, {"seed", 1}});
    const auto raw = run_configured_fit(data, c).result;
    c.standardize = true;
    const auto z = run_configured_fit(data, c).result;
    EXPECT_LE((raw.beta_hat - z.beta_hat).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((raw.theta_hat - z.theta_hat).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Runner, UnknownEnvironmentsAreRejected) {
    std::mt19937_64 rng(5);
    const auto data = oracle::random_data(rng, false, 2, 10, 2);
    const auto c = parse_run_config({{"method", "film"}, {"val_envs", {"nowhere"}}});
    EXPECT_NE(message_of([&] { run_configured_fit(data, c); }).find("'nowhere'"), std::string::npos);
    const auto all_val = parse_run_config({{"method", "film"}, {"val_envs", {"e1", "e2"}}});
    EXPECT_NE(message_of([&] { run_configured_fit(data, all_val); }).find("no training"), std::string::npos);
}
