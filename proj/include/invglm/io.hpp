#ifndef INVGLM_IO_HPP
#define INVGLM_IO_HPP

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "aggregator.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "link.hpp"

namespace invglm {

// --- Files ------------------------------------------------------------------

/// Writes `content` to a sibling temporary file and renames it over `path`, so
/// readers never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw ContractError("cannot write '" + path.string() + "': directory does not exist");
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ContractError("cannot write '" + path.string() + "': open failed");
        out << content;
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp, ec);
            throw ContractError("cannot write '" + path.string() + "': write failed");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw ContractError("cannot write '" + path.string() + "': rename failed");
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Shortest text that parses back to the same double; never more than 17
// significant digits.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// --- Dataset CSV ------------------------------------------------------------

inline std::string dataset_to_csv(const MultiEnvData& data) {
    std::string out = "env_id,y";
    for (const auto& name : data.feature_names()) out += "," + name;
    out += "\n";
    for (const auto& env : data) {
        for (Eigen::Index i = 0; i < env.x.rows(); ++i) {
            out += env.env_id;
            out += ",";
            out += format_double(env.y[i]);
            for (Eigen::Index j = 0; j < env.x.cols(); ++j) {
                out += ",";
                out += format_double(env.x(i, j));
            }
            out += "\n";
        }
    }
    return out;
}

inline void write_dataset_csv(const std::filesystem::path& path, const MultiEnvData& data) {
    write_file_atomic(path, dataset_to_csv(data));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline double parse_number(const std::string& tok, std::size_t line_no, const std::string& column) {
    const auto where = [&] { return "line " + std::to_string(line_no) + ", column '" + column + "'"; };
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != last)
        throw ContractError(where() + ": '" + tok + "' is not a number");
    if (!std::isfinite(v)) throw ContractError(where() + ": non-finite value '" + tok + "'");
    return v;
}

}  // namespace detail

/// Parses the dataset format: header `env_id,y,x1,...,xp`, one row per
/// observation. Environments keep their order of first appearance.
inline MultiEnvData dataset_from_csv(const std::string& text, const std::string& source = "dataset") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ContractError(source + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "env_id" || header[1] != "y")
        throw ContractError(source + ": header must be 'env_id,y,x1,...,xp'");
    const std::size_t p = header.size() - 2;
    for (std::size_t j = 0; j < p; ++j)
        if (header[j + 2] != "x" + std::to_string(j + 1))
            throw ContractError(source + ": header column " + std::to_string(j + 3) + " is '" + header[j + 2] +
                                "', expected 'x" + std::to_string(j + 1) + "'");

    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> rows;  // id -> (y, x row-major)
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tok = detail::split_csv_line(line);
        if (tok.size() != p + 2)
            throw ContractError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(tok.size()) +
                                " fields, expected " + std::to_string(p + 2));
        if (tok[0].empty()) throw ContractError(source + ": line " + std::to_string(line_no) + ": empty env_id");
        auto [it, fresh] = rows.try_emplace(tok[0]);
        if (fresh) order.push_back(tok[0]);
        it->second.first.push_back(detail::parse_number(tok[1], line_no, "y"));
        for (std::size_t j = 0; j < p; ++j)
            it->second.second.push_back(detail::parse_number(tok[j + 2], line_no, header[j + 2]));
    }
    if (order.empty()) throw ContractError(source + ": no data rows");

    std::vector<EnvironmentData> envs;
    for (const auto& id : order) {
        const auto& [ys, xs] = rows.at(id);
        const auto n = static_cast<Eigen::Index>(ys.size());
        Matrix x(n, static_cast<Eigen::Index>(p));
        Vector y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            y[i] = ys[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < p; ++j)
                x(i, static_cast<Eigen::Index>(j)) = xs[static_cast<std::size_t>(i) * p + j];
        }
        envs.emplace_back(id, std::move(x), std::move(y));
    }
    return MultiEnvData(std::move(envs));
}

inline MultiEnvData read_dataset_csv(const std::filesystem::path& path) {
    return dataset_from_csv(read_file(path), path.string());
}

// --- Run configuration ------------------------------------------------------

enum class FitMethod { Film, RobustFilm, Eills, Coco, Pooled, Oracle };

inline std::string fit_method_name(FitMethod m) {
    switch (m) {
        case FitMethod::Film: return "film";
        case FitMethod::RobustFilm: return "robust-film";
        case FitMethod::Eills: return "eills";
        case FitMethod::Coco: return "coco";
        case FitMethod::Pooled: return "pooled";
        case FitMethod::Oracle: return "oracle";
    }
    return "?";
}

inline FitMethod parse_fit_method(const std::string& s) {
    for (FitMethod m : {FitMethod::Film, FitMethod::RobustFilm, FitMethod::Eills, FitMethod::Coco, FitMethod::Pooled,
                        FitMethod::Oracle})
        if (fit_method_name(m) == s) return m;
    throw ContractError("method: unknown value '" + s + "' (film, robust-film, eills, coco, pooled, oracle)");
}

// A feature given either by name or by 1-based position.
using FeatureRef = std::variant<std::string, std::size_t>;

struct RunConfig {
    FitMethod method = FitMethod::Film;
    std::string link = "linear";
    std::optional<double> lambda1;
    std::vector<double> lambda1_grid;
    double lambda2 = 0.1;
    std::vector<FeatureRef> exogenous;  // "J"
    std::string aggregator = "median";  // robust-film only
    double trim_fraction = 0.1;
    std::vector<std::string> train_envs;  // empty: every environment not used for validation
    std::vector<std::string> val_envs;
    std::size_t n_inits = 30;
    std::optional<std::uint64_t> seed;
    std::string validation = "objective";  // or "pooled-loss"
    std::size_t max_outer_iter = 100;
    double outer_tol = 1e-6;
    std::size_t max_inner_iter = 500;
    double grad_tol = 1e-7;
    double f_rel_tol = 1e-10;
    double support_threshold = 0.05;
    bool standardize = false;
    double ridge = 0.0;                     // pooled
    std::size_t max_p = kEillsDefaultMaxP;  // eills
    std::size_t n_starts = 5;               // coco
    std::vector<FeatureRef> oracle_support;
    std::vector<std::string> inlier_envs;  // oracle; empty means all
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void bad_field(const std::string& key, const std::string& why) {
    throw ContractError("config field '" + key + "': " + why);
}

inline double get_number(const json& v, const std::string& key) {
    if (!v.is_number()) bad_field(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad_field(key, "must be finite");
    return d;
}

// Integers built in code are signed even when non-negative; parsed text is unsigned.
inline bool is_nonneg_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

inline std::size_t get_count(const json& v, const std::string& key) {
    if (!is_nonneg_integer(v)) bad_field(key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

inline std::string get_string(const json& v, const std::string& key) {
    if (!v.is_string()) bad_field(key, "expected a string");
    return v.get<std::string>();
}

inline std::vector<std::string> get_strings(const json& v, const std::string& key) {
    if (!v.is_array()) bad_field(key, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(get_string(e, key));
    return out;
}

inline std::vector<FeatureRef> get_features(const json& v, const std::string& key) {
    if (!v.is_array()) bad_field(key, "expected an array of feature names or 1-based indices");
    std::vector<FeatureRef> out;
    for (const auto& e : v) {
        if (e.is_string()) out.emplace_back(e.get<std::string>());
        else if (is_nonneg_integer(e) && e.get<std::size_t>() >= 1) out.emplace_back(e.get<std::size_t>());
        else bad_field(key, "entries must be feature names or 1-based indices");
    }
    return out;
}

inline json features_to_json(const std::vector<FeatureRef>& refs) {
    json out = json::array();
    for (const auto& r : refs) {
        if (std::holds_alternative<std::string>(r)) out.push_back(std::get<std::string>(r));
        else out.push_back(std::get<std::size_t>(r));
    }
    return out;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::bad_field;
    if (!j.is_object()) throw ContractError("config must be a JSON object");
    RunConfig c;
    bool have_method = false;
    for (const auto& [key, v] : j.items()) {
        if (key == "method") c.method = parse_fit_method(detail::get_string(v, key)), have_method = true;
        else if (key == "link") c.link = detail::get_string(v, key);
        else if (key == "lambda1") c.lambda1 = detail::get_number(v, key);
        else if (key == "lambda1_grid") {
            if (!v.is_array() || v.empty()) bad_field(key, "expected a non-empty array of numbers");
            for (const auto& e : v) c.lambda1_grid.push_back(detail::get_number(e, key));
        } else if (key == "lambda2") c.lambda2 = detail::get_number(v, key);
        else if (key == "J") c.exogenous = detail::get_features(v, key);
        else if (key == "aggregator") c.aggregator = detail::get_string(v, key);
        else if (key == "trim_fraction") c.trim_fraction = detail::get_number(v, key);
        else if (key == "train_envs") c.train_envs = detail::get_strings(v, key);
        else if (key == "val_envs") c.val_envs = detail::get_strings(v, key);
        else if (key == "n_inits") c.n_inits = detail::get_count(v, key);
        else if (key == "seed") {
            if (!detail::is_nonneg_integer(v)) bad_field(key, "expected a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (key == "validation") c.validation = detail::get_string(v, key);
        else if (key == "max_outer_iter") c.max_outer_iter = detail::get_count(v, key);
        else if (key == "outer_tol") c.outer_tol = detail::get_number(v, key);
        else if (key == "max_inner_iter") c.max_inner_iter = detail::get_count(v, key);
        else if (key == "grad_tol") c.grad_tol = detail::get_number(v, key);
        else if (key == "f_rel_tol") c.f_rel_tol = detail::get_number(v, key);
        else if (key == "support_threshold") c.support_threshold = detail::get_number(v, key);
        else if (key == "standardize") {
            if (!v.is_boolean()) bad_field(key, "expected true or false");
            c.standardize = v.get<bool>();
        } else if (key == "ridge") c.ridge = detail::get_number(v, key);
        else if (key == "max_p") c.max_p = detail::get_count(v, key);
        else if (key == "n_starts") c.n_starts = detail::get_count(v, key);
        else if (key == "oracle_support") c.oracle_support = detail::get_features(v, key);
        else if (key == "inlier_envs") c.inlier_envs = detail::get_strings(v, key);
        else throw ContractError("config field '" + key + "': unknown key");
    }
    if (!have_method) throw ContractError("config field 'method': required");
    try {
        parse_link(c.link);
    } catch (const ContractError& e) {
        bad_field("link", e.what());
    }
    if (c.lambda1 && !c.lambda1_grid.empty()) bad_field("lambda1", "give either lambda1 or lambda1_grid, not both");
    if (c.lambda1 && *c.lambda1 < 0.0) bad_field("lambda1", "must be >= 0");
    for (double l : c.lambda1_grid)
        if (l < 0.0) bad_field("lambda1_grid", "entries must be >= 0");
    if (c.lambda2 < 0.0) bad_field("lambda2", "must be >= 0");
    if (c.aggregator != "mean" && c.aggregator != "median" && c.aggregator != "trimmed-mean")
        bad_field("aggregator", "expected mean, median or trimmed-mean");
    if (!(c.trim_fraction >= 0.0 && c.trim_fraction < 0.5)) bad_field("trim_fraction", "must lie in [0, 0.5)");
    if (c.validation != "objective" && c.validation != "pooled-loss")
        bad_field("validation", "expected objective or pooled-loss");
    if (c.max_outer_iter < 1) bad_field("max_outer_iter", "must be >= 1");
    if (c.max_inner_iter < 1) bad_field("max_inner_iter", "must be >= 1");
    if (c.outer_tol < 0.0) bad_field("outer_tol", "must be >= 0");
    if (c.grad_tol < 0.0) bad_field("grad_tol", "must be >= 0");
    if (c.f_rel_tol < 0.0) bad_field("f_rel_tol", "must be >= 0");
    if (!(c.support_threshold > 0.0 && c.support_threshold < 1.0))
        bad_field("support_threshold", "must lie in (0, 1)");
    if (c.ridge < 0.0) bad_field("ridge", "must be >= 0");
    if (c.n_starts < 1) bad_field("n_starts", "must be >= 1");
    const bool film_family = c.method == FitMethod::Film || c.method == FitMethod::RobustFilm;
    if (film_family && c.val_envs.empty() && !c.lambda1_grid.empty())
        bad_field("lambda1_grid", "a grid needs val_envs to choose from");
    if (c.method == FitMethod::Oracle && c.oracle_support.empty())
        bad_field("oracle_support", "required for method oracle");
    return c;
}

inline RunConfig parse_run_config_text(const std::string& text, const std::string& source = "config") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ContractError(source + ": invalid JSON: " + e.what());
    }
    return parse_run_config(j);
}

/// Canonical JSON form of a configuration; parse_run_config accepts it back.
inline nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["method"] = fit_method_name(c.method);
    j["link"] = c.link;
    if (c.lambda1) j["lambda1"] = *c.lambda1;
    if (!c.lambda1_grid.empty()) j["lambda1_grid"] = c.lambda1_grid;
    j["lambda2"] = c.lambda2;
    j["J"] = detail::features_to_json(c.exogenous);
    j["aggregator"] = c.aggregator;
    j["trim_fraction"] = c.trim_fraction;
    j["train_envs"] = c.train_envs;
    j["val_envs"] = c.val_envs;
    j["n_inits"] = c.n_inits;
    if (c.seed) j["seed"] = *c.seed;
    j["validation"] = c.validation;
    j["max_outer_iter"] = c.max_outer_iter;
    j["outer_tol"] = c.outer_tol;
    j["max_inner_iter"] = c.max_inner_iter;
    j["grad_tol"] = c.grad_tol;
    j["f_rel_tol"] = c.f_rel_tol;
    j["support_threshold"] = c.support_threshold;
    j["standardize"] = c.standardize;
    j["ridge"] = c.ridge;
    j["max_p"] = c.max_p;
    j["n_starts"] = c.n_starts;
    j["oracle_support"] = detail::features_to_json(c.oracle_support);
    j["inlier_envs"] = c.inlier_envs;
    return j;
}

/// Resolves feature references against the dataset's names; returns sorted
/// 0-based indices.
inline IndexSet resolve_features(const std::vector<FeatureRef>& refs, const MultiEnvData& data,
                                 const std::string& field) {
    IndexSet out;
    const auto& names = data.feature_names();
    for (const auto& r : refs) {
        std::size_t idx = 0;
        if (std::holds_alternative<std::string>(r)) {
            const auto& name = std::get<std::string>(r);
            const auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end()) throw ContractError("config field '" + field + "': unknown feature '" + name + "'");
            idx = static_cast<std::size_t>(it - names.begin());
        } else {
            idx = std::get<std::size_t>(r) - 1;
            if (idx >= data.p())
                throw ContractError("config field '" + field + "': index " + std::to_string(idx + 1) +
                                    " exceeds p = " + std::to_string(data.p()));
        }
        out.push_back(idx);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// --- Result file ------------------------------------------------------------

inline nlohmann::ordered_json result_to_json(const FitResult& r, const std::vector<std::string>& names,
                                             const RunConfig& config, std::uint64_t seed, double wall_seconds) {
    using oj = nlohmann::ordered_json;
    const auto named = [&](const Vector& v) {
        oj o = oj::object();
        for (Eigen::Index j = 0; j < v.size(); ++j) o[names[static_cast<std::size_t>(j)]] = v[j];
        return o;
    };
    oj j;
    j["method_tag"] = r.method_tag;
    if (r.chosen_lambdas) j["chosen_lambdas"] = {{"lambda1", r.chosen_lambdas->lambda1}, {"lambda2", r.chosen_lambdas->lambda2}};
    else j["chosen_lambdas"] = nullptr;
    j["beta_hat"] = named(r.beta_hat);
    j["a_hat"] = named(r.a_hat);
    j["b_hat"] = named(r.b_hat);
    oj theta = oj::object();
    for (std::size_t e = 0; e < r.env_ids.size(); ++e) theta[r.env_ids[e]] = r.theta_hat[static_cast<Eigen::Index>(e)];
    j["theta_hat"] = theta;
    oj support = oj::array();
    for (auto k : r.selected_support) support.push_back(names[k]);
    j["selected_support"] = support;
    j["converged"] = r.converged;
    j["objective_trace"] = r.objective_trace;
    j["warnings"] = r.warnings;
    if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
    j["wall_time_seconds"] = wall_seconds;
    j["seed"] = seed;
    j["config"] = run_config_to_json(config);
    return j;
}

/// The parts of a result file needed for evaluation.
struct LoadedResult {
    std::vector<std::string> names;
    Vector beta_hat;
    IndexSet selected_support;
    std::string method_tag;
};

inline LoadedResult load_result(const std::string& text, const std::string& source = "result") {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw ContractError(source + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("beta_hat") || !j["beta_hat"].is_object())
        throw ContractError(source + ": field 'beta_hat' missing or not an object");
    LoadedResult out;
    out.method_tag = j.value("method_tag", "");
    std::vector<double> vals;
    for (const auto& [name, v] : j["beta_hat"].items()) {
        if (!v.is_number()) throw ContractError(source + ": beta_hat['" + name + "'] is not a number");
        out.names.push_back(name);
        vals.push_back(v.get<double>());
    }
    out.beta_hat = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    if (!j.contains("selected_support") || !j["selected_support"].is_array())
        throw ContractError(source + ": field 'selected_support' missing or not an array");
    for (const auto& s : j["selected_support"]) {
        if (!s.is_string()) throw ContractError(source + ": selected_support entries must be names");
        const auto it = std::find(out.names.begin(), out.names.end(), s.get<std::string>());
        if (it == out.names.end()) throw ContractError(source + ": selected feature '" + s.get<std::string>() + "' not in beta_hat");
        out.selected_support.push_back(static_cast<std::size_t>(it - out.names.begin()));
    }
    std::sort(out.selected_support.begin(), out.selected_support.end());
    return out;
}

}  // namespace invglm

#endif
