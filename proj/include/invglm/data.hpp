#ifndef INVGLM_DATA_HPP
#define INVGLM_DATA_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "link.hpp"

namespace invglm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<std::size_t>;

/// One environment: n_e observations of p covariates and an outcome.
struct EnvironmentData {
    std::string env_id;
    Matrix x;
    Vector y;

    EnvironmentData() = default;
    EnvironmentData(std::string id, Matrix design, Vector outcome)
        : env_id(std::move(id)), x(std::move(design)), y(std::move(outcome)) {
        require(x.rows() >= 1, "environment '" + env_id + "' has no observations");
        require(x.rows() == y.size(), "environment '" + env_id + "': X has " +
                                          std::to_string(x.rows()) + " rows but y has " +
                                          std::to_string(y.size()) + " entries");
        require(x.allFinite(), "environment '" + env_id + "': X contains non-finite entries");
        require(y.allFinite(), "environment '" + env_id + "': y contains non-finite entries");
    }

    std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
    std::size_t p() const { return static_cast<std::size_t>(x.cols()); }

    void check_outcomes(LinkFamily link) const {
        if (link.is_identity()) return;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] != 0.0 && y[i] != 1.0)
                throw ContractError("environment '" + env_id +
                                    "': logistic outcomes must be 0 or 1 (row " +
                                    std::to_string(i) + ")");
        }
    }
};

inline std::vector<std::string> default_feature_names(std::size_t p) {
    std::vector<std::string> names;
    names.reserve(p);
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

/// Ordered collection of environments sharing one feature space.
class MultiEnvData {
public:
    MultiEnvData() = default;
    explicit MultiEnvData(std::vector<EnvironmentData> envs, std::vector<std::string> names = {})
        : envs_(std::move(envs)), names_(std::move(names)) {
        require(!envs_.empty(), "multi-environment data needs at least one environment");
        const std::size_t p = envs_.front().p();
        if (names_.empty()) names_ = default_feature_names(p);
        require(names_.size() == p, "feature_names has " + std::to_string(names_.size()) +
                                        " entries but X has " + std::to_string(p) + " columns");
        std::set<std::string> seen;
        for (const auto& e : envs_) {
            require(e.p() == p, "environment '" + e.env_id + "' has " + std::to_string(e.p()) +
                                    " columns, expected " + std::to_string(p));
            require(seen.insert(e.env_id).second, "duplicate env_id '" + e.env_id + "'");
        }
    }

    std::size_t size() const { return envs_.size(); }
    std::size_t p() const { return names_.size(); }
    std::size_t n_total() const {
        std::size_t n = 0;
        for (const auto& e : envs_) n += e.n();
        return n;
    }
    const EnvironmentData& operator[](std::size_t e) const { return envs_[e]; }
    const std::vector<EnvironmentData>& environments() const { return envs_; }
    const std::vector<std::string>& feature_names() const { return names_; }
    auto begin() const { return envs_.begin(); }
    auto end() const { return envs_.end(); }

    std::vector<std::string> env_ids() const {
        std::vector<std::string> ids;
        for (const auto& e : envs_) ids.push_back(e.env_id);
        return ids;
    }

    bool contains(const std::string& id) const {
        return std::any_of(envs_.begin(), envs_.end(),
                           [&](const EnvironmentData& e) { return e.env_id == id; });
    }

    std::size_t index_of(const std::string& id) const {
        for (std::size_t e = 0; e < envs_.size(); ++e)
            if (envs_[e].env_id == id) return e;
        throw ContractError("unknown env_id '" + id + "'");
    }

    // Environments in the order given by `ids`.
    MultiEnvData subset(const std::vector<std::string>& ids) const {
        std::vector<EnvironmentData> out;
        for (const auto& id : ids) out.push_back(envs_[index_of(id)]);
        return MultiEnvData(std::move(out), names_);
    }

    MultiEnvData select_columns(const IndexSet& cols) const {
        std::vector<EnvironmentData> out;
        std::vector<std::string> names;
        for (auto j : cols) {
            require(j < p(), "column index " + std::to_string(j) + " out of range (p = " +
                                 std::to_string(p()) + ")");
            names.push_back(names_[j]);
        }
        for (const auto& e : envs_) {
            Matrix x(e.x.rows(), static_cast<Eigen::Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k)
                x.col(static_cast<Eigen::Index>(k)) = e.x.col(static_cast<Eigen::Index>(cols[k]));
            out.emplace_back(e.env_id, std::move(x), e.y);
        }
        return MultiEnvData(std::move(out), std::move(names));
    }

    void check_outcomes(LinkFamily link) const {
        for (const auto& e : envs_) e.check_outcomes(link);
    }

    std::size_t total_rows() const {
        std::size_t n = 0;
        for (const auto& e : envs_) n += e.n();
        return n;
    }

private:
    std::vector<EnvironmentData> envs_;
    std::vector<std::string> names_;
};

inline void check_index_set(const IndexSet& s, std::size_t p, const std::string& what) {
    for (auto j : s)
        require(j < p, what + " contains index " + std::to_string(j) + " but p = " +
                           std::to_string(p));
}

}  // namespace invglm

#endif
