#ifndef INVGLM_AGGREGATOR_HPP
#define INVGLM_AGGREGATOR_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace invglm {

enum class AggregatorKind { Mean, Median, TrimmedMean };

/// Centrality measure over per-environment values.
///
/// Besides the value, `apply` reports the weight each input carries in the
/// result. For Median this is one-hot on the middle order statistic (split
/// 0.5/0.5 between the two central ones for even counts), which doubles as a
/// subgradient selector at ties.
class Aggregator {
public:
    struct Result {
        double value = 0.0;
        Eigen::VectorXd weights;
    };

    static Aggregator mean() { return Aggregator(AggregatorKind::Mean, 0.0); }
    static Aggregator median() { return Aggregator(AggregatorKind::Median, 0.0); }
    static Aggregator trimmed_mean(double trim_fraction) {
        require(trim_fraction >= 0.0 && trim_fraction < 0.5,
                "trim_fraction must lie in [0, 0.5), got " + std::to_string(trim_fraction));
        return Aggregator(AggregatorKind::TrimmedMean, trim_fraction);
    }

    AggregatorKind kind() const { return kind_; }
    double trim_fraction() const { return trim_; }
    bool is_mean() const { return kind_ == AggregatorKind::Mean; }

    std::string name() const {
        switch (kind_) {
            case AggregatorKind::Mean: return "mean";
            case AggregatorKind::Median: return "median";
            case AggregatorKind::TrimmedMean: return "trimmed-mean";
        }
        return "?";
    }

    Result apply(std::span<const double> v) const {
        require(!v.empty(), "aggregator applied to an empty set");
        const std::size_t m = v.size();
        Result r;
        r.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        if (kind_ == AggregatorKind::Mean) {
            double acc = 0.0;
            for (double x : v) acc += x;
            r.value = acc / static_cast<double>(m);
            r.weights.setConstant(1.0 / static_cast<double>(m));
            return r;
        }
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        if (kind_ == AggregatorKind::Median) {
            const std::size_t lo = order[(m - 1) / 2], hi = order[m / 2];
            if (lo == hi) {
                r.value = v[lo];
                r.weights[static_cast<Eigen::Index>(lo)] = 1.0;
            } else {
                // even length: midpoint of the two central order statistics
                r.value = 0.5 * (v[lo] + v[hi]);
                r.weights[static_cast<Eigen::Index>(lo)] = 0.5;
                r.weights[static_cast<Eigen::Index>(hi)] = 0.5;
            }
            return r;
        }
        const auto k = static_cast<std::size_t>(trim_ * static_cast<double>(m));
        const std::size_t kept = m - 2 * k;
        double acc = 0.0;
        for (std::size_t i = k; i < m - k; ++i) {
            acc += v[order[i]];
            r.weights[static_cast<Eigen::Index>(order[i])] = 1.0 / static_cast<double>(kept);
        }
        r.value = acc / static_cast<double>(kept);
        return r;
    }

    double operator()(std::span<const double> v) const { return apply(v).value; }

private:
    Aggregator(AggregatorKind k, double t) : kind_(k), trim_(t) {}
    AggregatorKind kind_;
    double trim_;
};

inline Aggregator parse_aggregator(const std::string& name, double trim_fraction = 0.1) {
    if (name == "mean") return Aggregator::mean();
    if (name == "median") return Aggregator::median();
    if (name == "trimmed-mean" || name == "trimmed_mean") return Aggregator::trimmed_mean(trim_fraction);
    throw ContractError("unknown aggregator '" + name + "' (expected mean, median or trimmed-mean)");
}

}  // namespace invglm

#endif
