#ifndef INVGLM_LINK_HPP
#define INVGLM_LINK_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "errors.hpp"

namespace invglm {

enum class LinkKind { Identity, Logit };

/// Canonical link family described through its cumulant function psi.
///
/// The mean function is psi' (the inverse link) and the variance function is
/// psi''. Logit evaluations are overflow safe for any finite eta.
class LinkFamily {
public:
    constexpr LinkFamily() = default;
    constexpr explicit LinkFamily(LinkKind kind) : kind_(kind) {}

    static constexpr LinkFamily identity() { return LinkFamily(LinkKind::Identity); }
    static constexpr LinkFamily logit() { return LinkFamily(LinkKind::Logit); }

    constexpr LinkKind kind() const { return kind_; }
    constexpr bool is_identity() const { return kind_ == LinkKind::Identity; }

    double psi(double eta) const {
        if (kind_ == LinkKind::Identity) return 0.5 * eta * eta;
        // softplus
        return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
    }

    // psi and psi' together, sharing one exponential for the logit link.
    std::pair<double, double> psi_and_mean(double eta) const {
        if (kind_ == LinkKind::Identity) return {0.5 * eta * eta, eta};
        const double e = std::exp(-std::abs(eta));
        const double mu = eta >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        return {std::max(eta, 0.0) + std::log1p(e), mu};
    }

    double mean(double eta) const {
        if (kind_ == LinkKind::Identity) return eta;
        return expit(eta);
    }

    double variance(double eta) const {
        if (kind_ == LinkKind::Identity) return 1.0;
        const double mu = expit(eta);
        return mu * (1.0 - mu);
    }

    // Derivative of the variance function (psi''').
    double variance_slope(double eta) const {
        if (kind_ == LinkKind::Identity) return 0.0;
        const double mu = expit(eta);
        return mu * (1.0 - mu) * (1.0 - 2.0 * mu);
    }

    std::string_view name() const { return kind_ == LinkKind::Identity ? "linear" : "logistic"; }

    static double expit(double eta) {
        if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
        const double e = std::exp(eta);
        return e / (1.0 + e);
    }

    friend constexpr bool operator==(LinkFamily, LinkFamily) = default;

private:
    LinkKind kind_ = LinkKind::Identity;
};

// Accepts "linear"/"identity" and "logistic"/"logit".
inline LinkFamily parse_link(std::string_view s) {
    if (s == "linear" || s == "identity") return LinkFamily::identity();
    if (s == "logistic" || s == "logit") return LinkFamily::logit();
    throw ContractError("unknown link '" + std::string(s) + "' (expected linear or logistic)");
}

}  // namespace invglm

#endif
