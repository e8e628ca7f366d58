#pragma once

#include <cmath>
#include <string>

#include "corrgee/error.hpp"

namespace corrgee {

// Link functions shared by the mean and correlation models.  FisherZ is only
// meaningful for correlations; the fit routine enforces that restriction.
enum class LinkKind { Identity, Log, Logit, FisherZ };

enum class LinkMode { Forward, Inverse, DInvDEta };

inline const char* link_name(LinkKind kind) {
    switch (kind) {
        case LinkKind::Identity: return "identity";
        case LinkKind::Log: return "log";
        case LinkKind::Logit: return "logit";
        case LinkKind::FisherZ: return "fisherz";
    }
    return "?";
}

inline LinkKind parse_link(const std::string& name) {
    if (name == "identity") return LinkKind::Identity;
    if (name == "log") return LinkKind::Log;
    if (name == "logit") return LinkKind::Logit;
    if (name == "fisherz") return LinkKind::FisherZ;
    throw ConfigError("unknown link function: '" + name + "'");
}

namespace detail {

[[noreturn]] inline void link_domain_error(LinkKind kind, LinkMode mode, double v) {
    const char* m = mode == LinkMode::Forward ? "forward"
                  : mode == LinkMode::Inverse ? "inverse"
                                              : "d_inv_d_eta";
    throw Error(std::string("link domain violation: ") + link_name(kind) + "/" + m +
                " at value " + std::to_string(v));
}

// Symmetric form: never exponentiates a positive argument, so no overflow for
// large |eta|; saturates to 0/1 only through floating-point rounding.
inline double logit_inverse(double eta) {
    if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

}  // namespace detail

// Evaluates the link g (Forward), its inverse g^{-1} (Inverse), or the
// derivative of the inverse d g^{-1}(eta)/d eta (DInvDEta, the weight that
// builds the D_i and E_i derivative matrices).
inline double link_eval(LinkKind kind, LinkMode mode, double v) {
    if (!std::isfinite(v)) detail::link_domain_error(kind, mode, v);
    switch (kind) {
        case LinkKind::Identity:
            return mode == LinkMode::DInvDEta ? 1.0 : v;
        case LinkKind::Log:
            switch (mode) {
                case LinkMode::Forward:
                    if (v <= 0.0) detail::link_domain_error(kind, mode, v);
                    return std::log(v);
                case LinkMode::Inverse: return std::exp(v);
                case LinkMode::DInvDEta: return std::exp(v);
            }
            break;
        case LinkKind::Logit:
            switch (mode) {
                case LinkMode::Forward:
                    if (v <= 0.0 || v >= 1.0) detail::link_domain_error(kind, mode, v);
                    return std::log(v / (1.0 - v));
                case LinkMode::Inverse: return detail::logit_inverse(v);
                case LinkMode::DInvDEta: {
                    const double mu = detail::logit_inverse(v);
                    return mu * (1.0 - mu);
                }
            }
            break;
        case LinkKind::FisherZ:
            switch (mode) {
                case LinkMode::Forward:
                    if (v <= -1.0 || v >= 1.0) detail::link_domain_error(kind, mode, v);
                    return std::atanh(v);
                case LinkMode::Inverse: return std::tanh(v);
                case LinkMode::DInvDEta: {
                    const double t = std::tanh(v);
                    return 1.0 - t * t;
                }
            }
            break;
    }
    detail::link_domain_error(kind, mode, v);
}

inline double link_forward(LinkKind kind, double v) { return link_eval(kind, LinkMode::Forward, v); }
inline double link_inverse(LinkKind kind, double eta) { return link_eval(kind, LinkMode::Inverse, eta); }
inline double link_dinv(LinkKind kind, double eta) { return link_eval(kind, LinkMode::DInvDEta, eta); }

// d g^{-1}/d eta expressed through the already-computed inverse value; avoids
// a second exponential in the per-cluster hot loops.
inline double link_dinv_from_value(LinkKind kind, double value) {
    switch (kind) {
        case LinkKind::Identity: return 1.0;
        case LinkKind::Log: return value;
        case LinkKind::Logit: return value * (1.0 - value);
        case LinkKind::FisherZ: return 1.0 - value * value;
    }
    return 1.0;
}

}  // namespace corrgee
