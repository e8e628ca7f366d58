#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corrgee/error.hpp"
#include "corrgee/links.hpp"
#include "corrgee/model_data.hpp"

namespace corrgee {

// var[R_jk] for a pair of Bernoulli(mu_j), Bernoulli(mu_k) variables with
// correlation rho.
inline double var_R(double mu_j, double mu_k, double rho) {
    const double s = mu_j * (1.0 - mu_j) * mu_k * (1.0 - mu_k);
    return 1.0 + (1.0 - 2.0 * mu_j) * (1.0 - 2.0 * mu_k) * rho / std::sqrt(s) - rho * rho;
}

// Per-cluster model quantities at a given (beta, alpha).
struct ClusterWork {
    Eigen::VectorXd mu;     // n_i marginal means
    Eigen::MatrixXd D;      // n_i x p, d mu / d beta
    Eigen::VectorXd rho;    // m_i modeled pair correlations
    Eigen::MatrixXd E;      // m_i x q, d rho / d alpha
    Eigen::VectorXd R;      // m_i sample correlations
    Eigen::VectorXd Wdiag;  // m_i var[R] weights (all 1 under make_v_one)
    Eigen::MatrixXd V;      // n_i x n_i working covariance A C(alpha) A
    Eigen::LLT<Eigen::MatrixXd> Vllt;  // cached factor of V
    Eigen::MatrixXd vinv_d;            // cached V^{-1} D
};

struct ThetaState {
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    int iteration = 0;
    Eigen::VectorXd last_delta;  // (p+q) update applied at this iteration
    int shrink_count = 0;        // modifications so far within this iteration
};

struct RangeViolation {
    std::string cluster_id;
    Eigen::Index j = 0, k = 0;  // 1-based unit indices within the cluster
    double mu_j = 0, mu_k = 0, rho = 0;
    double lower = 0, upper = 0;
};

struct RangeReport {
    int iteration = 0;
    std::vector<RangeViolation> violations;
};

namespace detail {

[[noreturn]] inline void mean_range_abort(LinkKind mean_link, const std::string& cluster_id,
                                          Eigen::Index obs, double mu) {
    std::string msg = "marginal mean outside (0,1): cluster '" + cluster_id + "', observation " +
                      std::to_string(obs + 1) + ", mu = " + std::to_string(mu) + ".";
    if (mean_link == LinkKind::Identity && mu <= 0.0) {
        msg += " With an identity mean link and negative means, a log or logit link is recommended.";
    } else if (mean_link == LinkKind::Log && mu >= 1.0) {
        msg += " With a log mean link and means above 1, the logit link is recommended.";
    }
    throw MeanRangeError(msg, cluster_id, static_cast<int>(obs + 1));
}

enum class EvalParts { MeanCorr, Full };

inline ClusterWork evaluate_cluster_impl(const Cluster& cluster, const Eigen::MatrixXd& zblock,
                                         const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                                         const FitConfig& config, EvalParts parts) {
    const Eigen::Index n = cluster.size();
    const Eigen::Index p = cluster.x.cols();
    const Eigen::Index m = zblock.rows();
    const Eigen::Index q = zblock.cols();

    ClusterWork w;
    w.mu.resize(n);
    w.D.resize(n, p);
    const Eigen::VectorXd eta = cluster.x * beta;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double mu = link_inverse(config.mean_link, eta[j]);
        if (!(mu > 0.0 && mu < 1.0)) mean_range_abort(config.mean_link, cluster.id, j, mu);
        w.mu[j] = mu;
        w.D.row(j) = link_dinv_from_value(config.mean_link, mu) * cluster.x.row(j);
    }

    w.rho.resize(m);
    w.E.resize(m, q);
    w.R.resize(m);
    w.Wdiag.resize(m);
    if (m > 0) {
        const Eigen::VectorXd zeta = zblock * alpha;
        Eigen::VectorXd sd(n);
        for (Eigen::Index j = 0; j < n; ++j) sd[j] = std::sqrt(w.mu[j] * (1.0 - w.mu[j]));
        Eigen::Index r = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index k = j + 1; k < n; ++k, ++r) {
                const double rho = link_inverse(config.corr_link, zeta[r]);
                w.rho[r] = rho;
                w.E.row(r) = link_dinv_from_value(config.corr_link, rho) * zblock.row(r);
                w.R[r] = (cluster.y[j] - w.mu[j]) * (cluster.y[k] - w.mu[k]) / (sd[j] * sd[k]);
                w.Wdiag[r] = config.make_v_one ? 1.0 : var_R(w.mu[j], w.mu[k], rho);
            }
        }
    }

    if (parts == EvalParts::Full) {
        w.V.resize(n, n);
        Eigen::Index r = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double sj = std::sqrt(w.mu[j] * (1.0 - w.mu[j]));
            w.V(j, j) = w.mu[j] * (1.0 - w.mu[j]);
            for (Eigen::Index k = j + 1; k < n; ++k, ++r) {
                const double sk = std::sqrt(w.mu[k] * (1.0 - w.mu[k]));
                w.V(j, k) = w.V(k, j) = sj * sk * w.rho[r];
            }
        }
        w.Vllt.compute(w.V);
        if (w.Vllt.info() != Eigen::Success) {
            throw SingularError("working covariance V not positive definite for cluster '" +
                                    cluster.id + "'",
                                cluster.id);
        }
        w.vinv_d = w.Vllt.solve(w.D);
    }
    return w;
}

}  // namespace detail

// Assembles mu, D, rho, E, R, W and the working covariance V for one cluster.
// Throws MeanRangeError when any mean leaves (0,1) and SingularError when V
// cannot be factored.
inline ClusterWork evaluate_cluster(const Cluster& cluster, const Eigen::MatrixXd& zblock,
                                    const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                                    const FitConfig& config) {
    return detail::evaluate_cluster_impl(cluster, zblock, beta, alpha, config,
                                         detail::EvalParts::Full);
}

// d R_jk / d beta', one row per pair in canonical order.  Derived from the
// definition of R_jk; validated against central finite differences.
inline Eigen::MatrixXd observed_dR_dbeta(const Cluster& cluster, const ClusterWork& w) {
    const Eigen::Index n = cluster.size();
    const Eigen::Index p = w.D.cols();
    Eigen::MatrixXd out(pair_count(n), p);
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double sj = w.mu[j] * (1.0 - w.mu[j]);
        const double ej = cluster.y[j] - w.mu[j];
        for (Eigen::Index k = j + 1; k < n; ++k, ++r) {
            const double sk = w.mu[k] * (1.0 - w.mu[k]);
            const double ek = cluster.y[k] - w.mu[k];
            const Eigen::RowVectorXd scale_term = (1.0 - 2.0 * w.mu[j]) / sj * w.D.row(j) +
                                                  (1.0 - 2.0 * w.mu[k]) / sk * w.D.row(k);
            out.row(r) = -(ej * w.D.row(k) + ek * w.D.row(j) + 0.5 * ej * ek * scale_term) /
                         std::sqrt(sj * sk);
        }
    }
    return out;
}

// E[d R_jk / d beta'] under the model: the centered first-order terms drop
// out and E[(Y_j-mu_j)(Y_k-mu_k)] = rho_jk sqrt(s_j s_k) scales the rest.
inline Eigen::MatrixXd expected_dR_dbeta(const Cluster& cluster, const ClusterWork& w) {
    const Eigen::Index n = cluster.size();
    const Eigen::Index p = w.D.cols();
    Eigen::MatrixXd out(pair_count(n), p);
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double sj = w.mu[j] * (1.0 - w.mu[j]);
        for (Eigen::Index k = j + 1; k < n; ++k, ++r) {
            const double sk = w.mu[k] * (1.0 - w.mu[k]);
            out.row(r) = -0.5 * w.rho[r] *
                         ((1.0 - 2.0 * w.mu[j]) / sj * w.D.row(j) +
                          (1.0 - 2.0 * w.mu[k]) / sk * w.D.row(k));
        }
    }
    return out;
}

// Pairs whose modeled correlation falls outside the feasible range implied by
// the two Bernoulli margins.  Reporting only; never throws.
inline std::vector<RangeViolation> frechet_check(const ClusterWork& w, const Cluster& cluster) {
    std::vector<RangeViolation> out;
    const Eigen::Index n = cluster.size();
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double psi_j = std::sqrt(w.mu[j] / (1.0 - w.mu[j]));
        for (Eigen::Index k = j + 1; k < n; ++k, ++r) {
            const double psi_k = std::sqrt(w.mu[k] / (1.0 - w.mu[k]));
            const double prod = psi_j * psi_k;
            const double lower = std::max(-prod, -1.0 / prod);
            const double upper = std::min(psi_j / psi_k, psi_k / psi_j);
            if (w.rho[r] < lower || w.rho[r] > upper) {
                out.push_back({cluster.id, j + 1, k + 1, w.mu[j], w.mu[k], w.rho[r], lower, upper});
            }
        }
    }
    return out;
}

// U_beta = sum_i w_i D_i' V_i^{-1} (y_i - mu_i),
// U_alpha = sum_i w_i E_i' W_i^{-1} (R_i - rho_i).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> score_equations(const ClusterDataset& data,
                                                                   const PairCovariates& pairs,
                                                                   const Eigen::VectorXd& beta,
                                                                   const Eigen::VectorXd& alpha,
                                                                   const FitConfig& config) {
    Eigen::VectorXd u_beta = Eigen::VectorXd::Zero(data.p);
    Eigen::VectorXd u_alpha = Eigen::VectorXd::Zero(pairs.q);
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork w = evaluate_cluster(c, pairs.blocks[i], beta, alpha, config);
        u_beta += c.weight * (w.D.transpose() * w.Vllt.solve(c.y - w.mu));
        if (w.R.size() > 0) {
            u_alpha += c.weight *
                       (w.E.transpose() * ((w.R - w.rho).cwiseQuotient(w.Wdiag)));
        }
    }
    return {std::move(u_beta), std::move(u_alpha)};
}

namespace detail {

inline Eigen::VectorXd spd_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                                 const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw SingularError(std::string(what) + " information matrix not positive definite");
    }
    return llt.solve(rhs);
}

// One mean-model half step: beta <- beta + (sum w D'V^{-1}D)^{-1} sum w D'V^{-1}(y-mu).
inline Eigen::VectorXd beta_update(const ClusterDataset& data, const PairCovariates& pairs,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                                   const FitConfig& config) {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(data.p, data.p);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(data.p);
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork w = evaluate_cluster(c, pairs.blocks[i], beta, alpha, config);
        info.noalias() += c.weight * (w.D.transpose() * w.vinv_d);
        score.noalias() += c.weight * (w.vinv_d.transpose() * (c.y - w.mu));
    }
    return spd_solve(info, score, "mean-model");
}

// One correlation-model half step at the given beta.
inline Eigen::VectorXd alpha_update(const ClusterDataset& data, const PairCovariates& pairs,
                                    const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                                    const FitConfig& config) {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(pairs.q, pairs.q);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(pairs.q);
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        if (c.size() < 2) continue;
        const ClusterWork w = evaluate_cluster_impl(c, pairs.blocks[i], beta, alpha, config,
                                                    EvalParts::MeanCorr);
        const Eigen::MatrixXd winv_e = w.Wdiag.cwiseInverse().asDiagonal() * w.E;
        info.noalias() += c.weight * (w.E.transpose() * winv_e);
        score.noalias() += c.weight * (winv_e.transpose() * (w.R - w.rho));
    }
    return spd_solve(info, score, "correlation-model");
}

}  // namespace detail

// Alternating update: beta by its own Fisher-scoring step, then alpha at the
// updated beta.  The alpha half is skipped entirely under fix_alpha.
inline ThetaState step_extended(const ThetaState& state, const ClusterDataset& data,
                                const PairCovariates& pairs, const FitConfig& config) {
    ThetaState next = state;
    const Eigen::VectorXd dbeta = detail::beta_update(data, pairs, state.beta, state.alpha, config);
    next.beta += dbeta;
    Eigen::VectorXd dalpha = Eigen::VectorXd::Zero(pairs.q);
    if (!config.fix_alpha) {
        dalpha = detail::alpha_update(data, pairs, next.beta, state.alpha, config);
        next.alpha += dalpha;
    }
    next.iteration = state.iteration + 1;
    next.last_delta.resize(data.p + pairs.q);
    next.last_delta << dbeta, dalpha;
    next.shrink_count = 0;
    return next;
}

// Joint Fisher-scoring update that carries the covariance between the two
// score equations through the lower-triangular information block, with the
// expected (not observed) d R / d beta.
inline ThetaState step_detailed(const ThetaState& state, const ClusterDataset& data,
                                const PairCovariates& pairs, const FitConfig& config) {
    const Eigen::Index p = data.p;
    const Eigen::Index q = pairs.q;
    Eigen::MatrixXd info_beta = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd info_alpha = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(q, p);  // sum w E'W^{-1} E[dR/dbeta]
    Eigen::VectorXd u_beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd u_alpha = Eigen::VectorXd::Zero(q);

    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork w = evaluate_cluster(c, pairs.blocks[i], state.beta, state.alpha, config);
        info_beta.noalias() += c.weight * (w.D.transpose() * w.vinv_d);
        u_beta.noalias() += c.weight * (w.vinv_d.transpose() * (c.y - w.mu));
        if (w.R.size() > 0) {
            const Eigen::MatrixXd winv_e = w.Wdiag.cwiseInverse().asDiagonal() * w.E;
            info_alpha.noalias() += c.weight * (w.E.transpose() * winv_e);
            u_alpha.noalias() += c.weight * (winv_e.transpose() * (w.R - w.rho));
            cross.noalias() +=
                c.weight * (winv_e.transpose() * expected_dR_dbeta(c, w));
        }
    }

    ThetaState next = state;
    const Eigen::VectorXd dbeta = detail::spd_solve(info_beta, u_beta, "mean-model");
    next.beta += dbeta;
    Eigen::VectorXd dalpha = Eigen::VectorXd::Zero(q);
    if (!config.fix_alpha) {
        dalpha = detail::spd_solve(info_alpha, cross * dbeta + u_alpha, "correlation-model");
        next.alpha += dalpha;
    }
    next.iteration = state.iteration + 1;
    next.last_delta.resize(p + q);
    next.last_delta << dbeta, dalpha;
    next.shrink_count = 0;
    return next;
}

inline constexpr int kMaxShrinkModifications = 20;

// One shrinking modification after a range violation.  A violation in the
// first iteration zeroes alpha under either mode; afterwards alpha shrinking
// scales alpha by 0.95 and theta shrinking backs the whole update off by
// 0.5^(r+1) of the last step.
inline ThetaState shrink_step(const ThetaState& state, ShrinkMode mode) {
    if (mode == ShrinkMode::None) throw ConfigError("shrink_step called with mode none");
    if (state.shrink_count >= kMaxShrinkModifications) {
        throw Error("range violations persist after " + std::to_string(kMaxShrinkModifications) +
                    " shrink modifications; estimates unreliable");
    }
    ThetaState next = state;
    if (state.iteration <= 1) {
        next.alpha.setZero();
    } else if (mode == ShrinkMode::Alpha) {
        next.alpha *= 0.95;
    } else {
        const double factor = std::pow(0.5, state.shrink_count + 1);
        const Eigen::Index p = state.beta.size();
        next.beta -= factor * state.last_delta.head(p);
        next.alpha -= factor * state.last_delta.tail(state.alpha.size());
    }
    next.shrink_count = state.shrink_count + 1;
    return next;
}

// ---------------------------------------------------------------------------
// Initial values
// ---------------------------------------------------------------------------

namespace detail {

// Independence-model IRLS (Fisher scoring) under the given mean link, with
// cluster frequency weights applied per observation.
inline Eigen::VectorXd independence_irls(const ClusterDataset& data, LinkKind link,
                                         const Eigen::VectorXd& start) {
    Eigen::VectorXd beta = start;
    for (int it = 0; it < 50; ++it) {
        Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(data.p, data.p);
        Eigen::VectorXd xtwz = Eigen::VectorXd::Zero(data.p);
        for (const auto& c : data.clusters) {
            const Eigen::VectorXd eta = c.x * beta;
            for (Eigen::Index j = 0; j < c.size(); ++j) {
                const double mu = link_inverse(link, eta[j]);
                const double d = link_dinv(link, eta[j]);
                const double var = mu * (1.0 - mu);
                if (!(var > 0.0) || !std::isfinite(d) || d == 0.0) {
                    throw Error("independence IRLS left the valid mean range");
                }
                const double wgt = c.weight * d * d / var;
                const double z = eta[j] + (c.y[j] - mu) / d;
                xtwx.noalias() += wgt * (c.x.row(j).transpose() * c.x.row(j));
                xtwz.noalias() += wgt * (c.x.row(j).transpose() * z);
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(xtwx);
        if (llt.info() != Eigen::Success) {
            throw SingularError("independence IRLS design matrix is singular");
        }
        const Eigen::VectorXd beta_new = llt.solve(xtwz);
        const double delta = (beta_new - beta).cwiseAbs().maxCoeff();
        beta = beta_new;
        if (delta < 1e-10) return beta;
    }
    return beta;
}

inline Eigen::VectorXd initial_beta(const ClusterDataset& data, const FitConfig& config) {
    if (config.start_beta) {
        if (config.start_beta->size() != data.p) {
            throw ConfigError("start_beta has " + std::to_string(config.start_beta->size()) +
                              " entries, expected " + std::to_string(data.p));
        }
        return *config.start_beta;
    }
    const Eigen::VectorXd beta_logit =
        independence_irls(data, LinkKind::Logit, Eigen::VectorXd::Zero(data.p));
    if (config.mean_link == LinkKind::Logit) return beta_logit;

    // Map the logistic solution through the target link: least squares of
    // g(mu_logit) on X seeds the IRLS; keep the seed if that IRLS fails.
    const Eigen::Index n = data.total_obs();
    Eigen::MatrixXd x_all(n, data.p);
    Eigen::VectorXd target(n);
    Eigen::Index row = 0;
    for (const auto& c : data.clusters) {
        const Eigen::VectorXd eta = c.x * beta_logit;
        for (Eigen::Index j = 0; j < c.size(); ++j, ++row) {
            x_all.row(row) = c.x.row(j);
            target[row] = link_forward(config.mean_link, link_inverse(LinkKind::Logit, eta[j]));
        }
    }
    const Eigen::VectorXd seed = x_all.colPivHouseholderQr().solve(target);
    try {
        return independence_irls(data, config.mean_link, seed);
    } catch (const Error&) {
        return seed;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Full fit
// ---------------------------------------------------------------------------

enum class FitStatus { Converged, MaxIterationsReached, MeanRangeAbort, ShrinkLimitAbort };

inline const char* fit_status_name(FitStatus s) {
    switch (s) {
        case FitStatus::Converged: return "converged";
        case FitStatus::MaxIterationsReached: return "max_iterations_reached";
        case FitStatus::MeanRangeAbort: return "mean_range_abort";
        case FitStatus::ShrinkLimitAbort: return "shrink_limit_abort";
    }
    return "?";
}

struct IterationInfo {
    int iteration = 0;
    double max_delta = 0.0;
    int shrink_count = 0;
};

// Converged model state: parameters plus the per-cluster quantities at those
// parameters.  Holds non-owning pointers; the dataset must outlive it.
struct FitState {
    const ClusterDataset* data = nullptr;
    const PairCovariates* pairs = nullptr;
    FitConfig config;
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    std::vector<ClusterWork> work;

    static FitState at(const ClusterDataset& data, const PairCovariates& pairs,
                       const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                       const FitConfig& config) {
        FitState s;
        s.data = &data;
        s.pairs = &pairs;
        s.config = config;
        s.beta = beta;
        s.alpha = alpha;
        s.work.reserve(data.clusters.size());
        for (size_t i = 0; i < data.clusters.size(); ++i) {
            s.work.push_back(evaluate_cluster(data.clusters[i], pairs.blocks[i], beta, alpha, config));
        }
        return s;
    }
};

struct FitCore {
    FitStatus status = FitStatus::MaxIterationsReached;
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    int iterations = 0;
    double final_delta = 0.0;
    std::vector<IterationInfo> trace;
    std::vector<RangeReport> range_reports;  // one entry per iteration that had violations
    std::string message;
    std::optional<FitState> state;  // present unless the fit aborted mid-iteration
};

namespace detail {

inline std::vector<RangeViolation> all_violations(const ClusterDataset& data,
                                                  const PairCovariates& pairs,
                                                  const Eigen::VectorXd& beta,
                                                  const Eigen::VectorXd& alpha,
                                                  const FitConfig& config) {
    std::vector<RangeViolation> out;
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork w =
            evaluate_cluster_impl(c, pairs.blocks[i], beta, alpha, config, EvalParts::MeanCorr);
        auto v = frechet_check(w, c);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

inline void validate_fit_inputs(const ClusterDataset& data, const PairCovariates& pairs,
                                const FitConfig& config) {
    if (data.clusters.empty()) throw ConfigError("dataset has no clusters");
    if (pairs.blocks.size() != data.clusters.size()) {
        throw ConfigError("pair-covariate blocks do not match cluster count");
    }
    if (config.max_iter < 1) throw ConfigError("max_iter must be positive");
    if (!(config.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (config.mean_link == LinkKind::FisherZ) {
        throw ConfigError("fisherz is a correlation link only");
    }
    if (config.shrink != ShrinkMode::None && config.corr_link != LinkKind::Identity) {
        throw ConfigError("parameter shrinking requires the identity correlation link");
    }
    if (config.start_alpha && config.start_alpha->size() != pairs.q) {
        throw ConfigError("start_alpha has " + std::to_string(config.start_alpha->size()) +
                          " entries, expected " + std::to_string(pairs.q));
    }
}

}  // namespace detail

// Runs the selected fitting algorithm to convergence.  Covariances,
// diagnostics and selection criteria are layered on top by fit() in fit.hpp.
inline FitCore fit_core(const ClusterDataset& data, const PairCovariates& pairs,
                        const FitConfig& config) {
    detail::validate_fit_inputs(data, pairs, config);

    FitCore result;
    ThetaState state;
    state.alpha = config.start_alpha ? *config.start_alpha
                                     : Eigen::VectorXd::Constant(pairs.q, 0.01);
    try {
        state.beta = detail::initial_beta(data, config);
    } catch (const MeanRangeError& e) {
        result.status = FitStatus::MeanRangeAbort;
        result.message = e.what();
        return result;
    }
    state.last_delta = Eigen::VectorXd::Zero(data.p + pairs.q);

    try {
        for (int s = 1; s <= config.max_iter; ++s) {
            const Eigen::VectorXd beta_prev = state.beta;
            const Eigen::VectorXd alpha_prev = state.alpha;

            state = config.detailed ? step_detailed(state, data, pairs, config)
                                    : step_extended(state, data, pairs, config);

            auto violations = detail::all_violations(data, pairs, state.beta, state.alpha, config);
            while (!violations.empty() && config.shrink != ShrinkMode::None) {
                if (state.shrink_count >= kMaxShrinkModifications) {
                    result.status = FitStatus::ShrinkLimitAbort;
                    result.message = "range violations persist after " +
                                     std::to_string(kMaxShrinkModifications) +
                                     " shrink modifications; estimates unreliable";
                    result.beta = state.beta;
                    result.alpha = state.alpha;
                    result.iterations = s;
                    result.range_reports.push_back({s, std::move(violations)});
                    return result;
                }
                state = shrink_step(state, config.shrink);
                violations = detail::all_violations(data, pairs, state.beta, state.alpha, config);
            }
            if (!violations.empty()) {
                result.range_reports.push_back({s, std::move(violations)});
            }

            const double db = (state.beta - beta_prev).cwiseAbs().maxCoeff();
            const double da =
                pairs.q > 0 ? (state.alpha - alpha_prev).cwiseAbs().maxCoeff() : 0.0;
            const double max_delta = std::max(db, da);
            result.trace.push_back({s, max_delta, state.shrink_count});
            result.iterations = s;
            result.final_delta = max_delta;
            if (max_delta < config.epsilon) {
                result.status = FitStatus::Converged;
                break;
            }
        }
    } catch (const MeanRangeError& e) {
        result.status = FitStatus::MeanRangeAbort;
        result.message = e.what();
        result.beta = state.beta;
        result.alpha = state.alpha;
        return result;
    }

    result.beta = state.beta;
    result.alpha = state.alpha;
    if (result.status != FitStatus::Converged && result.message.empty()) {
        result.message = "no convergence after " + std::to_string(result.iterations) +
                         " iterations; last max parameter change " +
                         std::to_string(result.final_delta);
    }
    result.state = FitState::at(data, pairs, result.beta, result.alpha, config);
    return result;
}

}  // namespace corrgee
