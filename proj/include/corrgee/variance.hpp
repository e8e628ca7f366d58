#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "corrgee/gee_core.hpp"

namespace corrgee {

// Robust (BC0) and bias-corrected (BC2) covariance blocks; cov_joint is only
// produced by the detailed method.
struct CovarianceSet {
    Eigen::MatrixXd cov_beta_bc0, cov_beta_bc2;    // p x p
    Eigen::MatrixXd cov_alpha_bc0, cov_alpha_bc2;  // q x q
    std::optional<Eigen::MatrixXd> cov_joint_bc0, cov_joint_bc2;  // (p+q) x (p+q)
};

namespace detail {

// Per-cluster sandwich ingredients at the converged parameters.
struct MeatScores {
    Eigen::MatrixXd bread_beta_inv;   // A = (sum w D'V^{-1}D)^{-1}
    Eigen::MatrixXd bread_alpha_inv;  // C = (sum w E'W^{-1}E)^{-1}
    std::vector<Eigen::VectorXd> s;        // D'V^{-1}(y-mu)
    std::vector<Eigen::VectorXd> t;        // E'W^{-1}(R-rho)
    std::vector<Eigen::VectorXd> s_bc2;    // (I - M_i A)^{-1} s_i
    std::vector<Eigen::VectorXd> t_bc2;    // (I - N_i C)^{-1} t_i
    std::vector<Eigen::MatrixXd> m;        // M_i = D'V^{-1}D
    std::vector<Eigen::MatrixXd> n;        // N_i = E'W^{-1}E
};

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw SingularError(std::string(what) + " bread matrix not positive definite");
    }
    return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

// The BC2 correction premultiplies cluster residuals by (I - H_i)^{-1} with
// H_{1i} = D A D'V^{-1} and H_{2i} = E C E'W^{-1}.  Because both leverages
// have rank at most p (resp. q), the corrected meat score collapses to
// (I - M_i A)^{-1} s_i, a parameter-dimension solve.
inline MeatScores meat_scores(const FitState& state) {
    const ClusterDataset& data = *state.data;
    const Eigen::Index p = data.p;
    const Eigen::Index q = state.pairs->q;
    MeatScores out;
    Eigen::MatrixXd bread_beta = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd bread_alpha = Eigen::MatrixXd::Zero(q, q);

    const size_t K = data.clusters.size();
    out.s.resize(K);
    out.t.resize(K);
    out.m.resize(K);
    out.n.resize(K);
    for (size_t i = 0; i < K; ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork& w = state.work[i];
        out.m[i] = w.D.transpose() * w.vinv_d;
        out.s[i] = w.vinv_d.transpose() * (c.y - w.mu);
        if (w.R.size() > 0) {
            const Eigen::VectorXd winv_r = (w.R - w.rho).cwiseQuotient(w.Wdiag);
            out.t[i] = w.E.transpose() * winv_r;
            out.n[i] = w.E.transpose() * (w.Wdiag.cwiseInverse().asDiagonal() * w.E);
        } else {
            out.t[i] = Eigen::VectorXd::Zero(q);
            out.n[i] = Eigen::MatrixXd::Zero(q, q);
        }
        bread_beta.noalias() += c.weight * out.m[i];
        bread_alpha.noalias() += c.weight * out.n[i];
    }
    out.bread_beta_inv = spd_inverse(bread_beta, "mean-model");
    out.bread_alpha_inv = spd_inverse(bread_alpha, "correlation-model");

    out.s_bc2.resize(K);
    out.t_bc2.resize(K);
    for (size_t i = 0; i < K; ++i) {
        const std::string& id = data.clusters[i].id;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu_b(Eigen::MatrixXd::Identity(p, p) -
                                                  out.m[i] * out.bread_beta_inv);
        out.s_bc2[i] = lu_b.solve(out.s[i]);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu_a(Eigen::MatrixXd::Identity(q, q) -
                                                  out.n[i] * out.bread_alpha_inv);
        out.t_bc2[i] = lu_a.solve(out.t[i]);
        if (!out.s_bc2[i].allFinite() || !out.t_bc2[i].allFinite()) {
            throw SingularError("(I - H) singular in BC2 correction for cluster '" + id + "'", id);
        }
    }
    return out;
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

// sum w E'W^{-1} E[dR/dbeta], the cross-information used by the detailed method.
inline Eigen::MatrixXd cross_information(const FitState& state) {
    const ClusterDataset& data = *state.data;
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(state.pairs->q, data.p);
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork& w = state.work[i];
        if (w.R.size() == 0) continue;
        cross.noalias() += c.weight * (w.E.transpose() * (w.Wdiag.cwiseInverse().asDiagonal() *
                                                          expected_dR_dbeta(c, w)));
    }
    return cross;
}

}  // namespace detail

// Sandwich covariances for the extended method: cov(beta) = A Lambda11 A and
// cov(alpha) = C Lambda22 C, each in a BC0 and a BC2 flavor.
inline CovarianceSet covariance_extended(const FitState& state) {
    const detail::MeatScores ms = detail::meat_scores(state);
    const Eigen::Index p = state.data->p;
    const Eigen::Index q = state.pairs->q;
    Eigen::MatrixXd meat_b0 = Eigen::MatrixXd::Zero(p, p), meat_b2 = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd meat_a0 = Eigen::MatrixXd::Zero(q, q), meat_a2 = Eigen::MatrixXd::Zero(q, q);
    for (size_t i = 0; i < state.data->clusters.size(); ++i) {
        const double w = state.data->clusters[i].weight;
        meat_b0.noalias() += w * (ms.s[i] * ms.s[i].transpose());
        meat_b2.noalias() += w * (ms.s_bc2[i] * ms.s_bc2[i].transpose());
        meat_a0.noalias() += w * (ms.t[i] * ms.t[i].transpose());
        meat_a2.noalias() += w * (ms.t_bc2[i] * ms.t_bc2[i].transpose());
    }
    CovarianceSet cov;
    const Eigen::MatrixXd& A = ms.bread_beta_inv;
    const Eigen::MatrixXd& C = ms.bread_alpha_inv;
    cov.cov_beta_bc0 = detail::symmetrized(A * meat_b0 * A);
    cov.cov_beta_bc2 = detail::symmetrized(A * meat_b2 * A);
    cov.cov_alpha_bc0 = detail::symmetrized(C * meat_a0 * C);
    cov.cov_alpha_bc2 = detail::symmetrized(C * meat_a2 * C);
    return cov;
}

// Joint covariance for the detailed method,
// [[A,0],[B,C]] Lambda [[A,B'],[0,C]], with the beta block unchanged from the
// extended method and the BC2 residual corrections applied inside every
// Lambda block including the cross terms.
inline CovarianceSet covariance_detailed(const FitState& state) {
    const detail::MeatScores ms = detail::meat_scores(state);
    const Eigen::Index p = state.data->p;
    const Eigen::Index q = state.pairs->q;
    const Eigen::MatrixXd& A = ms.bread_beta_inv;
    const Eigen::MatrixXd& C = ms.bread_alpha_inv;
    const Eigen::MatrixXd B = C * detail::cross_information(state) * A;

    auto assemble = [&](const std::vector<Eigen::VectorXd>& s, const std::vector<Eigen::VectorXd>& t) {
        Eigen::MatrixXd l11 = Eigen::MatrixXd::Zero(p, p);
        Eigen::MatrixXd l12 = Eigen::MatrixXd::Zero(p, q);
        Eigen::MatrixXd l22 = Eigen::MatrixXd::Zero(q, q);
        for (size_t i = 0; i < state.data->clusters.size(); ++i) {
            const double w = state.data->clusters[i].weight;
            l11.noalias() += w * (s[i] * s[i].transpose());
            l12.noalias() += w * (s[i] * t[i].transpose());
            l22.noalias() += w * (t[i] * t[i].transpose());
        }
        Eigen::MatrixXd joint(p + q, p + q);
        joint.topLeftCorner(p, p) = A * l11 * A;
        joint.topRightCorner(p, q) = A * l11 * B.transpose() + A * l12 * C;
        joint.bottomLeftCorner(q, p) = joint.topRightCorner(p, q).transpose();
        joint.bottomRightCorner(q, q) = B * l11 * B.transpose() + B * l12 * C +
                                        C * l12.transpose() * B.transpose() + C * l22 * C;
        return detail::symmetrized(joint);
    };

    CovarianceSet cov;
    const Eigen::MatrixXd joint_bc0 = assemble(ms.s, ms.t);
    const Eigen::MatrixXd joint_bc2 = assemble(ms.s_bc2, ms.t_bc2);
    cov.cov_beta_bc0 = joint_bc0.topLeftCorner(p, p);
    cov.cov_beta_bc2 = joint_bc2.topLeftCorner(p, p);
    cov.cov_alpha_bc0 = joint_bc0.bottomRightCorner(q, q);
    cov.cov_alpha_bc2 = joint_bc2.bottomRightCorner(q, q);
    cov.cov_joint_bc0 = joint_bc0;
    cov.cov_joint_bc2 = joint_bc2;
    return cov;
}

inline CovarianceSet covariance(const FitState& state) {
    return state.config.detailed ? covariance_detailed(state) : covariance_extended(state);
}

}  // namespace corrgee
