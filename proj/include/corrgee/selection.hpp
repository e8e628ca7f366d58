#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "corrgee/diagnostics.hpp"
#include "corrgee/gee_core.hpp"
#include "corrgee/variance.hpp"

namespace corrgee {

// Working-correlation selection criteria.  Larger Lg is better; smaller CIC,
// GPC and TECM are better.
struct SelectionCriteria {
    double cic = 0.0;
    double tecm = 0.0;
    double lg = 0.0;
    double gpc = 0.0;
};

inline bool selection_larger_is_better(const char* criterion) {
    return std::string(criterion) == "lg";
}

// CIC: trace of the independence-model information times the robust
// covariance of beta.  TECM: trace of the robust covariance.  Lg: Gaussian
// pseudo-log-likelihood (additive 2*pi constant omitted; it cancels in
// comparisons).  GPC: squared prediction error under one-step
// cluster-deletion estimates of beta.
inline SelectionCriteria selection_criteria(const FitState& state, const CovarianceSet& cov,
                                            const DiagnosticsTable& deletion) {
    const ClusterDataset& data = *state.data;
    SelectionCriteria out;

    Eigen::MatrixXd indep_info = Eigen::MatrixXd::Zero(data.p, data.p);
    double lg = 0.0;
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        const Cluster& c = data.clusters[i];
        const ClusterWork& w = state.work[i];
        const Eigen::VectorXd var = (w.mu.array() * (1.0 - w.mu.array())).matrix();
        indep_info.noalias() +=
            c.weight * (w.D.transpose() * (var.cwiseInverse().asDiagonal() * w.D));

        const Eigen::VectorXd resid = c.y - w.mu;
        double log_det = 0.0;
        const auto& l = w.Vllt.matrixLLT();
        for (Eigen::Index j = 0; j < l.rows(); ++j) log_det += 2.0 * std::log(l(j, j));
        lg += -0.5 * c.weight * (resid.dot(w.Vllt.solve(resid)) + log_det);

        const Eigen::VectorXd beta_del = state.beta - deletion.clusters[i].dbetac;
        const Eigen::VectorXd eta_del = c.x * beta_del;
        double press = 0.0;
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            const double e = c.y[j] - link_inverse(state.config.mean_link, eta_del[j]);
            press += e * e;
        }
        out.gpc += c.weight * press;
    }
    out.lg = lg;
    out.cic = (indep_info * cov.cov_beta_bc0).trace();
    out.tecm = cov.cov_beta_bc0.trace();
    return out;
}

}  // namespace corrgee
