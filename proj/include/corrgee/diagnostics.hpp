#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "corrgee/gee_core.hpp"
#include "corrgee/variance.hpp"

namespace corrgee {

struct ClusterDiagnostics {
    std::string id;
    Eigen::Index n = 0;
    double leverage_beta = 0.0;   // tr(H_1i)
    double leverage_alpha = 0.0;  // tr(H_2i)
    Eigen::VectorXd dbetac;       // one-step beta displacement from deleting the cluster
    Eigen::VectorXd dalphac;      // one-step alpha displacement
    double dcls = 0.0, dcls_beta = 0.0, dcls_alpha = 0.0;
};

struct ObservationDiagnostics {
    std::string cluster_id;
    Eigen::Index unit = 0;  // 1-based within cluster
    Eigen::VectorXd dbetao;
    Eigen::VectorXd dalphao;  // feeds DOBS_alpha; not part of the output tables
    double dobs = 0.0, dobs_beta = 0.0, dobs_alpha = 0.0;
};

struct DiagnosticsTable {
    std::vector<ClusterDiagnostics> clusters;
    std::vector<ObservationDiagnostics> observations;  // filled on request
};

namespace detail {

struct BreadPair {
    Eigen::MatrixXd A;  // (sum w D'V^{-1}D)^{-1}
    Eigen::MatrixXd C;  // (sum w E'W^{-1}E)^{-1}
};

inline BreadPair bread_inverses(const FitState& state) {
    const Eigen::Index p = state.data->p;
    const Eigen::Index q = state.pairs->q;
    Eigen::MatrixXd bb = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd ba = Eigen::MatrixXd::Zero(q, q);
    for (size_t i = 0; i < state.data->clusters.size(); ++i) {
        const Cluster& c = state.data->clusters[i];
        const ClusterWork& w = state.work[i];
        bb.noalias() += c.weight * (w.D.transpose() * w.vinv_d);
        if (w.R.size() > 0) {
            ba.noalias() +=
                c.weight * (w.E.transpose() * (w.Wdiag.cwiseInverse().asDiagonal() * w.E));
        }
    }
    return {spd_inverse(bb, "mean-model"), spd_inverse(ba, "correlation-model")};
}

// Solves (I - w M X)^{-1} v, the Woodbury-collapsed application of
// (I - H)^{-1} to a score vector; throws naming the cluster when I - H is
// singular.
inline Eigen::VectorXd deflate(const Eigen::MatrixXd& m, const Eigen::MatrixXd& x, double w,
                               const Eigen::VectorXd& v, const std::string& id) {
    const Eigen::Index d = m.rows();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(d, d) - w * m * x);
    const Eigen::VectorXd out = lu.solve(v);
    if (!out.allFinite()) {
        throw SingularError("(I - H) singular for cluster '" + id + "'", id);
    }
    return out;
}

}  // namespace detail

// Cluster leverages for the mean and correlation models, reported as traces:
// tr(H_1i) = tr(A D'V^{-1}D), tr(H_2i) = tr(C E'W^{-1}E).  Unweighted, the
// traces sum to p and q across clusters.
inline std::vector<std::pair<double, double>> cluster_leverage(const FitState& state) {
    const detail::BreadPair bread = detail::bread_inverses(state);
    std::vector<std::pair<double, double>> out;
    out.reserve(state.work.size());
    for (const auto& w : state.work) {
        const double h1 = (bread.A * (w.D.transpose() * w.vinv_d)).trace();
        double h2 = 0.0;
        if (w.R.size() > 0) {
            h2 = (bread.C *
                  (w.E.transpose() * (w.Wdiag.cwiseInverse().asDiagonal() * w.E)))
                     .trace();
        }
        out.emplace_back(h1, h2);
    }
    return out;
}

// Dense H_1i = D_i A D_i' V_i^{-1} for one cluster (test and inspection aid).
inline Eigen::MatrixXd leverage_matrix_beta(const FitState& state, size_t i) {
    const detail::BreadPair bread = detail::bread_inverses(state);
    const ClusterWork& w = state.work[i];
    return w.D * bread.A * w.vinv_d.transpose();
}

// One-step deletion displacements for every cluster:
//   DBETAC_i = A w_i D'V^{-1}(I - H_1i)^{-1}(y - mu)
//   DALPHAC_i = C w_i E'W^{-1}(I - H_2i)^{-1}(R - rho)
// with the frequency weight folded into the deleted block.
inline DiagnosticsTable deletion_diagnostics(const FitState& state) {
    const detail::BreadPair bread = detail::bread_inverses(state);
    const Eigen::Index q = state.pairs->q;
    DiagnosticsTable table;
    table.clusters.reserve(state.work.size());
    for (size_t i = 0; i < state.work.size(); ++i) {
        const Cluster& c = state.data->clusters[i];
        const ClusterWork& w = state.work[i];
        ClusterDiagnostics d;
        d.id = c.id;
        d.n = c.size();
        const Eigen::MatrixXd m_i = w.D.transpose() * w.vinv_d;
        const Eigen::VectorXd s_i = w.vinv_d.transpose() * (c.y - w.mu);
        d.leverage_beta = (bread.A * m_i).trace();
        d.dbetac = bread.A * (c.weight * detail::deflate(m_i, bread.A, c.weight, s_i, c.id));
        if (w.R.size() > 0) {
            const Eigen::MatrixXd n_i =
                w.E.transpose() * (w.Wdiag.cwiseInverse().asDiagonal() * w.E);
            const Eigen::VectorXd t_i =
                w.E.transpose() * ((w.R - w.rho).cwiseQuotient(w.Wdiag));
            d.leverage_alpha = (bread.C * n_i).trace();
            d.dalphac = bread.C * (c.weight * detail::deflate(n_i, bread.C, c.weight, t_i, c.id));
        } else {
            d.dalphac = Eigen::VectorXd::Zero(q);
        }
        table.clusters.push_back(std::move(d));
    }
    return table;
}

// Observation-level one-step beta displacement and the alpha displacement
// from dropping every pair that involves the unit; only the Cook's-distance
// summaries of the alpha part are reported.
inline void add_observation_diagnostics(const FitState& state, DiagnosticsTable& table) {
    const detail::BreadPair bread = detail::bread_inverses(state);
    const Eigen::Index p = state.data->p;
    const Eigen::Index q = state.pairs->q;
    for (size_t i = 0; i < state.work.size(); ++i) {
        const Cluster& c = state.data->clusters[i];
        const ClusterWork& w = state.work[i];
        const Eigen::Index n = c.size();
        const Eigen::MatrixXd vinv =
            w.Vllt.solve(Eigen::MatrixXd::Identity(n, n));
        const Eigen::VectorXd vinv_e = w.Vllt.solve(c.y - w.mu);
        for (Eigen::Index j = 0; j < n; ++j) {
            ObservationDiagnostics od;
            od.cluster_id = c.id;
            od.unit = j + 1;
            // single-row partition: c_j = (D'V^{-1})_{.j}, scalar pivot (V^{-1})_{jj}
            const Eigen::VectorXd c_j = w.vinv_d.row(j).transpose();
            const double pivot = vinv(j, j);
            const double lever = c.weight * (c_j.dot(bread.A * c_j)) / pivot;
            const double denom = 1.0 - lever;
            if (denom == 0.0) {
                throw SingularError("(I - H) singular at observation " + std::to_string(j + 1) +
                                        " of cluster '" + c.id + "'",
                                    c.id);
            }
            od.dbetao = bread.A * (c.weight * c_j * (vinv_e[j] / pivot) / denom);

            od.dalphao = Eigen::VectorXd::Zero(q);
            if (n >= 2) {
                // rows of the pair block touching unit j; W is diagonal so the
                // deleted score contribution is just the subset sum
                Eigen::MatrixXd e_s(n - 1, q);
                Eigen::VectorXd r_s(n - 1);
                Eigen::VectorXd wd_s(n - 1);
                Eigen::Index rr = 0;
                Eigen::Index row = 0;
                for (Eigen::Index a = 0; a < n; ++a) {
                    for (Eigen::Index b = a + 1; b < n; ++b, ++row) {
                        if (a == j || b == j) {
                            e_s.row(rr) = w.E.row(row);
                            r_s[rr] = w.R[row] - w.rho[row];
                            wd_s[rr] = w.Wdiag[row];
                            ++rr;
                        }
                    }
                }
                const Eigen::MatrixXd n_s =
                    e_s.transpose() * (wd_s.cwiseInverse().asDiagonal() * e_s);
                const Eigen::VectorXd t_s = e_s.transpose() * r_s.cwiseQuotient(wd_s);
                od.dalphao =
                    bread.C * (c.weight * detail::deflate(n_s, bread.C, c.weight, t_s, c.id));
            }
            table.observations.push_back(std::move(od));
        }
    }
}

// Cook's distances, normalized by parameter counts so magnitudes are
// comparable across models.  The extended method standardizes by the
// block-diagonal BC0 covariance; the detailed method uses the joint BC0.
inline void cooks_distances(const FitState& state, const CovarianceSet& cov,
                            DiagnosticsTable& table) {
    const Eigen::Index p = state.data->p;
    const Eigen::Index q = state.pairs->q;
    Eigen::LLT<Eigen::MatrixXd> beta_llt(cov.cov_beta_bc0);
    Eigen::LLT<Eigen::MatrixXd> alpha_llt(cov.cov_alpha_bc0);
    if (beta_llt.info() != Eigen::Success || alpha_llt.info() != Eigen::Success) {
        throw SingularError("singular covariance in Cook's distance standardization");
    }
    std::optional<Eigen::LLT<Eigen::MatrixXd>> joint_llt;
    if (cov.cov_joint_bc0) {
        joint_llt.emplace(*cov.cov_joint_bc0);
        if (joint_llt->info() != Eigen::Success) {
            throw SingularError("singular joint covariance in Cook's distance standardization");
        }
    }
    auto overall = [&](const Eigen::VectorXd& db, const Eigen::VectorXd& da) {
        if (joint_llt) {
            Eigen::VectorXd d(p + q);
            d << db, da;
            return d.dot(joint_llt->solve(d)) / static_cast<double>(p + q);
        }
        return (db.dot(beta_llt.solve(db)) + da.dot(alpha_llt.solve(da))) /
               static_cast<double>(p + q);
    };

    for (auto& d : table.clusters) {
        d.dcls_beta = d.dbetac.dot(beta_llt.solve(d.dbetac)) / static_cast<double>(p);
        d.dcls_alpha = d.dalphac.dot(alpha_llt.solve(d.dalphac)) / static_cast<double>(q);
        d.dcls = overall(d.dbetac, d.dalphac);
    }
    for (auto& od : table.observations) {
        od.dobs_beta = od.dbetao.dot(beta_llt.solve(od.dbetao)) / static_cast<double>(p);
        od.dobs_alpha = od.dalphao.dot(alpha_llt.solve(od.dalphao)) / static_cast<double>(q);
        od.dobs = overall(od.dbetao, od.dalphao);
    }
}

// Fitted probabilities in input row order.
inline std::vector<double> predicted_probabilities(const FitState& state) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(state.data->total_obs()));
    for (const auto& w : state.work) {
        for (Eigen::Index j = 0; j < w.mu.size(); ++j) out.push_back(w.mu[j]);
    }
    return out;
}

// Full diagnostics table: leverages, deletion displacements and Cook's
// distances, with observation-level rows when requested.
inline DiagnosticsTable diagnostics_table(const FitState& state, const CovarianceSet& cov,
                                          bool with_observations) {
    DiagnosticsTable table = deletion_diagnostics(state);
    const auto lev = cluster_leverage(state);
    for (size_t i = 0; i < table.clusters.size(); ++i) {
        table.clusters[i].leverage_beta = lev[i].first;
        table.clusters[i].leverage_alpha = lev[i].second;
    }
    if (with_observations) add_observation_diagnostics(state, table);
    cooks_distances(state, cov, table);
    return table;
}

}  // namespace corrgee
