#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "corrgee/diagnostics.hpp"
#include "corrgee/fit.hpp"
#include "corrgee/normal.hpp"
#include "corrgee/simulate.hpp"

namespace corrgee {

namespace detail {

// %.17g round-trips every double exactly.
inline std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_fixed(double v, int digits = 6) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Machine-readable results file: flat `key value` lines plus vector/matrix
// blocks, all in full double precision so parsing reproduces the numbers
// exactly.
// ---------------------------------------------------------------------------

struct ResultsFile {
    std::map<std::string, std::string> scalars;
    std::map<std::string, Eigen::VectorXd> vectors;
    std::map<std::string, Eigen::MatrixXd> matrices;

    double scalar_number(const std::string& key) const {
        auto it = scalars.find(key);
        if (it == scalars.end()) throw Error("results file: missing key '" + key + "'");
        return std::stod(it->second);
    }
};

inline void write_results(std::ostream& out, const FitResult& fr, const ClusterDataset& data,
                          const PairCovariates& pairs, const FitConfig& config,
                          const std::vector<std::string>& beta_names,
                          const std::vector<std::string>& alpha_names) {
    auto scalar = [&](const std::string& k, const std::string& v) { out << k << " " << v << "\n"; };
    auto vec = [&](const std::string& k, const Eigen::VectorXd& v) {
        out << "vector " << k << " " << v.size() << "\n";
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            out << detail::fmt_full(v[i]) << (i + 1 == v.size() ? "" : " ");
        }
        out << "\n";
    };
    auto mat = [&](const std::string& k, const Eigen::MatrixXd& m) {
        out << "matrix " << k << " " << m.rows() << " " << m.cols() << "\n";
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                out << detail::fmt_full(m(r, c)) << (c + 1 == m.cols() ? "" : " ");
            }
            out << "\n";
        }
    };
    auto names = [&](const std::string& k, const std::vector<std::string>& v) {
        out << k;
        for (const auto& n : v) out << " " << n;
        out << "\n";
    };

    scalar("format", "corrgee-results-1");
    scalar("status", fit_status_name(fr.status));
    scalar("method", config.detailed ? "detailed" : "extended");
    scalar("mean_link", link_name(config.mean_link));
    scalar("corr_link", link_name(config.corr_link));
    scalar("max_iter", std::to_string(config.max_iter));
    scalar("epsilon", detail::fmt_full(config.epsilon));
    scalar("fix_alpha", config.fix_alpha ? "1" : "0");
    scalar("make_v_one", config.make_v_one ? "1" : "0");
    scalar("shrink", shrink_name(config.shrink));
    scalar("print_range", config.print_range ? "1" : "0");
    scalar("start_beta_source", config.start_beta ? "user" : "independence_fit");
    vec("start_alpha",
        config.start_alpha ? *config.start_alpha
                           : Eigen::VectorXd::Constant(pairs.q, 0.01).eval());
    scalar("iterations", std::to_string(fr.iterations));
    scalar("final_delta", detail::fmt_full(fr.final_delta));
    scalar("clusters", std::to_string(data.cluster_count()));
    scalar("observations", std::to_string(data.total_obs()));
    scalar("pairs", std::to_string(data.total_pairs()));
    scalar("p", std::to_string(data.p));
    scalar("q", std::to_string(pairs.q));
    names("beta_names", beta_names);
    names("alpha_names", alpha_names);
    vec("beta", fr.beta);
    vec("alpha", fr.alpha);
    int final_violations = 0;
    for (const auto& rep : fr.range_reports) {
        if (rep.iteration == fr.iterations) {
            final_violations = static_cast<int>(rep.violations.size());
        }
    }
    scalar("range_violations_final_iteration", std::to_string(final_violations));
    if (fr.cov) {
        vec("se_beta_bc0", fr.cov->cov_beta_bc0.diagonal().cwiseSqrt());
        vec("se_beta_bc2", fr.cov->cov_beta_bc2.diagonal().cwiseSqrt());
        vec("se_alpha_bc0", fr.cov->cov_alpha_bc0.diagonal().cwiseSqrt());
        vec("se_alpha_bc2", fr.cov->cov_alpha_bc2.diagonal().cwiseSqrt());
        mat("cov_beta_bc0", fr.cov->cov_beta_bc0);
        mat("cov_beta_bc2", fr.cov->cov_beta_bc2);
        mat("cov_alpha_bc0", fr.cov->cov_alpha_bc0);
        mat("cov_alpha_bc2", fr.cov->cov_alpha_bc2);
        if (fr.cov->cov_joint_bc0) {
            mat("cov_joint_bc0", *fr.cov->cov_joint_bc0);
            mat("cov_joint_bc2", *fr.cov->cov_joint_bc2);
        }
    }
    if (fr.selection) {
        scalar("cic", detail::fmt_full(fr.selection->cic));
        scalar("tecm", detail::fmt_full(fr.selection->tecm));
        scalar("lg", detail::fmt_full(fr.selection->lg));
        scalar("gpc", detail::fmt_full(fr.selection->gpc));
        scalar("criteria_orientation", "lg:larger_better cic:smaller_better gpc:smaller_better tecm:smaller_better");
        scalar("cooks_distance_covariance", config.detailed ? "joint" : "block_diagonal");
    }
}

inline ResultsFile parse_results(std::istream& in) {
    ResultsFile rf;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "vector") {
            std::string name;
            Eigen::Index n;
            ss >> name >> n;
            Eigen::VectorXd v(n);
            std::getline(in, line);
            std::istringstream vs(line);
            for (Eigen::Index i = 0; i < n; ++i) vs >> v[i];
            rf.vectors[name] = std::move(v);
        } else if (key == "matrix") {
            std::string name;
            Eigen::Index r, c;
            ss >> name >> r >> c;
            Eigen::MatrixXd m(r, c);
            for (Eigen::Index i = 0; i < r; ++i) {
                std::getline(in, line);
                std::istringstream vs(line);
                for (Eigen::Index j = 0; j < c; ++j) vs >> m(i, j);
            }
            rf.matrices[name] = std::move(m);
        } else {
            std::string rest;
            std::getline(ss, rest);
            rf.scalars[key] = detail::trim(rest);
        }
    }
    return rf;
}

// ---------------------------------------------------------------------------
// Human-readable fit report
// ---------------------------------------------------------------------------

inline void write_report(std::ostream& out, const FitResult& fr, const ClusterDataset& data,
                         const PairCovariates& pairs, const FitConfig& config,
                         const std::vector<std::string>& beta_names,
                         const std::vector<std::string>& alpha_names) {
    out << "Joint marginal mean / within-cluster correlation fit ("
        << (config.detailed ? "detailed" : "extended") << " method)\n";
    out << "  clusters: " << data.cluster_count() << "   observations: " << data.total_obs()
        << "   pairs: " << data.total_pairs() << "\n";
    out << "  mean link: " << link_name(config.mean_link)
        << "   correlation link: " << link_name(config.corr_link) << "\n";
    out << "  status: " << fit_status_name(fr.status) << " after " << fr.iterations
        << " iteration(s), max parameter change " << detail::fmt_fixed(fr.final_delta, 8) << "\n";
    if (!fr.message.empty()) out << "  note: " << fr.message << "\n";
    out << "\n";

    if (fr.cov) {
        auto block = [&](const char* title, const std::vector<std::string>& names,
                         const Eigen::VectorXd& est, const Eigen::VectorXd& se0,
                         const Eigen::VectorXd& se2) {
            out << title << "\n";
            out << "  " << std::left << std::setw(24) << "parameter" << std::right
                << std::setw(12) << "estimate" << std::setw(12) << "BC0" << std::setw(12) << "BC2"
                << std::setw(12) << "p(BC0)" << std::setw(12) << "p(BC2)" << "\n";
            for (Eigen::Index i = 0; i < est.size(); ++i) {
                const double p0 = 2.0 * norm_cdf(-std::fabs(est[i] / se0[i]));
                const double p2 = 2.0 * norm_cdf(-std::fabs(est[i] / se2[i]));
                out << "  " << std::left << std::setw(24) << names[static_cast<size_t>(i)]
                    << std::right << std::setw(12) << detail::fmt_fixed(est[i], 4)
                    << std::setw(12) << detail::fmt_fixed(se0[i], 4) << std::setw(12)
                    << detail::fmt_fixed(se2[i], 4) << std::setw(12) << detail::fmt_fixed(p0, 4)
                    << std::setw(12) << detail::fmt_fixed(p2, 4) << "\n";
            }
            out << "\n";
        };
        block("Marginal mean model", beta_names, fr.beta,
              fr.cov->cov_beta_bc0.diagonal().cwiseSqrt().eval(),
              fr.cov->cov_beta_bc2.diagonal().cwiseSqrt().eval());
        block("Correlation model", alpha_names, fr.alpha,
              fr.cov->cov_alpha_bc0.diagonal().cwiseSqrt().eval(),
              fr.cov->cov_alpha_bc2.diagonal().cwiseSqrt().eval());
    } else {
        out << "  beta:  " << fr.beta.transpose() << "\n";
        out << "  alpha: " << fr.alpha.transpose() << "\n\n";
    }

    if (fr.selection) {
        out << "Correlation-structure selection criteria\n";
        out << "  CIC  = " << detail::fmt_fixed(fr.selection->cic, 6) << "  (smaller is better)\n";
        out << "  TECM = " << detail::fmt_fixed(fr.selection->tecm, 6) << "  (smaller is better)\n";
        out << "  Lg   = " << detail::fmt_fixed(fr.selection->lg, 6) << "  (larger is better)\n";
        out << "  GPC  = " << detail::fmt_fixed(fr.selection->gpc, 6) << "  (smaller is better)\n";
        out << "\n";
    }

    // With print_range: violations from every iteration.  Otherwise only the
    // final estimation iteration is echoed.
    bool any = false;
    for (const auto& rep : fr.range_reports) {
        if (!config.print_range && rep.iteration != fr.iterations) continue;
        for (const auto& v : rep.violations) {
            if (!any) {
                out << "Correlation range violations\n";
                out << "  iter  cluster  pair        mu_j      mu_k       rho     bounds\n";
                any = true;
            }
            out << "  " << std::setw(4) << rep.iteration << "  " << std::setw(7) << v.cluster_id
                << "  (" << v.j << "," << v.k << ")  " << detail::fmt_fixed(v.mu_j, 4) << "  "
                << detail::fmt_fixed(v.mu_k, 4) << "  " << detail::fmt_fixed(v.rho, 4) << "  ["
                << detail::fmt_fixed(v.lower, 4) << ", " << detail::fmt_fixed(v.upper, 4) << "]\n";
        }
    }
    if (any) {
        out << "\n";
    } else if (!fr.range_reports.empty()) {
        out << "Correlation range violations occurred in earlier iterations only"
            << " (rerun with --print-range for details)\n\n";
    }
}

// ---------------------------------------------------------------------------
// Diagnostic output files (delimited text)
// ---------------------------------------------------------------------------

inline void write_cluster_diagnostics(std::ostream& out, const DiagnosticsTable& table,
                                      Eigen::Index p, Eigen::Index q, char delim) {
    out << "cluster" << delim << "n" << delim << "lev_beta" << delim << "lev_alpha";
    for (Eigen::Index j = 0; j < p; ++j) out << delim << "dbetac" << j + 1;
    for (Eigen::Index j = 0; j < q; ++j) out << delim << "dalphac" << j + 1;
    out << delim << "dcls" << delim << "dcls_beta" << delim << "dcls_alpha\n";
    for (const auto& d : table.clusters) {
        out << d.id << delim << d.n << delim << detail::fmt_full(d.leverage_beta) << delim
            << detail::fmt_full(d.leverage_alpha);
        for (Eigen::Index j = 0; j < p; ++j) out << delim << detail::fmt_full(d.dbetac[j]);
        for (Eigen::Index j = 0; j < q; ++j) out << delim << detail::fmt_full(d.dalphac[j]);
        out << delim << detail::fmt_full(d.dcls) << delim << detail::fmt_full(d.dcls_beta) << delim
            << detail::fmt_full(d.dcls_alpha) << "\n";
    }
}

inline void write_observation_diagnostics(std::ostream& out, const DiagnosticsTable& table,
                                          Eigen::Index p, char delim) {
    out << "cluster" << delim << "unit";
    for (Eigen::Index j = 0; j < p; ++j) out << delim << "dbetao" << j + 1;
    out << delim << "dobs" << delim << "dobs_beta" << delim << "dobs_alpha\n";
    for (const auto& d : table.observations) {
        out << d.cluster_id << delim << d.unit;
        for (Eigen::Index j = 0; j < p; ++j) out << delim << detail::fmt_full(d.dbetao[j]);
        out << delim << detail::fmt_full(d.dobs) << delim << detail::fmt_full(d.dobs_beta) << delim
            << detail::fmt_full(d.dobs_alpha) << "\n";
    }
}

inline void write_predicted_probabilities(std::ostream& out, const FitState& state, char delim) {
    out << "cluster" << delim << "unit" << delim << "predicted\n";
    for (size_t i = 0; i < state.work.size(); ++i) {
        const auto& c = state.data->clusters[i];
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            out << c.id << delim << j + 1 << delim << detail::fmt_full(state.work[i].mu[j]) << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// Simulation report output
// ---------------------------------------------------------------------------

inline void write_sim_table(std::ostream& out, const SimReport& report) {
    out << "method,parameter,truth,mean_estimate,pct_bias,bias_is_absolute,var_mc,"
        << "coverage_bc0,pct_var_bias_bc0,coverage_bc2,pct_var_bias_bc2\n";
    for (const auto& m : report.methods) {
        auto rows = [&](const std::vector<ParameterMetrics>& params) {
            for (const auto& pm : params) {
                out << m.method << "," << pm.name << "," << detail::fmt_full(pm.truth) << ","
                    << detail::fmt_full(pm.mean_estimate) << "," << detail::fmt_full(pm.pct_bias)
                    << "," << (pm.bias_is_absolute ? 1 : 0) << "," << detail::fmt_full(pm.var_mc)
                    << "," << detail::fmt_full(pm.coverage_bc0) << ","
                    << detail::fmt_full(pm.pct_var_bias_bc0) << ","
                    << detail::fmt_full(pm.coverage_bc2) << ","
                    << detail::fmt_full(pm.pct_var_bias_bc2) << "\n";
            }
        };
        rows(m.beta_metrics);
        rows(m.alpha_metrics);
    }
}

inline void write_sim_summary(std::ostream& out, const SimReport& report) {
    out << "Simulation: " << report.replicates << " replicate(s)\n";
    if (report.max_latent_repair > 0.0) {
        out << "  largest latent-matrix repair: " << detail::fmt_full(report.max_latent_repair)
            << "\n";
    }
    for (const auto& m : report.methods) {
        out << "  method " << m.method << ": " << m.converged << "/" << report.replicates
            << " converged\n";
        auto rows = [&](const char* label, const std::vector<ParameterMetrics>& params) {
            if (params.empty()) return;
            out << "    " << label << ":\n";
            out << "      " << std::left << std::setw(10) << "param" << std::right << std::setw(10)
                << "truth" << std::setw(12) << "mean" << std::setw(10) << "%bias" << std::setw(10)
                << "cov0" << std::setw(10) << "%vb0" << std::setw(10) << "cov2" << std::setw(10)
                << "%vb2" << "\n";
            for (const auto& pm : params) {
                out << "      " << std::left << std::setw(10) << pm.name << std::right
                    << std::setw(10) << detail::fmt_fixed(pm.truth, 3) << std::setw(12)
                    << detail::fmt_fixed(pm.mean_estimate, 4) << std::setw(10)
                    << detail::fmt_fixed(pm.pct_bias, 2) << std::setw(10)
                    << detail::fmt_fixed(pm.coverage_bc0, 1) << std::setw(10)
                    << detail::fmt_fixed(pm.pct_var_bias_bc0, 1) << std::setw(10)
                    << detail::fmt_fixed(pm.coverage_bc2, 1) << std::setw(10)
                    << detail::fmt_fixed(pm.pct_var_bias_bc2, 1) << "\n";
            }
        };
        rows("mean model", m.beta_metrics);
        rows("correlation model", m.alpha_metrics);
    }
}

}  // namespace corrgee
