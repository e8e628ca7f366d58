#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "corrgee/fit.hpp"
#include "corrgee/model_data.hpp"
#include "corrgee/normal.hpp"
#include "corrgee/rng.hpp"

namespace corrgee {

// ---------------------------------------------------------------------------
// Latent-normal generation of correlated binary vectors (Emrich-Piedmonte)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_frechet_feasible(double mu_j, double mu_k, double rho) {
    const double psi_j = std::sqrt(mu_j / (1.0 - mu_j));
    const double psi_k = std::sqrt(mu_k / (1.0 - mu_k));
    const double lower = std::max(-psi_j * psi_k, -1.0 / (psi_j * psi_k));
    const double upper = std::min(psi_j / psi_k, psi_k / psi_j);
    if (rho < lower - 1e-12 || rho > upper + 1e-12) {
        std::ostringstream msg;
        msg << "target correlation outside the feasible range: mu_j=" << mu_j << ", mu_k=" << mu_k
            << ", rho=" << rho << " not in [" << lower << ", " << upper << "]";
        throw Error(msg.str());
    }
}

}  // namespace detail

// Latent normal correlation r solving Phi2(z_j, z_k; r) = mu_j mu_k +
// rho sqrt(mu_j(1-mu_j) mu_k(1-mu_k)), z = normal quantiles of the margins.
// Newton steps on the analytic derivative (the bivariate normal density),
// safeguarded by bisection on a maintained bracket.
inline double solve_tetrachoric(double mu_j, double mu_k, double rho) {
    if (!(mu_j > 0.0 && mu_j < 1.0 && mu_k > 0.0 && mu_k < 1.0)) {
        throw Error("solve_tetrachoric: margins must lie in (0,1)");
    }
    detail::check_frechet_feasible(mu_j, mu_k, rho);
    if (rho == 0.0) return 0.0;

    const double target =
        mu_j * mu_k + rho * std::sqrt(mu_j * (1.0 - mu_j) * mu_k * (1.0 - mu_k));
    const double lower_lim = std::max(0.0, mu_j + mu_k - 1.0);  // P(1,1) at r = -1
    const double upper_lim = std::min(mu_j, mu_k);              // P(1,1) at r = +1
    if (target >= upper_lim - 1e-15) return 1.0;
    if (target <= lower_lim + 1e-15) return -1.0;

    const double zj = norm_quantile(mu_j);
    const double zk = norm_quantile(mu_k);
    double lo = -1.0, hi = 1.0;
    double r = rho;  // decent starting point: r and rho share sign and order
    for (int it = 0; it < 200; ++it) {
        const double f = bvn_cdf(zj, zk, r) - target;
        if (std::fabs(f) < 1e-14) return r;
        if (f > 0.0) {
            hi = r;
        } else {
            lo = r;
        }
        const double deriv = bvn_pdf(zj, zk, r);
        double next = deriv > 0.0 ? r - f / deriv : std::numeric_limits<double>::quiet_NaN();
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - r) < 1e-12 && std::fabs(f) < 1e-10) return next;
        r = next;
    }
    if (std::fabs(bvn_cdf(zj, zk, r) - target) < 1e-10) return r;
    throw Error("solve_tetrachoric: root search did not converge");
}

// Latent correlation matrix for one cluster plus the positive-definiteness
// repair magnitude (largest eigenvalue clip applied, 0 when none was needed).
struct LatentCorrelation {
    Eigen::MatrixXd matrix;
    double repair = 0.0;
};

inline LatentCorrelation latent_correlation(const Eigen::VectorXd& mu, const Eigen::VectorXd& rho) {
    const Eigen::Index n = mu.size();
    LatentCorrelation out;
    out.matrix = Eigen::MatrixXd::Identity(n, n);
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k, ++r) {
            const double rr = solve_tetrachoric(mu[j], mu[k], rho[r]);
            out.matrix(j, k) = out.matrix(k, j) = rr;
        }
    }
    if (n < 2) return out;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.matrix);
    const double min_eig = eig.eigenvalues().minCoeff();
    constexpr double kClip = 1e-8;
    if (min_eig < kClip) {
        out.repair = kClip - min_eig;
        if (out.repair > 0.01) {
            std::ostringstream msg;
            msg << "latent correlation matrix too far from positive definite "
                << "(eigenvalue clip " << out.repair << " exceeds 0.01)";
            throw Error(msg.str());
        }
        Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(kClip);
        out.matrix = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        const Eigen::VectorXd d = out.matrix.diagonal().cwiseSqrt().cwiseInverse();
        out.matrix = d.asDiagonal() * out.matrix * d.asDiagonal();
    }
    return out;
}

// Reusable generator for one cluster's binary vector: threshold a latent
// multivariate normal draw at the marginal quantiles.
class BinaryGenerator {
  public:
    BinaryGenerator(const Eigen::VectorXd& mu, const Eigen::VectorXd& rho) : mu_(mu) {
        thresholds_.resize(mu.size());
        for (Eigen::Index j = 0; j < mu.size(); ++j) thresholds_[j] = norm_quantile(mu[j]);
        if (mu.size() >= 2) {
            const LatentCorrelation latent = latent_correlation(mu, rho);
            repair_ = latent.repair;
            Eigen::LLT<Eigen::MatrixXd> llt(latent.matrix);
            if (llt.info() != Eigen::Success) {
                throw Error("latent correlation matrix could not be factored");
            }
            chol_ = llt.matrixL();
        }
    }

    double repair() const { return repair_; }

    Eigen::VectorXd draw(PhiloxRng& rng) const {
        const Eigen::Index n = mu_.size();
        Eigen::VectorXd y(n);
        if (n == 1) {
            y[0] = rng.next_uniform() < mu_[0] ? 1.0 : 0.0;
            return y;
        }
        Eigen::VectorXd z(n);
        for (Eigen::Index j = 0; j < n; ++j) z[j] = rng.next_normal();
        const Eigen::VectorXd x = chol_ * z;
        for (Eigen::Index j = 0; j < n; ++j) y[j] = x[j] <= thresholds_[j] ? 1.0 : 0.0;
        return y;
    }

  private:
    Eigen::VectorXd mu_;
    Eigen::VectorXd thresholds_;
    Eigen::MatrixXd chol_;
    double repair_ = 0.0;
};

// One-shot draw for callers that do not reuse the latent factorization.
inline Eigen::VectorXd generate_correlated_binary(const Eigen::VectorXd& mu,
                                                  const Eigen::VectorXd& rho, PhiloxRng& rng) {
    return BinaryGenerator(mu, rho).draw(rng);
}

// ---------------------------------------------------------------------------
// Synthetic camp-panel design (occupational surveillance panel shape:
// clusters of workers, workers contribute day-level records)
// ---------------------------------------------------------------------------

// Parameters for the synthetic design: K = clusters x replication clusters of
// 2..9 workers each, worker day counts near N(days_mean, days_sd), total
// cluster sizes forced into [size_min, size_max].  Mean covariates are
// intercept, three work-type indicators, worker experience, wet clothing,
// centered temperature and tobacco use; pair covariates are same-worker /
// same-cluster indicators.
struct CampPanelDesign {
    int clusters = 37;
    int replication = 1;
    int workers_min = 2;
    int workers_max = 9;
    double days_mean = 22.0;
    double days_sd = 10.0;
    int size_min = 20;
    int size_max = 208;
    double p_priming = 0.35;
    double p_priming_barning = 0.20;
    double p_other_barning = 0.15;
    double p_experience_lt5 = 0.5;
    double p_wet = 0.4;
    double p_tobacco = 0.5;
    double temp_sd = 0.7;

    static constexpr int kP = 8;  // intercept + 7 covariates
    static constexpr int kQ = 2;  // same-worker, same-cluster-other-worker
};

struct SyntheticDesign {
    ClusterDataset data;   // y is zero-filled; replicates overwrite it
    PairCovariates pairs;
};

inline SyntheticDesign generate_camp_panel(const CampPanelDesign& d, PhiloxRng& rng) {
    if (d.clusters < 1 || d.replication < 1) throw ConfigError("design needs >= 1 cluster");
    if (d.workers_min < 1 || d.workers_max < d.workers_min) {
        throw ConfigError("invalid worker count range");
    }
    const double p_topping = 1.0 - d.p_priming - d.p_priming_barning - d.p_other_barning;
    if (p_topping < 0.0) throw ConfigError("work-type probabilities exceed 1");

    SyntheticDesign out;
    out.data.p = CampPanelDesign::kP;
    out.pairs.q = CampPanelDesign::kQ;
    const int total = d.clusters * d.replication;
    for (int i = 0; i < total; ++i) {
        const int workers =
            d.workers_min + static_cast<int>(rng.next_uniform() * (d.workers_max - d.workers_min + 1));
        std::vector<int> days(workers);
        std::vector<double> experience(workers), tobacco(workers);
        int n = 0;
        for (int w = 0; w < workers; ++w) {
            const double raw = d.days_mean + d.days_sd * rng.next_normal();
            days[w] = std::max(1, static_cast<int>(std::lround(raw)));
            experience[w] = rng.next_uniform() < d.p_experience_lt5 ? 1.0 : 0.0;
            tobacco[w] = rng.next_uniform() < d.p_tobacco ? 1.0 : 0.0;
            n += days[w];
        }
        while (n < d.size_min) {
            ++days[workers - 1];
            ++n;
        }
        for (int w = workers - 1; n > d.size_max && n > workers;
             w = (w + workers - 1) % workers) {
            if (days[w] > 1) {
                --days[w];
                --n;
            }
        }

        Cluster c;
        c.id = "c" + std::to_string(i + 1);
        c.weight = 1.0;
        c.y = Eigen::VectorXd::Zero(n);
        c.x.resize(n, CampPanelDesign::kP);
        std::vector<int> worker_of(n);
        Eigen::Index row = 0;
        for (int w = 0; w < workers; ++w) {
            for (int t = 0; t < days[w]; ++t, ++row) {
                worker_of[row] = w;
                const double u = rng.next_uniform();
                const double priming = u < d.p_priming ? 1.0 : 0.0;
                const double prim_barn =
                    (u >= d.p_priming && u < d.p_priming + d.p_priming_barning) ? 1.0 : 0.0;
                const double other_barn =
                    (u >= d.p_priming + d.p_priming_barning &&
                     u < d.p_priming + d.p_priming_barning + d.p_other_barning)
                        ? 1.0
                        : 0.0;
                const double wet = rng.next_uniform() < d.p_wet ? 1.0 : 0.0;
                const double temp = std::clamp(d.temp_sd * rng.next_normal(), -2.5, 2.5);
                c.x.row(row) << 1.0, priming, prim_barn, other_barn, experience[w], wet, temp,
                    tobacco[w];
            }
        }

        Eigen::MatrixXd z(pair_count(n), CampPanelDesign::kQ);
        Eigen::Index r = 0;
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a + 1; b < n; ++b, ++r) {
                const bool same = worker_of[a] == worker_of[b];
                z(r, 0) = same ? 1.0 : 0.0;
                z(r, 1) = same ? 0.0 : 1.0;
            }
        }
        out.data.clusters.push_back(std::move(c));
        out.pairs.blocks.push_back(std::move(z));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulation metrics
// ---------------------------------------------------------------------------

struct ParameterMetrics {
    std::string name;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double pct_bias = 0.0;       // percent relative bias; absolute bias if truth == 0
    bool bias_is_absolute = false;
    double var_mc = 0.0;
    double pct_var_bias_bc0 = 0.0;
    double pct_var_bias_bc2 = 0.0;
    double coverage_bc0 = 0.0;  // percent
    double coverage_bc2 = 0.0;
};

// estimates: N_R x d; var_bc0/var_bc2: matching variance estimates per
// replicate; truth: length d.
inline std::vector<ParameterMetrics> sim_metrics(const Eigen::MatrixXd& estimates,
                                                 const Eigen::MatrixXd& var_bc0,
                                                 const Eigen::MatrixXd& var_bc2,
                                                 const Eigen::VectorXd& truth,
                                                 const std::vector<std::string>& names) {
    const Eigen::Index nr = estimates.rows();
    const Eigen::Index d = estimates.cols();
    if (nr < 2) throw Error("sim_metrics requires at least 2 converged replicates");
    std::vector<ParameterMetrics> out(static_cast<size_t>(d));
    for (Eigen::Index c = 0; c < d; ++c) {
        ParameterMetrics& m = out[static_cast<size_t>(c)];
        m.name = names[static_cast<size_t>(c)];
        m.truth = truth[c];
        const Eigen::VectorXd est = estimates.col(c);
        m.mean_estimate = est.mean();
        if (m.truth != 0.0) {
            m.pct_bias = ((est.array() - m.truth) / m.truth).mean() * 100.0;
        } else {
            m.pct_bias = (est.array() - m.truth).mean();
            m.bias_is_absolute = true;
        }
        m.var_mc = (est.array() - m.mean_estimate).square().sum() / static_cast<double>(nr - 1);
        m.pct_var_bias_bc0 = (var_bc0.col(c).mean() - m.var_mc) / m.var_mc * 100.0;
        m.pct_var_bias_bc2 = (var_bc2.col(c).mean() - m.var_mc) / m.var_mc * 100.0;
        int cover0 = 0, cover2 = 0;
        for (Eigen::Index r = 0; r < nr; ++r) {
            if (std::fabs(est[r] - m.truth) <= kZ975 * std::sqrt(var_bc0(r, c))) ++cover0;
            if (std::fabs(est[r] - m.truth) <= kZ975 * std::sqrt(var_bc2(r, c))) ++cover2;
        }
        m.coverage_bc0 = 100.0 * cover0 / static_cast<double>(nr);
        m.coverage_bc2 = 100.0 * cover2 / static_cast<double>(nr);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenario configuration and the replicate loop
// ---------------------------------------------------------------------------

enum class SimMethod { Extended, Detailed, Both };

struct FileDesign {
    std::string xy_path, z_path, w_path;
    InputNames names;
};

struct SimConfig {
    int replicates = 1000;
    std::uint64_t seed = 1;
    SimMethod method = SimMethod::Both;
    Eigen::VectorXd beta_true;
    Eigen::VectorXd alpha_true;
    FitConfig fit;
    std::variant<CampPanelDesign, FileDesign> design = CampPanelDesign{};
};

// Per-method replicate results and summary metrics.
struct MethodRun {
    std::string method;
    int converged = 0;
    Eigen::MatrixXd beta;       // converged replicates x p
    Eigen::MatrixXd alpha;      // converged replicates x q
    Eigen::MatrixXd var_beta_bc0, var_beta_bc2;    // matching variance estimates
    Eigen::MatrixXd var_alpha_bc0, var_alpha_bc2;
    std::vector<int> replicate_index;  // which replicate each row came from
    std::vector<ParameterMetrics> beta_metrics;
    std::vector<ParameterMetrics> alpha_metrics;
};

struct SimReport {
    int replicates = 0;
    double max_latent_repair = 0.0;
    std::vector<MethodRun> methods;
};

namespace detail {

struct ReplicateRecord {
    bool converged = false;
    Eigen::VectorXd beta, alpha;
    Eigen::VectorXd var_beta_bc0, var_beta_bc2, var_alpha_bc0, var_alpha_bc2;
};

inline MethodRun summarize_method(const std::string& name,
                                  const std::vector<ReplicateRecord>& records,
                                  const Eigen::VectorXd& beta_true,
                                  const Eigen::VectorXd& alpha_true) {
    const Eigen::Index p = beta_true.size();
    const Eigen::Index q = alpha_true.size();
    MethodRun run;
    run.method = name;
    for (const auto& r : records) {
        if (r.converged) ++run.converged;
    }
    if (run.converged == 0) throw Error("no replicate converged for method " + name);
    run.beta.resize(run.converged, p);
    run.alpha.resize(run.converged, q);
    run.var_beta_bc0.resize(run.converged, p);
    run.var_beta_bc2.resize(run.converged, p);
    run.var_alpha_bc0.resize(run.converged, q);
    run.var_alpha_bc2.resize(run.converged, q);
    Eigen::Index row = 0;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.converged) continue;
        run.replicate_index.push_back(static_cast<int>(i));
        run.beta.row(row) = r.beta;
        run.alpha.row(row) = r.alpha;
        run.var_beta_bc0.row(row) = r.var_beta_bc0;
        run.var_beta_bc2.row(row) = r.var_beta_bc2;
        run.var_alpha_bc0.row(row) = r.var_alpha_bc0;
        run.var_alpha_bc2.row(row) = r.var_alpha_bc2;
        ++row;
    }
    std::vector<std::string> beta_names, alpha_names;
    for (Eigen::Index j = 0; j < p; ++j) beta_names.push_back("beta" + std::to_string(j));
    for (Eigen::Index j = 0; j < q; ++j) alpha_names.push_back("alpha" + std::to_string(j + 1));
    if (run.converged >= 2) {
        run.beta_metrics = sim_metrics(run.beta, run.var_beta_bc0, run.var_beta_bc2, beta_true,
                                       beta_names);
        run.alpha_metrics = sim_metrics(run.alpha, run.var_alpha_bc0, run.var_alpha_bc2,
                                        alpha_true, alpha_names);
    }
    return run;
}

}  // namespace detail

// Runs the replicate loop: one fixed design per scenario, outcome vectors
// redrawn per replicate from independent RNG substreams, models refitted with
// the configured method(s).  Non-converged replicates are excluded from the
// metrics; the convergence counts are reported alongside.
inline SimReport run_simulation(const SimConfig& config) {
    if (config.replicates < 1) throw ConfigError("replicates must be >= 1");

    SyntheticDesign design;
    if (std::holds_alternative<CampPanelDesign>(config.design)) {
        PhiloxRng design_rng(config.seed, 0);
        design = generate_camp_panel(std::get<CampPanelDesign>(config.design), design_rng);
    } else {
        const FileDesign& fd = std::get<FileDesign>(config.design);
        auto [data, pairs] = load_inputs(fd.xy_path, fd.z_path, fd.w_path, fd.names);
        design.data = std::move(data);
        design.pairs = std::move(pairs);
    }
    if (config.beta_true.size() != design.data.p) {
        throw ConfigError("beta_true has " + std::to_string(config.beta_true.size()) +
                          " entries but the design has " + std::to_string(design.data.p) +
                          " mean covariates");
    }
    if (config.alpha_true.size() != design.pairs.q) {
        throw ConfigError("alpha_true has " + std::to_string(config.alpha_true.size()) +
                          " entries but the design has " + std::to_string(design.pairs.q) +
                          " correlation covariates");
    }

    SimReport report;
    report.replicates = config.replicates;

    // model-implied margins and pair correlations are fixed across replicates
    std::vector<BinaryGenerator> generators;
    generators.reserve(design.data.clusters.size());
    for (size_t i = 0; i < design.data.clusters.size(); ++i) {
        const Cluster& c = design.data.clusters[i];
        const Eigen::VectorXd eta = c.x * config.beta_true;
        Eigen::VectorXd mu(c.size());
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            mu[j] = link_inverse(config.fit.mean_link, eta[j]);
            if (!(mu[j] > 0.0 && mu[j] < 1.0)) {
                throw Error("true model gives mean outside (0,1) in cluster '" + c.id + "'");
            }
        }
        const Eigen::VectorXd zeta = design.pairs.blocks[i] * config.alpha_true;
        Eigen::VectorXd rho(zeta.size());
        for (Eigen::Index r = 0; r < zeta.size(); ++r) {
            rho[r] = link_inverse(config.fit.corr_link, zeta[r]);
        }
        generators.emplace_back(mu, rho);
        report.max_latent_repair = std::max(report.max_latent_repair, generators.back().repair());
    }

    const bool run_extended =
        config.method == SimMethod::Extended || config.method == SimMethod::Both;
    const bool run_detailed =
        config.method == SimMethod::Detailed || config.method == SimMethod::Both;
    std::vector<detail::ReplicateRecord> extended_records(config.replicates);
    std::vector<detail::ReplicateRecord> detailed_records(config.replicates);

    // Each replicate owns the RNG substream (seed, r+1), so results do not
    // depend on how replicates are distributed over worker threads.
    auto replicate_range = [&](SyntheticDesign& local, int first, int stride) {
        for (int r = first; r < config.replicates; r += stride) {
            PhiloxRng rng(config.seed, static_cast<std::uint64_t>(r + 1));
            for (size_t i = 0; i < local.data.clusters.size(); ++i) {
                local.data.clusters[i].y = generators[i].draw(rng);
            }
            auto run_one = [&](bool detailed, detail::ReplicateRecord& rec) {
                FitConfig fc = config.fit;
                fc.detailed = detailed;
                try {
                    const FitResult fr = fit(local.data, local.pairs, fc);
                    if (!fr.converged()) return;
                    rec.converged = true;
                    rec.beta = fr.beta;
                    rec.alpha = fr.alpha;
                    rec.var_beta_bc0 = fr.cov->cov_beta_bc0.diagonal();
                    rec.var_beta_bc2 = fr.cov->cov_beta_bc2.diagonal();
                    rec.var_alpha_bc0 = fr.cov->cov_alpha_bc0.diagonal();
                    rec.var_alpha_bc2 = fr.cov->cov_alpha_bc2.diagonal();
                } catch (const Error&) {
                    // counted as non-converged
                }
            };
            if (run_extended) run_one(false, extended_records[r]);
            if (run_detailed) run_one(true, detailed_records[r]);
        }
    };

    int n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CORRGEE_THREADS")) {
        n_threads = std::max(1, std::atoi(env));
    }
    n_threads = std::max(1, std::min(n_threads, config.replicates));
    if (n_threads == 1) {
        replicate_range(design, 0, 1);
    } else {
        std::vector<std::thread> workers;
        std::vector<SyntheticDesign> locals(n_threads, design);
        for (int t = 0; t < n_threads; ++t) {
            workers.emplace_back(
                [&, t] { replicate_range(locals[static_cast<size_t>(t)], t, n_threads); });
        }
        for (auto& w : workers) w.join();
    }

    if (run_extended) {
        report.methods.push_back(detail::summarize_method("extended", extended_records,
                                                          config.beta_true, config.alpha_true));
    }
    if (run_detailed) {
        report.methods.push_back(detail::summarize_method("detailed", detailed_records,
                                                          config.beta_true, config.alpha_true));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Scenario files: `key = value` lines, '#' comments, vectors space-separated
// ---------------------------------------------------------------------------

inline SimConfig parse_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario file: " + path);
    std::map<std::string, std::pair<int, std::string>> kv;  // key -> (line, value)
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InputError(path + " line " + std::to_string(lineno) +
                             ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw InputError(path + " line " + std::to_string(lineno) + ": empty key or value");
        }
        if (kv.count(key)) {
            throw InputError(path + " line " + std::to_string(lineno) + ": duplicate key '" + key +
                             "'");
        }
        kv[key] = {lineno, value};
    }

    auto take = [&](const std::string& key) -> std::optional<std::pair<int, std::string>> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        auto v = it->second;
        kv.erase(it);
        return v;
    };
    auto parse_with_line = [&](const std::pair<int, std::string>& v, auto&& fn) {
        try {
            return fn(v.second);
        } catch (const std::exception& e) {
            throw InputError(path + " line " + std::to_string(v.first) + ": " + e.what());
        }
    };
    auto as_double = [](const std::string& s) {
        size_t used = 0;
        const double x = std::stod(s, &used);
        if (used != s.size()) throw std::runtime_error("not a number: '" + s + "'");
        return x;
    };
    auto as_int = [&](const std::string& s) {
        const double x = as_double(s);
        if (x != std::floor(x)) throw std::runtime_error("not an integer: '" + s + "'");
        return static_cast<int>(x);
    };
    auto as_vector = [&](const std::string& s) {
        std::istringstream ss(s);
        std::vector<double> v;
        std::string tok;
        while (ss >> tok) v.push_back(as_double(tok));
        return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    auto as_bool = [](const std::string& s) {
        if (s == "yes" || s == "true" || s == "1") return true;
        if (s == "no" || s == "false" || s == "0") return false;
        throw std::runtime_error("not a yes/no value: '" + s + "'");
    };
    auto as_names = [](const std::string& s) {
        std::istringstream ss(s);
        std::vector<std::string> v;
        std::string tok;
        while (ss >> tok) v.push_back(tok);
        return v;
    };

    SimConfig config;
    if (auto v = take("replicates")) config.replicates = parse_with_line(*v, as_int);
    if (auto v = take("seed")) {
        config.seed = static_cast<std::uint64_t>(parse_with_line(*v, as_double));
    }
    if (auto v = take("method")) {
        const std::string& m = v->second;
        if (m == "extended") {
            config.method = SimMethod::Extended;
        } else if (m == "detailed") {
            config.method = SimMethod::Detailed;
        } else if (m == "both") {
            config.method = SimMethod::Both;
        } else {
            throw InputError(path + " line " + std::to_string(v->first) +
                             ": method must be extended, detailed or both");
        }
    }
    auto v_beta = take("beta_true");
    if (!v_beta) throw InputError(path + ": missing required key beta_true");
    config.beta_true = parse_with_line(*v_beta, as_vector);
    auto v_alpha = take("alpha_true");
    if (!v_alpha) throw InputError(path + ": missing required key alpha_true");
    config.alpha_true = parse_with_line(*v_alpha, as_vector);

    if (auto v = take("mean_link")) {
        config.fit.mean_link = parse_with_line(*v, [](const std::string& s) { return parse_link(s); });
    }
    if (auto v = take("corr_link")) {
        config.fit.corr_link = parse_with_line(*v, [](const std::string& s) { return parse_link(s); });
    }
    if (auto v = take("max_iter")) config.fit.max_iter = parse_with_line(*v, as_int);
    if (auto v = take("epsilon")) config.fit.epsilon = parse_with_line(*v, as_double);
    if (auto v = take("make_v_one")) config.fit.make_v_one = parse_with_line(*v, as_bool);
    if (auto v = take("fix_alpha")) config.fit.fix_alpha = parse_with_line(*v, as_bool);
    if (auto v = take("start_alpha")) config.fit.start_alpha = parse_with_line(*v, as_vector);
    if (auto v = take("start_beta")) config.fit.start_beta = parse_with_line(*v, as_vector);

    std::string design_kind = "camp_panel";
    if (auto v = take("design")) design_kind = v->second;
    if (design_kind == "camp_panel") {
        CampPanelDesign d;
        if (auto v = take("design.clusters")) d.clusters = parse_with_line(*v, as_int);
        if (auto v = take("design.replication")) d.replication = parse_with_line(*v, as_int);
        if (auto v = take("design.workers_min")) d.workers_min = parse_with_line(*v, as_int);
        if (auto v = take("design.workers_max")) d.workers_max = parse_with_line(*v, as_int);
        if (auto v = take("design.days_mean")) d.days_mean = parse_with_line(*v, as_double);
        if (auto v = take("design.days_sd")) d.days_sd = parse_with_line(*v, as_double);
        if (auto v = take("design.size_min")) d.size_min = parse_with_line(*v, as_int);
        if (auto v = take("design.size_max")) d.size_max = parse_with_line(*v, as_int);
        if (auto v = take("design.p_priming")) d.p_priming = parse_with_line(*v, as_double);
        if (auto v = take("design.p_priming_barning")) {
            d.p_priming_barning = parse_with_line(*v, as_double);
        }
        if (auto v = take("design.p_other_barning")) {
            d.p_other_barning = parse_with_line(*v, as_double);
        }
        if (auto v = take("design.p_experience_lt5")) {
            d.p_experience_lt5 = parse_with_line(*v, as_double);
        }
        if (auto v = take("design.p_wet")) d.p_wet = parse_with_line(*v, as_double);
        if (auto v = take("design.p_tobacco")) d.p_tobacco = parse_with_line(*v, as_double);
        if (auto v = take("design.temp_sd")) d.temp_sd = parse_with_line(*v, as_double);
        config.design = d;
    } else if (design_kind == "files") {
        FileDesign d;
        auto require = [&](const char* key) {
            auto v = take(key);
            if (!v) throw InputError(path + ": design=files requires key " + std::string(key));
            return v->second;
        };
        d.xy_path = require("design.xy");
        d.z_path = require("design.z");
        d.w_path = require("design.w");
        d.names.id = require("design.id");
        d.names.y = require("design.y");
        d.names.x = as_names(require("design.x"));
        d.names.z = as_names(require("design.zvar"));
        d.names.w = require("design.wvar");
        if (auto v = take("design.delimiter")) d.names.delimiter = v->second[0];
        config.design = d;
    } else {
        throw InputError(path + ": unknown design '" + design_kind + "'");
    }

    if (!kv.empty()) {
        throw InputError(path + " line " + std::to_string(kv.begin()->second.first) +
                         ": unknown key '" + kv.begin()->first + "'");
    }
    return config;
}

}  // namespace corrgee
