#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "corrgee/fit.hpp"
#include "corrgee/gee_core.hpp"
#include "oracles.hpp"

using namespace corrgee;

namespace {

// two-unit cluster with identity links so that beta = (mu_j, mu_k - mu_j)
// reaches arbitrary margins and alpha is the pair correlation directly
struct PairSetup {
    Cluster cluster;
    Eigen::MatrixXd z;
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    FitConfig config;
};

PairSetup make_pair(double mu_j, double mu_k, double rho, double y_j, double y_k) {
    PairSetup s;
    s.cluster.id = "pair";
    s.cluster.weight = 1.0;
    s.cluster.y.resize(2);
    s.cluster.y << y_j, y_k;
    s.cluster.x.resize(2, 2);
    s.cluster.x << 1.0, 0.0, 1.0, 1.0;
    s.z = Eigen::MatrixXd::Ones(1, 1);
    s.beta.resize(2);
    s.beta << mu_j, mu_k - mu_j;
    s.alpha.resize(1);
    s.alpha << rho;
    s.config.mean_link = LinkKind::Identity;
    s.config.corr_link = LinkKind::Identity;
    return s;
}

}  // namespace

TEST_CASE("analytic dR/dbeta matches central finite differences", "[detailed]") {
    const double h = 1e-6;
    for (double mu_j : {0.15, 0.4, 0.5, 0.73}) {
        for (double mu_k : {0.22, 0.5, 0.61}) {
            for (double yj : {0.0, 1.0}) {
                for (double yk : {0.0, 1.0}) {
                    PairSetup s = make_pair(mu_j, mu_k, 0.1, yj, yk);
                    const ClusterWork w =
                        evaluate_cluster(s.cluster, s.z, s.beta, s.alpha, s.config);
                    const Eigen::MatrixXd analytic = observed_dR_dbeta(s.cluster, w);
                    for (Eigen::Index t = 0; t < 2; ++t) {
                        // test-local recomputation of R under perturbed beta
                        auto r_of = [&](double db) {
                            Eigen::VectorXd b = s.beta;
                            b[t] += db;
                            const double mj = s.cluster.x.row(0).dot(b);
                            const double mk = s.cluster.x.row(1).dot(b);
                            return oracles::sample_corr(yj, yk, mj, mk);
                        };
                        const double fd = (r_of(h) - r_of(-h)) / (2.0 * h);
                        REQUIRE_THAT(analytic(0, t), Catch::Matchers::WithinAbs(fd, 1e-5));
                    }
                }
            }
        }
    }
}

TEST_CASE("expected dR/dbeta equals the four-outcome enumeration", "[detailed]") {
    for (int a = 1; a <= 10; ++a) {
        for (int b = 1; b <= 10; ++b) {
            for (int r = 1; r <= 10; ++r) {
                const double mu_j = a / 11.0;
                const double mu_k = b / 11.0;
                const double rho = -0.95 + 1.9 * (r - 1) / 9.0;
                if (!oracles::pair_probs_valid(mu_j, mu_k, rho)) continue;
                PairSetup s = make_pair(mu_j, mu_k, rho, 0.0, 0.0);
                const ClusterWork w0 = evaluate_cluster(s.cluster, s.z, s.beta, s.alpha, s.config);
                const Eigen::MatrixXd expected = expected_dR_dbeta(s.cluster, w0);
                for (Eigen::Index t = 0; t < 2; ++t) {
                    const double enumerated =
                        oracles::enumerate_pair(mu_j, mu_k, rho, [&](double yj, double yk) {
                            PairSetup sy = make_pair(mu_j, mu_k, rho, yj, yk);
                            const ClusterWork w =
                                evaluate_cluster(sy.cluster, sy.z, sy.beta, sy.alpha, sy.config);
                            return observed_dR_dbeta(sy.cluster, w)(0, t);
                        });
                    REQUIRE_THAT(expected(0, t), Catch::Matchers::WithinAbs(enumerated, 1e-12));
                }
            }
        }
    }
}

TEST_CASE("expected dR/dbeta vanishes at balanced margins or zero correlation", "[detailed]") {
    for (double rho : {-0.4, 0.0, 0.3, 0.8}) {
        PairSetup s = make_pair(0.5, 0.5, rho, 1.0, 0.0);
        const ClusterWork w = evaluate_cluster(s.cluster, s.z, s.beta, s.alpha, s.config);
        CHECK(expected_dR_dbeta(s.cluster, w).cwiseAbs().maxCoeff() == 0.0);
    }
    PairSetup s = make_pair(0.3, 0.6, 0.0, 1.0, 0.0);
    const ClusterWork w = evaluate_cluster(s.cluster, s.z, s.beta, s.alpha, s.config);
    CHECK(expected_dR_dbeta(s.cluster, w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("detailed step reduces to the extended step when the cross block vanishes",
          "[detailed]") {
    // complementary outcome patterns make the beta half-step exactly zero and
    // mu = 0.5 kills E[dR/dbeta], so the two updates have to coincide
    ClusterDataset data;
    data.p = 1;
    PairCovariates pairs;
    pairs.q = 1;
    for (int i = 0; i < 2; ++i) {
        Cluster c;
        c.id = std::to_string(i);
        c.weight = 1.0;
        c.x = Eigen::MatrixXd::Ones(2, 1);
        c.y.resize(2);
        c.y << (i == 0 ? 1.0 : 0.0), (i == 0 ? 0.0 : 1.0);
        data.clusters.push_back(std::move(c));
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(1, 1));
    }
    FitConfig cfg;  // logit mean link; beta = 0 gives mu = 0.5
    ThetaState state;
    state.beta = Eigen::VectorXd::Zero(1);
    state.alpha = Eigen::VectorXd::Constant(1, 0.05);

    const ThetaState ext = step_extended(state, data, pairs, cfg);
    const ThetaState det = step_detailed(state, data, pairs, cfg);
    CHECK_THAT((ext.beta - det.beta).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_THAT((ext.alpha - det.alpha).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-14));
}

TEST_CASE("beta component of the detailed update matches the extended one", "[detailed]") {
    Eigen::VectorXd beta(2);
    beta << -0.7, 0.5;
    auto built = oracles::exchangeable_logit_data(20, 2, beta, 0.25, 77);
    FitConfig cfg;
    ThetaState state;
    state.beta = Eigen::VectorXd::Zero(2);
    state.beta[0] = -0.5;
    state.alpha = Eigen::VectorXd::Constant(1, 0.01);
    const ThetaState ext = step_extended(state, built.data, built.pairs, cfg);
    const ThetaState det = step_detailed(state, built.data, built.pairs, cfg);
    // upper block row of the joint update is [A, 0]: same beta move
    CHECK_THAT((ext.beta - det.beta).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-14));
}

TEST_CASE("extended and detailed methods converge to the same estimates", "[detailed]") {
    Eigen::VectorXd beta(3);
    beta << -0.9, 0.4, -0.3;
    for (unsigned seed : {1u, 2u, 3u}) {
        auto built = oracles::exchangeable_logit_data(40, 3, beta, 0.15, seed);
        FitConfig ext_cfg;
        FitConfig det_cfg;
        det_cfg.detailed = true;
        const FitResult ext = fit(built.data, built.pairs, ext_cfg);
        const FitResult det = fit(built.data, built.pairs, det_cfg);
        REQUIRE(ext.converged());
        REQUIRE(det.converged());
        CHECK_THAT((ext.beta - det.beta).cwiseAbs().maxCoeff(),
                   Catch::Matchers::WithinAbs(0.0, 1e-3));
        CHECK_THAT((ext.alpha - det.alpha).cwiseAbs().maxCoeff(),
                   Catch::Matchers::WithinAbs(0.0, 1e-3));
    }
}
