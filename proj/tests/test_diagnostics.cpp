#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "corrgee/diagnostics.hpp"
#include "corrgee/fit.hpp"
#include "oracles.hpp"

using namespace corrgee;

namespace {

// exact leave-one-cluster-out displacement beta_hat - beta_hat_(-i)
Eigen::VectorXd exact_deletion_beta(const ClusterDataset& data, const PairCovariates& pairs,
                                    const FitConfig& config, const Eigen::VectorXd& beta_full,
                                    size_t drop) {
    ClusterDataset d2;
    d2.p = data.p;
    PairCovariates p2;
    p2.q = pairs.q;
    for (size_t i = 0; i < data.clusters.size(); ++i) {
        if (i == drop) continue;
        d2.clusters.push_back(data.clusters[i]);
        p2.blocks.push_back(pairs.blocks[i]);
    }
    const FitResult refit = fit(d2, p2, config);
    REQUIRE(refit.converged());
    return beta_full - refit.beta;
}

}  // namespace

TEST_CASE("leverage traces sum to the parameter counts", "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.4, 0.5;
    auto built = oracles::exchangeable_logit_data(25, 2, beta, 0.2, 8);
    const FitResult res = fit(built.data, built.pairs, FitConfig{});
    REQUIRE(res.converged());
    const auto lev = cluster_leverage(*res.state);
    double sum_beta = 0.0, sum_alpha = 0.0;
    for (const auto& [h1, h2] : lev) {
        sum_beta += h1;
        sum_alpha += h2;
    }
    CHECK_THAT(sum_beta, Catch::Matchers::WithinAbs(2.0, 1e-10));
    CHECK_THAT(sum_alpha, Catch::Matchers::WithinAbs(1.0, 1e-10));
}

TEST_CASE("identical balanced clusters share the leverage equally", "[diagnostics]") {
    ClusterDataset data;
    data.p = 1;
    PairCovariates pairs;
    pairs.q = 1;
    const int K = 5;
    for (int i = 0; i < K; ++i) {
        Cluster c;
        c.id = std::to_string(i);
        c.weight = 1.0;
        c.x = Eigen::MatrixXd::Ones(2, 1);
        c.y.resize(2);
        c.y << 1.0, 0.0;
        data.clusters.push_back(std::move(c));
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(1, 1));
    }
    FitConfig cfg;
    const FitState state =
        FitState::at(data, pairs, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.1), cfg);
    for (const auto& [h1, h2] : cluster_leverage(state)) {
        CHECK_THAT(h1, Catch::Matchers::WithinAbs(1.0 / K, 1e-12));
        CHECK_THAT(h2, Catch::Matchers::WithinAbs(1.0 / K, 1e-12));
    }
    // dense leverage matrix agrees with the trace route
    const Eigen::MatrixXd h1m = leverage_matrix_beta(state, 0);
    CHECK_THAT(h1m.trace(), Catch::Matchers::WithinAbs(1.0 / K, 1e-12));
}

TEST_CASE("two-cluster toy deletion diagnostics match dense arithmetic", "[diagnostics]") {
    ClusterDataset data;
    data.p = 1;
    PairCovariates pairs;
    pairs.q = 1;
    const double ys[2][3] = {{1.0, 0.0, 1.0}, {0.0, 0.0, 1.0}};
    for (int i = 0; i < 2; ++i) {
        Cluster c;
        c.id = std::to_string(i);
        c.weight = 1.0;
        c.x = Eigen::MatrixXd::Ones(3, 1);
        c.y = Eigen::Map<const Eigen::Vector3d>(ys[i]);
        data.clusters.push_back(std::move(c));
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(3, 1));
    }
    FitConfig cfg;
    Eigen::VectorXd beta(1), alpha(1);
    beta << 0.1;
    alpha << 0.08;
    const FitState state = FitState::at(data, pairs, beta, alpha, cfg);
    const DiagnosticsTable table = deletion_diagnostics(state);

    Eigen::MatrixXd bread_b = Eigen::MatrixXd::Zero(1, 1), bread_a = Eigen::MatrixXd::Zero(1, 1);
    for (const auto& w : state.work) {
        bread_b += w.D.transpose() * w.V.inverse() * w.D;
        bread_a += w.E.transpose() * w.Wdiag.cwiseInverse().asDiagonal() * w.E;
    }
    for (int i = 0; i < 2; ++i) {
        const ClusterWork& w = state.work[i];
        const Eigen::MatrixXd vinv = w.V.inverse();
        const Eigen::MatrixXd h1 = w.D * bread_b.inverse() * w.D.transpose() * vinv;
        const Eigen::VectorXd expect_b =
            bread_b.inverse() * w.D.transpose() * vinv *
            (Eigen::MatrixXd::Identity(3, 3) - h1).inverse() * (data.clusters[i].y - w.mu);
        REQUIRE_THAT((table.clusters[i].dbetac - expect_b).cwiseAbs().maxCoeff(),
                     Catch::Matchers::WithinAbs(0.0, 1e-13));

        const Eigen::MatrixXd winv = w.Wdiag.cwiseInverse().asDiagonal();
        const Eigen::MatrixXd h2 = w.E * bread_a.inverse() * w.E.transpose() * winv;
        const Eigen::VectorXd expect_a =
            bread_a.inverse() * w.E.transpose() * winv *
            (Eigen::MatrixXd::Identity(3, 3) - h2).inverse() * (w.R - w.rho);
        REQUIRE_THAT((table.clusters[i].dalphac - expect_a).cwiseAbs().maxCoeff(),
                     Catch::Matchers::WithinAbs(0.0, 1e-13));
    }
}

TEST_CASE("zero residuals give zero diagnostics", "[diagnostics]") {
    ClusterDataset data;
    data.p = 2;
    PairCovariates pairs;
    pairs.q = 1;
    for (int i = 0; i < 3; ++i) {
        Cluster c;
        c.id = std::to_string(i);
        c.weight = 1.0;
        c.x = Eigen::MatrixXd::Identity(2, 2);
        c.y.resize(2);
        c.y << 0.3, 0.7;
        data.clusters.push_back(std::move(c));
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(1, 1));
    }
    FitConfig cfg;
    cfg.mean_link = LinkKind::Identity;
    cfg.corr_link = LinkKind::Identity;
    Eigen::VectorXd beta(2);
    beta << 0.3, 0.7;
    const FitState state = FitState::at(data, pairs, beta, Eigen::VectorXd::Zero(1), cfg);
    const DiagnosticsTable table = deletion_diagnostics(state);
    for (const auto& d : table.clusters) {
        CHECK(d.dbetac.cwiseAbs().maxCoeff() == 0.0);
        CHECK(d.dalphac.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("one-step deletion approximates the exact refit", "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.5, 0.4;
    auto built = oracles::exchangeable_logit_data(20, 2, beta, 0.2, 3, 3, 7);
    FitConfig cfg;
    const FitResult res = fit(built.data, built.pairs, cfg);
    REQUIRE(res.converged());
    const DiagnosticsTable table = deletion_diagnostics(*res.state);

    std::vector<Eigen::VectorXd> exact(20);
    std::vector<double> exact_norm(20);
    for (size_t i = 0; i < 20; ++i) {
        exact[i] = exact_deletion_beta(built.data, built.pairs, cfg, res.beta, i);
        exact_norm[i] = exact[i].norm();
    }
    std::vector<size_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return exact_norm[a] > exact_norm[b]; });
    for (int rank = 0; rank < 5; ++rank) {
        const size_t i = order[static_cast<size_t>(rank)];
        const double rel = (table.clusters[i].dbetac - exact[i]).norm() / exact[i].norm();
        CHECK(rel < 0.25);
    }
}

TEST_CASE("duplicated clusters get identical diagnostics", "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.4, 0.3;
    auto built = oracles::exchangeable_logit_data(10, 2, beta, 0.15, 21);
    // duplicate cluster 4 under a fresh id
    Cluster dup = built.data.clusters[4];
    dup.id = "dup";
    built.data.clusters.push_back(dup);
    built.pairs.blocks.push_back(built.pairs.blocks[4]);

    const FitResult res = fit(built.data, built.pairs, FitConfig{});
    REQUIRE(res.converged());
    const DiagnosticsTable table = diagnostics_table(*res.state, *res.cov, false);
    const auto& a = table.clusters[4];
    const auto& b = table.clusters.back();
    CHECK_THAT((a.dbetac - b.dbetac).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_THAT((a.dalphac - b.dalphac).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_THAT(a.dcls, Catch::Matchers::WithinAbs(b.dcls, 1e-14));
    CHECK(a.leverage_beta == b.leverage_beta);
}

TEST_CASE("diagnostics are equivariant under cluster permutation", "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.3, 0.4;
    auto built = oracles::exchangeable_logit_data(12, 2, beta, 0.2, 33);
    const FitResult res = fit(built.data, built.pairs, FitConfig{});
    REQUIRE(res.converged());
    const DiagnosticsTable table = diagnostics_table(*res.state, *res.cov, false);

    auto permuted = built;
    std::reverse(permuted.data.clusters.begin(), permuted.data.clusters.end());
    std::reverse(permuted.pairs.blocks.begin(), permuted.pairs.blocks.end());
    const FitResult res2 = fit(permuted.data, permuted.pairs, FitConfig{});
    REQUIRE(res2.converged());
    const DiagnosticsTable table2 = diagnostics_table(*res2.state, *res2.cov, false);

    for (size_t i = 0; i < 12; ++i) {
        const auto& orig = table.clusters[i];
        const auto& perm = table2.clusters[12 - 1 - i];
        REQUIRE(orig.id == perm.id);
        CHECK_THAT((orig.dbetac - perm.dbetac).cwiseAbs().maxCoeff(),
                   Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(orig.dcls, Catch::Matchers::WithinAbs(perm.dcls, 1e-9));
    }
}

TEST_CASE("cook distances are invariant to relabeling cluster ids", "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.3, 0.4;
    auto built = oracles::exchangeable_logit_data(10, 2, beta, 0.2, 41);
    const FitResult res1 = fit(built.data, built.pairs, FitConfig{});
    for (size_t i = 0; i < built.data.clusters.size(); ++i) {
        built.data.clusters[i].id = "relabeled_" + std::to_string(100 - i);
    }
    const FitResult res2 = fit(built.data, built.pairs, FitConfig{});
    REQUIRE(res1.converged());
    REQUIRE(res2.converged());
    const auto t1 = diagnostics_table(*res1.state, *res1.cov, false);
    const auto t2 = diagnostics_table(*res2.state, *res2.cov, false);
    for (size_t i = 0; i < t1.clusters.size(); ++i) {
        CHECK(t1.clusters[i].dcls == t2.clusters[i].dcls);
        CHECK(t1.clusters[i].dcls_beta == t2.clusters[i].dcls_beta);
        CHECK(t1.clusters[i].dcls_alpha == t2.clusters[i].dcls_alpha);
    }
}

TEST_CASE("observation deletion equals cluster deletion for singleton clusters",
          "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.2, 0.5;
    auto built = oracles::exchangeable_logit_data(14, 2, beta, 0.2, 9, 1, 4);
    const FitResult res = fit(built.data, built.pairs, FitConfig{});
    REQUIRE(res.converged());
    const DiagnosticsTable table = diagnostics_table(*res.state, *res.cov, true);
    size_t obs_idx = 0;
    bool found_singleton = false;
    for (size_t i = 0; i < built.data.clusters.size(); ++i) {
        const Eigen::Index n = built.data.clusters[i].size();
        if (n == 1) {
            found_singleton = true;
            CHECK_THAT((table.observations[obs_idx].dbetao - table.clusters[i].dbetac)
                           .cwiseAbs()
                           .maxCoeff(),
                       Catch::Matchers::WithinAbs(0.0, 1e-12));
        }
        obs_idx += static_cast<size_t>(n);
    }
    REQUIRE(found_singleton);
}

TEST_CASE("one-step deletion error shrinks as K grows", "[diagnostics]") {
    Eigen::VectorXd beta(2);
    beta << -0.4, 0.4;
    auto built = oracles::exchangeable_logit_data(200, 2, beta, 0.2, 55, 2, 5);
    FitConfig cfg;
    const FitResult res = fit(built.data, built.pairs, cfg);
    REQUIRE(res.converged());
    const DiagnosticsTable table = deletion_diagnostics(*res.state);
    double rel_sum = 0.0;
    int counted = 0;
    // spot-check a fixed subset; each exact value needs a full refit
    for (size_t i = 0; i < 200; i += 10) {
        const Eigen::VectorXd exact =
            exact_deletion_beta(built.data, built.pairs, cfg, res.beta, i);
        if (exact.norm() < 1e-8) continue;
        rel_sum += (table.clusters[i].dbetac - exact).norm() / exact.norm();
        ++counted;
    }
    REQUIRE(counted >= 15);
    CHECK(rel_sum / counted < 0.10);
}

TEST_CASE("predicted probabilities follow the inverse mean link", "[diagnostics]") {
    SECTION("intercept-only logit at zero gives one half") {
        ClusterDataset data;
        data.p = 1;
        PairCovariates pairs;
        pairs.q = 1;
        Cluster c;
        c.id = "a";
        c.weight = 1.0;
        c.x = Eigen::MatrixXd::Ones(3, 1);
        c.y.resize(3);
        c.y << 1, 0, 1;
        data.clusters.push_back(c);
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(3, 1));
        const FitState state = FitState::at(data, pairs, Eigen::VectorXd::Zero(1),
                                            Eigen::VectorXd::Zero(1), FitConfig{});
        for (double mu : predicted_probabilities(state)) CHECK(mu == 0.5);
    }
    SECTION("log link exponentiates the intercept") {
        ClusterDataset data;
        data.p = 1;
        PairCovariates pairs;
        pairs.q = 1;
        Cluster c;
        c.id = "a";
        c.weight = 1.0;
        c.x = Eigen::MatrixXd::Ones(2, 1);
        c.y.resize(2);
        c.y << 0, 0;
        data.clusters.push_back(c);
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(1, 1));
        FitConfig cfg;
        cfg.mean_link = LinkKind::Log;
        Eigen::VectorXd beta(1);
        beta << -5.252;
        const FitState state = FitState::at(data, pairs, beta, Eigen::VectorXd::Zero(1), cfg);
        const auto probs = predicted_probabilities(state);
        CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(std::exp(-5.252), 1e-15));
        CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(0.0052, 5e-5));
    }
    SECTION("identity link returns the linear predictor") {
        ClusterDataset data;
        data.p = 2;
        PairCovariates pairs;
        pairs.q = 1;
        Cluster c;
        c.id = "a";
        c.weight = 1.0;
        c.x.resize(2, 2);
        c.x << 1.0, 0.1, 1.0, 0.4;
        c.y.resize(2);
        c.y << 0, 1;
        data.clusters.push_back(c);
        pairs.blocks.push_back(Eigen::MatrixXd::Ones(1, 1));
        FitConfig cfg;
        cfg.mean_link = LinkKind::Identity;
        cfg.corr_link = LinkKind::Identity;
        Eigen::VectorXd beta(2);
        beta << 0.2, 0.5;
        const FitState state = FitState::at(data, pairs, beta, Eigen::VectorXd::Zero(1), cfg);
        const auto probs = predicted_probabilities(state);
        CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(0.25, 1e-15));
        CHECK_THAT(probs[1], Catch::Matchers::WithinAbs(0.4, 1e-15));
    }
}
