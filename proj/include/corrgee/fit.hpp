#pragma once

#include "corrgee/diagnostics.hpp"
#include "corrgee/gee_core.hpp"
#include "corrgee/selection.hpp"
#include "corrgee/variance.hpp"

namespace corrgee {

struct FitResult {
    FitStatus status = FitStatus::MaxIterationsReached;
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    int iterations = 0;
    double final_delta = 0.0;
    std::vector<IterationInfo> trace;
    std::vector<RangeReport> range_reports;
    std::string message;
    std::optional<FitState> state;
    // Filled only on convergence:
    std::optional<CovarianceSet> cov;
    std::optional<SelectionCriteria> selection;
    std::optional<DiagnosticsTable> cluster_diagnostics;

    bool converged() const { return status == FitStatus::Converged; }
};

// Full pipeline: iterate the selected algorithm, then on convergence compute
// the BC0/BC2 covariances, cluster-level deletion diagnostics and the
// selection criteria.
inline FitResult fit(const ClusterDataset& data, const PairCovariates& pairs,
                     const FitConfig& config) {
    FitCore core = fit_core(data, pairs, config);
    FitResult result;
    result.status = core.status;
    result.beta = std::move(core.beta);
    result.alpha = std::move(core.alpha);
    result.iterations = core.iterations;
    result.final_delta = core.final_delta;
    result.trace = std::move(core.trace);
    result.range_reports = std::move(core.range_reports);
    result.message = std::move(core.message);
    result.state = std::move(core.state);
    if (result.status == FitStatus::Converged && result.state) {
        result.cov = covariance(*result.state);
        DiagnosticsTable table = diagnostics_table(*result.state, *result.cov, false);
        result.selection = selection_criteria(*result.state, *result.cov, table);
        result.cluster_diagnostics = std::move(table);
    }
    return result;
}

}  // namespace corrgee
