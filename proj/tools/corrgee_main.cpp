// corrgee: regression models for the marginal mean and the pairwise
// within-cluster correlation of correlated binary responses.
//
//   corrgee fit       joint estimating-equations fit from three input files
//   corrgee simulate  correlated-binary simulation study from a scenario file

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corrgee/corrgee.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitMeanRange = 3;
constexpr int kExitShrinkLimit = 4;
constexpr int kExitNumeric = 5;

int exit_code_for(corrgee::FitStatus status) {
    switch (status) {
        case corrgee::FitStatus::Converged: return kExitOk;
        case corrgee::FitStatus::MaxIterationsReached: return kExitNotConverged;
        case corrgee::FitStatus::MeanRangeAbort: return kExitMeanRange;
        case corrgee::FitStatus::ShrinkLimitAbort: return kExitShrinkLimit;
    }
    return kExitNumeric;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw corrgee::InputError("cannot open output file: " + path);
    return out;
}

struct FitOptions {
    std::string xy_path, z_path, w_path;
    std::string id = "id", yvar = "y", wvar = "w";
    std::vector<std::string> xvar, zvar;
    std::string mean_link = "logit", corr_link = "identity", shrink = "none";
    std::string clsout, obsout, probout, results;
    std::string delimiter = ",";
    std::vector<double> start_beta, start_alpha;
    corrgee::FitConfig config;
};

void add_fit_options(CLI::App* cmd, FitOptions& opt) {
    cmd->add_option("--xy", opt.xy_path, "Outcome + mean-covariate file")->required();
    cmd->add_option("--z", opt.z_path, "Pair correlation-covariate file")->required();
    cmd->add_option("--w", opt.w_path, "Cluster weight file")->required();
    cmd->add_option("--id", opt.id, "Cluster id column (xy and w files)")->required();
    cmd->add_option("--yvar", opt.yvar, "0/1 outcome column")->required();
    cmd->add_option("--xvar", opt.xvar, "Mean covariate columns")->required()->delimiter(',');
    cmd->add_option("--zvar", opt.zvar, "Correlation covariate columns")
        ->required()
        ->delimiter(',');
    cmd->add_option("--wvar", opt.wvar, "Frequency weight column")->required();
    cmd->add_option("--mean-link", opt.mean_link, "Mean link: identity, log, logit")
        ->capture_default_str();
    cmd->add_option("--corr-link", opt.corr_link,
                    "Correlation link: identity, log, logit, fisherz")
        ->capture_default_str();
    cmd->add_option("--max-iter", opt.config.max_iter, "Maximum Fisher-scoring iterations")
        ->capture_default_str();
    cmd->add_option("--epsilon", opt.config.epsilon, "Convergence tolerance on parameter changes")
        ->capture_default_str();
    cmd->add_option("--start-beta", opt.start_beta,
                    "Initial mean parameters (default: independence fit)")
        ->delimiter(',');
    cmd->add_option("--start-alpha", opt.start_alpha,
                    "Initial correlation parameters (default: 0.01)")
        ->delimiter(',');
    cmd->add_flag("--fix-alpha", opt.config.fix_alpha, "Hold alpha at its starting values");
    cmd->add_flag("--make-v-one", opt.config.make_v_one, "Set var(R_jk) = 1");
    cmd->add_option("--shrink", opt.shrink, "Shrink on range violations: alpha or theta");
    cmd->add_flag("--print-range", opt.config.print_range,
                  "Report range violations from every iteration");
    cmd->add_flag("--detailed", opt.config.detailed,
                  "Use the joint (detailed) fitting algorithm");
    cmd->add_option("--clsout", opt.clsout, "Write cluster deletion diagnostics here");
    cmd->add_option("--obsout", opt.obsout, "Write observation deletion diagnostics here");
    cmd->add_option("--probout", opt.probout, "Write predicted probabilities here");
    cmd->add_option("--results", opt.results, "Write machine-readable results here");
    cmd->add_option("--delimiter", opt.delimiter, "Input/output field delimiter")
        ->capture_default_str();
}

int run_fit(const FitOptions& opt) {
    corrgee::FitConfig config = opt.config;
    config.mean_link = corrgee::parse_link(opt.mean_link);
    config.corr_link = corrgee::parse_link(opt.corr_link);
    config.shrink = corrgee::parse_shrink(opt.shrink);
    if (!opt.start_beta.empty()) {
        config.start_beta = Eigen::Map<const Eigen::VectorXd>(
            opt.start_beta.data(), static_cast<Eigen::Index>(opt.start_beta.size()));
    }
    if (!opt.start_alpha.empty()) {
        config.start_alpha = Eigen::Map<const Eigen::VectorXd>(
            opt.start_alpha.data(), static_cast<Eigen::Index>(opt.start_alpha.size()));
    }
    if (opt.delimiter.size() != 1) {
        throw corrgee::ConfigError("delimiter must be a single character");
    }

    corrgee::InputNames names;
    names.id = opt.id;
    names.y = opt.yvar;
    names.x = opt.xvar;
    names.z = opt.zvar;
    names.w = opt.wvar;
    names.delimiter = opt.delimiter[0];

    const bool negative_start =
        !opt.start_alpha.empty() &&
        std::any_of(opt.start_alpha.begin(), opt.start_alpha.end(), [](double a) { return a < 0; });
    if ((config.corr_link == corrgee::LinkKind::Log ||
         config.corr_link == corrgee::LinkKind::Logit) &&
        !negative_start) {
        std::cerr << "warning: with a " << corrgee::link_name(config.corr_link)
                  << " correlation link the alpha estimates are usually negative;"
                  << " consider negative --start-alpha values\n";
    }

    const auto [data, pairs] = corrgee::load_inputs(opt.xy_path, opt.z_path, opt.w_path, names);
    const corrgee::FitResult result = corrgee::fit(data, pairs, config);

    corrgee::write_report(std::cout, result, data, pairs, config, opt.xvar, opt.zvar);
    if (!result.converged() && !result.message.empty()) {
        std::cerr << "error: " << result.message << "\n";
    }

    if (!opt.results.empty()) {
        auto out = open_output(opt.results);
        corrgee::write_results(out, result, data, pairs, config, opt.xvar, opt.zvar);
    }
    if (result.state && result.cov) {
        const char delim = opt.delimiter[0];
        const bool need_obs = !opt.obsout.empty();
        if (!opt.clsout.empty() || need_obs) {
            const corrgee::DiagnosticsTable table =
                corrgee::diagnostics_table(*result.state, *result.cov, need_obs);
            if (!opt.clsout.empty()) {
                auto out = open_output(opt.clsout);
                corrgee::write_cluster_diagnostics(out, table, data.p, pairs.q, delim);
            }
            if (need_obs) {
                auto out = open_output(opt.obsout);
                corrgee::write_observation_diagnostics(out, table, data.p, delim);
            }
        }
        if (!opt.probout.empty()) {
            auto out = open_output(opt.probout);
            corrgee::write_predicted_probabilities(out, *result.state, delim);
        }
    }
    return exit_code_for(result.status);
}

struct SimulateOptions {
    std::string scenario;
    std::string out_prefix;
    int replicates_override = -1;
    long long seed_override = -1;
};

int run_simulate(const SimulateOptions& opt) {
    corrgee::SimConfig config = corrgee::parse_scenario(opt.scenario);
    if (opt.replicates_override >= 0) config.replicates = opt.replicates_override;
    if (opt.seed_override >= 0) config.seed = static_cast<std::uint64_t>(opt.seed_override);
    if (config.replicates < 1) throw corrgee::ConfigError("replicates must be >= 1");

    const corrgee::SimReport report = corrgee::run_simulation(config);
    corrgee::write_sim_summary(std::cout, report);
    if (!opt.out_prefix.empty()) {
        auto table = open_output(opt.out_prefix + "_metrics.csv");
        corrgee::write_sim_table(table, report);
        auto summary = open_output(opt.out_prefix + "_summary.txt");
        corrgee::write_sim_summary(summary, report);
    }
    for (const auto& m : report.methods) {
        if (m.converged > 0) return kExitOk;
    }
    return kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Marginal mean and within-cluster correlation regression for binary data"};
    app.require_subcommand(1);

    FitOptions fit_opt;
    CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the joint mean/correlation model");
    add_fit_options(fit_cmd, fit_opt);

    SimulateOptions sim_opt;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a simulation scenario");
    sim_cmd->add_option("--scenario", sim_opt.scenario, "Scenario configuration file")->required();
    sim_cmd->add_option("--out", sim_opt.out_prefix, "Prefix for metric/summary output files");
    sim_cmd->add_option("--replicates", sim_opt.replicates_override, "Override replicate count");
    sim_cmd->add_option("--seed", sim_opt.seed_override, "Override RNG seed");

    try {
        app.parse(argc, argv);
        if (fit_cmd->parsed()) return run_fit(fit_opt);
        return run_simulate(sim_opt);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const corrgee::MeanRangeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMeanRange;
    } catch (const corrgee::SingularError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const corrgee::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const corrgee::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const corrgee::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
