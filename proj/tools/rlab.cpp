// recency-lab CLI: train biased-attention LMs, extract word surprisal,
// run the reading-time regression harness, analyze attention heads, and
// assemble reports.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <exception>
#include <iostream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rlab/experiment.hpp"

namespace {

struct CommonOpts {
    std::vector<std::string> config_paths;
    std::string out_override;
    uint64_t seed_override = 0;
    bool seed_set = false;
    bool parallel = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool multi_config) {
    auto* config = cmd->add_option("--config", opts.config_paths,
                                   "experiment config file (repeatable)");
    config->required();
    if (!multi_config) config->expected(1);
    cmd->add_option("--out", opts.out_override, "override paths.out_dir");
    cmd->add_option("--seed", opts.seed_override, "override the experiment seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_flag("--parallel", opts.parallel, "run independent conditions concurrently");
}

std::vector<rlab::ExperimentConfig> load_conditions(const CommonOpts& opts) {
    std::vector<rlab::ExperimentConfig> configs;
    for (const auto& path : opts.config_paths) {
        rlab::ExperimentConfig cfg = rlab::load_experiment_config(path);
        if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
        if (opts.seed_set) {
            cfg.model.seed = opts.seed_override;
            cfg.train.seed = opts.seed_override;
        }
        configs.push_back(std::move(cfg));
    }
    return configs;
}

// Runs fn over each condition, optionally in parallel; first exception
// wins and is rethrown on the main thread.
template <typename Fn>
void for_each_condition(const std::vector<rlab::ExperimentConfig>& configs, bool parallel, Fn fn) {
    if (!parallel || configs.size() < 2) {
        for (const auto& cfg : configs) fn(cfg);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(configs.size());
    for (size_t i = 0; i < configs.size(); ++i)
        workers.emplace_back([&, i] {
            try {
                fn(configs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"recency-lab: recency-biased attention LMs and reading-time evaluation"};
    app.require_subcommand(1);

    CommonOpts train_opts, surprisal_opts, regress_opts, heads_opts, report_opts;
    auto* train = app.add_subcommand("train", "train a condition; writes checkpoint + loss log");
    add_common(train, train_opts, true);
    auto* surprisal = app.add_subcommand("surprisal", "score eval documents with a checkpoint");
    add_common(surprisal, surprisal_opts, true);
    auto* regress = app.add_subcommand("regress", "reading-time regression; delta log-likelihood table");
    add_common(regress, regress_opts, true);
    auto* heads = app.add_subcommand("heads", "per-head attention analysis on dependencies");
    add_common(heads, heads_opts, true);
    auto* report = app.add_subcommand("report", "summary table and plots for a run");
    add_common(report, report_opts, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            for_each_condition(load_conditions(train_opts), train_opts.parallel, rlab::cmd_train);
        else if (surprisal->parsed())
            for_each_condition(load_conditions(surprisal_opts), surprisal_opts.parallel,
                               rlab::cmd_surprisal);
        else if (regress->parsed())
            rlab::cmd_regress(load_conditions(regress_opts));
        else if (heads->parsed())
            for_each_condition(load_conditions(heads_opts), heads_opts.parallel, rlab::cmd_heads);
        else if (report->parsed())
            rlab::cmd_report(load_conditions(report_opts));
    } catch (const rlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const rlab::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const rlab::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
