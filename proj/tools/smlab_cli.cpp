#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "smlab/scenario.hpp"

namespace {

int exit_code(const std::exception& e) {
    if (dynamic_cast<const smlab::ConfigError*>(&e)) return 2;
    if (dynamic_cast<const smlab::ModelError*>(&e)) return 3;
    if (dynamic_cast<const smlab::BlowUpError*>(&e)) return 4;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smlab: semimartingale transform laboratory"};
    app.require_subcommand(1);

    std::string config_ref, report_path, out_dir;
    std::optional<std::uint64_t> seed, steps, paths;

    auto* run = app.add_subcommand("run", "run a scenario (config file or built-in name)");
    run->add_option("config", config_ref, "config path or built-in scenario name")->required();
    run->add_option("--seed", seed, "override run.seed");
    run->add_option("--steps", steps, "override run.steps");
    run->add_option("--paths", paths, "override run.paths");
    run->add_option("--out", out_dir, "override run.out");

    auto* list = app.add_subcommand("list", "list built-in scenarios and presets");

    auto* plot = app.add_subcommand("plot", "write plot-ready CSV for a report");
    plot->add_option("report", report_path, "report.json produced by run")->required();
    plot->add_option("--out", out_dir, "output directory (default: next to the report)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            std::cout << smlab::list_scenarios();
            return 0;
        }
        if (*run) {
            auto cfg = smlab::resolve_config(config_ref);
            if (seed) cfg.set("run.seed", std::to_string(*seed));
            if (steps) cfg.set("run.steps", std::to_string(*steps));
            if (paths) cfg.set("run.paths", std::to_string(*paths));
            if (!out_dir.empty()) cfg.set("run.out", out_dir);
            const auto scenario = smlab::make_scenario(cfg);
            const auto report = smlab::run_scenario(scenario, scenario.out);
            std::cout << report.string() << "\n";
            return 0;
        }
        if (*plot) {
            const auto csv = smlab::emit_plot_data(report_path, out_dir);
            std::cout << csv.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << smlab::error_record(e).dump() << "\n";
        return exit_code(e);
    }
    return 0;
}
