#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ekspf/experiments.hpp"
#include "ekspf/harness.hpp"
#include "ekspf/plots.hpp"
#include "ekspf/validate.hpp"

namespace {

ekspf::ParamMap parse_overrides(const std::vector<std::string>& raw) {
    ekspf::ParamMap overrides;
    for (const std::string& item : raw) {
        const auto pos = item.find('=');
        if (pos == std::string::npos || pos == 0)
            throw std::invalid_argument("override must have the form key=value: " + item);
        const std::string key = item.substr(0, pos);
        const std::string value = item.substr(pos + 1);
        std::size_t consumed = 0;
        double parsed = 0.0;
        try {
            parsed = std::stod(value, &consumed);
        } catch (const std::exception&) {
            throw std::invalid_argument("override value is not a number: " + item);
        }
        if (consumed != value.size())
            throw std::invalid_argument("override value is not a number: " + item);
        overrides[key] = parsed;
    }
    return overrides;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble filtering of counting and diffusion measurements"};
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "execute a Monte Carlo experiment campaign");
    std::string experiment_name;
    std::string filter_name;
    std::string out_dir;
    std::string config_path;
    std::uint64_t seed = 0;
    int n_runs = 0;
    std::vector<int> ensemble_sizes;
    std::vector<std::string> raw_overrides;
    auto* experiment_opt = run_cmd->add_option(
        "--experiment", experiment_name,
        "one of: tracking, tracking-faraway, tracking-circle, shear-frame, duffing-control, ou-validation");
    auto* seed_opt = run_cmd->add_option("--seed", seed, "campaign seed");
    auto* runs_opt = run_cmd->add_option("--runs", n_runs, "number of Monte Carlo runs");
    auto* ensemble_opt = run_cmd->add_option("--ensemble", ensemble_sizes,
                                             "ensemble size (repeatable for a size sweep)");
    auto* filter_opt = run_cmd->add_option("--filter", filter_name, "ekspf | sir | ensrf | all");
    auto* out_opt = run_cmd->add_option("--out", out_dir, "artifact output directory");
    run_cmd->add_option("--override", raw_overrides, "experiment parameter override key=value (repeatable)");
    run_cmd->add_option("--config", config_path, "JSON config file; explicit flags take precedence");

    auto* plot_cmd = app.add_subcommand("plot", "write plot scripts for an existing artifact");
    std::string artifact_dir;
    plot_cmd->add_option("--artifact", artifact_dir, "artifact directory produced by run")->required();

    auto* validate_cmd = app.add_subcommand("validate", "run the invariant and oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) {
            ekspf::ExperimentConfig config;
            if (!config_path.empty()) {
                std::ifstream in(config_path);
                if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
                nlohmann::json j;
                in >> j;
                config = j.get<ekspf::ExperimentConfig>();
            } else if (experiment_opt->count() == 0) {
                throw std::invalid_argument("--experiment is required unless --config is given");
            }
            if (experiment_opt->count() > 0)
                config.experiment = ekspf::experiment_from_string(experiment_name);
            if (seed_opt->count() > 0) config.seed = seed;
            if (runs_opt->count() > 0) config.n_runs = n_runs;
            if (ensemble_opt->count() > 0) config.ensemble_sizes = ensemble_sizes;
            if (filter_opt->count() > 0) config.filter = ekspf::filter_from_string(filter_name);
            if (out_opt->count() > 0) config.out_dir = out_dir;
            if (!raw_overrides.empty()) {
                for (const auto& [key, value] : parse_overrides(raw_overrides))
                    config.overrides[key] = value;
            }
            if (config.out_dir.empty())
                throw std::invalid_argument("--out is required unless --config provides out_dir");
            config.validate();
            const ekspf::RunArtifact artifact = ekspf::run_experiment(config);
            std::cout << "artifact written to " << artifact.dir.string() << " ("
                      << artifact.files.size() << " files)\n";
            const auto& failures = artifact.summary.at("failures");
            if (!failures.empty()) {
                std::cerr << failures.size() << " run(s) failed; see summary.json\n";
                return 2;
            }
            return 0;
        }
        if (plot_cmd->parsed()) {
            const auto written = ekspf::emit_plots(artifact_dir);
            for (const auto& path : written) std::cout << path.string() << "\n";
            std::cout << written.size() << " plot script(s) written\n";
            return 0;
        }
        if (validate_cmd->parsed()) {
            const int failures = ekspf::run_validation(std::cout);
            if (failures > 0) {
                std::cerr << failures << " validation check(s) failed\n";
                return 2;
            }
            std::cout << "all validation checks passed\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
