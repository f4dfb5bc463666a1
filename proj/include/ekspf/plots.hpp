#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ekspf/experiments.hpp"
#include "ekspf/harness.hpp"

namespace ekspf {

namespace detail {

inline const char* kPlotLoader = R"(import csv

def load(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return {name: [float(r[i]) for r in rows[1:]] for i, name in enumerate(rows[0])}

)";

inline void require_artifact_file(const std::filesystem::path& artifact_dir,
                                  const std::filesystem::path& relative) {
    if (!std::filesystem::exists(artifact_dir / relative))
        throw std::runtime_error("missing artifact file: " + relative.generic_string());
}

inline std::string python_list(const std::vector<std::string>& items) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < items.size(); ++i) os << (i ? ", " : "") << "\"" << items[i] << "\"";
    os << "]";
    return os.str();
}

/// Labels like "ekspf_ne200" for every (filter, size) whose trajectory file
/// exists for run 0.
inline std::vector<std::string> present_labels(const std::filesystem::path& artifact_dir,
                                               const ExperimentConfig& config) {
    std::vector<std::string> labels;
    for (const FilterKind kind : active_filters(config))
        for (const int size : config.ensemble_sizes) {
            const std::string label = to_string(kind) + "_ne" + std::to_string(size);
            if (std::filesystem::exists(artifact_dir / "runs" / run_label(0) / (label + ".csv")))
                labels.push_back(label);
        }
    return labels;
}

}  // namespace detail

/// Write self-contained matplotlib scripts for the requested plot kinds into
/// <artifact_dir>/plots. Scripts reference only CSVs inside the artifact
/// directory, via paths relative to it, and are never executed here. An
/// explicitly empty kinds list writes nothing and succeeds.
inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& artifact_dir,
                                                     const std::vector<std::string>& kinds) {
    detail::require_artifact_file(artifact_dir, "config.json");
    std::ifstream in(artifact_dir / "config.json");
    nlohmann::json j;
    in >> j;
    const ExperimentConfig config = j.get<ExperimentConfig>();
    const ParamMap params = config.resolved_params();

    std::vector<std::filesystem::path> written;
    if (kinds.empty()) return written;
    std::filesystem::create_directories(artifact_dir / "plots");

    auto emit = [&](const std::string& name, const std::string& body) {
        const std::filesystem::path rel = std::filesystem::path("plots") / (name + ".py");
        std::ofstream out(artifact_dir / rel, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + (artifact_dir / rel).string());
        out << "# Run from the artifact root: python plots/" << name << ".py\n"
            << "import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n"
            << detail::kPlotLoader << body;
        written.push_back(artifact_dir / rel);
    };

    const std::vector<std::string> labels = detail::present_labels(artifact_dir, config);
    const std::string run0 = "runs/" + detail::run_label(0) + "/";

    for (const std::string& kind : kinds) {
        if (kind == "trajectory_xy") {
            detail::require_artifact_file(artifact_dir, "truth.csv");
            for (const auto& label : labels)
                detail::require_artifact_file(artifact_dir, run0 + label + ".csv");
            std::ostringstream body;
            body << "truth = load(\"truth.csv\")\n"
                 << "plt.figure(figsize=(6, 6))\n"
                 << "plt.plot(truth[\"x_0\"], truth[\"x_2\"], \"k-\", label=\"truth\")\n"
                 << "for label in " << detail::python_list(labels) << ":\n"
                 << "    est = load(\"" << run0 << "\" + label + \".csv\")\n"
                 << "    plt.plot(est[\"xhat_0\"], est[\"xhat_2\"], label=label)\n"
                 << "plt.xlabel(\"x [m]\")\nplt.ylabel(\"y [m]\")\nplt.legend()\n"
                 << "plt.title(\"trajectory, run 0\")\n"
                 << "plt.savefig(\"plots/trajectory_xy.png\", dpi=150)\n";
            emit("plot_trajectory_xy", body.str());
        } else if (kind == "rmse") {
            std::vector<std::string> rmse_files;
            for (const auto& label : labels)
                if (std::filesystem::exists(artifact_dir / ("rmse_" + label + ".csv")))
                    rmse_files.push_back("rmse_" + label + ".csv");
            if (rmse_files.empty())
                throw std::runtime_error("missing artifact file: rmse_<filter>_ne<size>.csv");
            std::ostringstream body;
            body << "for path in " << detail::python_list(rmse_files) << ":\n"
                 << "    table = load(path)\n"
                 << "    plt.figure(figsize=(7, 4))\n"
                 << "    for name, series in table.items():\n"
                 << "        if name != \"t\":\n"
                 << "            plt.plot(table[\"t\"], series, label=name)\n"
                 << "    plt.xlabel(\"t [s]\")\n"
                 << "    plt.ylabel(\"RMSE\")\n"
                 << "    plt.legend()\n"
                 << "    plt.title(path)\n"
                 << "    plt.savefig(\"plots/\" + path.replace(\".csv\", \".png\"), dpi=150)\n"
                 << "    plt.close()\n";
            emit("plot_rmse", body.str());
        } else if (kind == "parameters") {
            const auto n = static_cast<int>(params.count("n_floors") ? params.at("n_floors") : 0.0);
            if (n == 0) throw std::invalid_argument("emit_plots: 'parameters' needs a shear-frame artifact");
            for (const auto& label : labels)
                detail::require_artifact_file(artifact_dir, run0 + label + ".csv");
            std::ostringstream body;
            body << "n = " << n << "\n"
                 << "k_true = " << csv::format(params.at("k_true")) << "\n"
                 << "c_true = " << csv::format(params.at("c_true")) << "\n"
                 << "for label in " << detail::python_list(labels) << ":\n"
                 << "    est = load(\"" << run0 << "\" + label + \".csv\")\n"
                 << "    fig, (ax_k, ax_c) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)\n"
                 << "    for f in range(n):\n"
                 << "        ax_k.plot(est[\"t\"], est[\"xhat_\" + str(2 * n + f)], label=f\"K{f + 1}\")\n"
                 << "        ax_c.plot(est[\"t\"], est[\"xhat_\" + str(3 * n + f)], label=f\"C{f + 1}\")\n"
                 << "    ax_k.axhline(k_true, color=\"k\", linestyle=\"--\")\n"
                 << "    ax_c.axhline(c_true, color=\"k\", linestyle=\"--\")\n"
                 << "    ax_k.set_ylabel(\"stiffness [N/m]\")\n"
                 << "    ax_c.set_ylabel(\"damping [Ns/m]\")\n"
                 << "    ax_c.set_xlabel(\"t [s]\")\n"
                 << "    ax_k.legend(ncol=n)\n"
                 << "    fig.savefig(f\"plots/parameters_{label}.png\", dpi=150)\n"
                 << "    plt.close(fig)\n";
            emit("plot_parameters", body.str());
        } else if (kind == "estimates") {
            detail::require_artifact_file(artifact_dir, run0 + "truth.csv");
            for (const auto& label : labels)
                detail::require_artifact_file(artifact_dir, run0 + label + ".csv");
            std::ostringstream body;
            body << "truth = load(\"" << run0 << "truth.csv\")\n"
                 << "plt.figure(figsize=(7, 4))\n"
                 << "plt.plot(truth[\"t\"], truth[\"x_0\"], \"k-\", label=\"truth\")\n"
                 << "for label in " << detail::python_list(labels) << ":\n"
                 << "    est = load(\"" << run0 << "\" + label + \".csv\")\n"
                 << "    plt.plot(est[\"t\"], est[\"xhat_0\"], label=label)\n"
                 << "plt.xlabel(\"t [s]\")\nplt.ylabel(\"state\")\nplt.legend()\n"
                 << "plt.title(\"estimates vs truth, run 0\")\n"
                 << "plt.savefig(\"plots/estimates.png\", dpi=150)\n";
            emit("plot_estimates", body.str());
        } else if (kind == "control") {
            std::vector<std::string> control_files;
            for (const int size : config.ensemble_sizes) {
                const std::string file = run0 + "control_ne" + std::to_string(size) + ".csv";
                detail::require_artifact_file(artifact_dir, file);
                control_files.push_back(file);
            }
            std::ostringstream body;
            body << "for path in " << detail::python_list(control_files) << ":\n"
                 << "    table = load(path)\n"
                 << "    fig, (ax_x, ax_u) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)\n"
                 << "    ax_x.plot(table[\"t\"], table[\"x_unc\"], label=\"uncontrolled\")\n"
                 << "    ax_x.plot(table[\"t\"], table[\"x\"], label=\"controlled\")\n"
                 << "    ax_u.plot(table[\"t\"], table[\"u\"], label=\"applied control\")\n"
                 << "    ax_x.set_ylabel(\"displacement [m]\")\n"
                 << "    ax_u.set_ylabel(\"control [N]\")\n"
                 << "    ax_u.set_xlabel(\"t [s]\")\n"
                 << "    ax_x.legend()\n"
                 << "    ax_u.legend()\n"
                 << "    fig.savefig(\"plots/\" + path.split(\"/\")[-1].replace(\".csv\", \".png\"), dpi=150)\n"
                 << "    plt.close(fig)\n";
            emit("plot_control", body.str());
        } else {
            throw std::invalid_argument("emit_plots: unknown plot kind '" + kind + "'");
        }
    }
    return written;
}

/// Default plot set for the artifact's experiment.
inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& artifact_dir) {
    detail::require_artifact_file(artifact_dir, "config.json");
    std::ifstream in(artifact_dir / "config.json");
    nlohmann::json j;
    in >> j;
    const ExperimentConfig config = j.get<ExperimentConfig>();
    std::vector<std::string> kinds;
    switch (config.experiment) {
        case Experiment::tracking:
        case Experiment::tracking_faraway:
        case Experiment::tracking_circle:
            kinds = {"trajectory_xy", "rmse"};
            break;
        case Experiment::shear_frame:
            kinds = {"rmse", "parameters"};
            break;
        case Experiment::ou_validation:
            kinds = {"estimates", "rmse"};
            break;
        case Experiment::duffing_control:
            kinds = {"control"};
            break;
    }
    return emit_plots(artifact_dir, kinds);
}

}  // namespace ekspf
