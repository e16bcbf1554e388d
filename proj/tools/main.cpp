// Experiment runner CLI. Subcommands: run, sweep, synth, plot,
// validate-config. Exit codes: 0 success, 1 config error, 2 input error,
// 3 internal invariant violation.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "anonsched/experiment.hpp"
#include "anonsched/plot.hpp"
#include "anonsched/trace.hpp"

namespace {

using anonsched::KeyValues;

KeyValues parse_sets(const std::vector<std::string>& sets) {
    KeyValues out;
    for (const std::string& kv : sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw anonsched::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

KeyValues file_values_or_empty(const std::string& config_path) {
    if (config_path.empty()) return {};
    return anonsched::read_config_file(config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trace-driven simulator for schedule-based intersection-attack mitigation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> set_args;
    std::string out_override;
    std::string seed_override;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "Config file (key = value lines)");
        cmd->add_option("--set", set_args, "Override a config key, e.g. --set churn.rate=0.3");
        cmd->add_option("-o,--out", out_override, "Output directory");
        cmd->add_option("--seed", seed_override, "Master RNG seed");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "Run one experiment");
    add_common(run_cmd);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a parameter grid");
    add_common(sweep_cmd);
    std::vector<std::string> grid_args;
    std::string seed_mode = "shared";
    int jobs = 1;
    sweep_cmd->add_option("--grid", grid_args, "Axis, e.g. --grid scheduling.q_fraction=0.05,0.1")
        ->required();
    sweep_cmd->add_option("--seed-mode", seed_mode, "shared|derived per-cell seeds")
        ->check(CLI::IsMember({"shared", "derived"}));
    sweep_cmd->add_option("--jobs", jobs, "Concurrent cells");

    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic trace file");
    add_common(synth_cmd);
    std::string synth_out;
    synth_cmd->add_option("--trace-out", synth_out, "Trace file to write")->required();

    CLI::App* plot_cmd = app.add_subcommand("plot", "Render a CSV as an SVG line chart");
    anonsched::PlotSpec plot_spec;
    std::string plot_out;
    plot_cmd->add_option("--csv", plot_spec.csv_path, "Input CSV")->required();
    plot_cmd->add_option("--x", plot_spec.x_column, "X column")->required();
    plot_cmd->add_option("--y", plot_spec.y_column, "Y column")->required();
    plot_cmd->add_option("--group", plot_spec.group_column, "Series column");
    plot_cmd->add_option("--title", plot_spec.title, "Chart title");
    plot_cmd->add_option("--svg-out", plot_out, "SVG file to write")->required();

    CLI::App* validate_cmd =
        app.add_subcommand("validate-config", "Parse, validate and echo the config");
    add_common(validate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        KeyValues overrides = parse_sets(set_args);
        if (!out_override.empty()) overrides["output.dir"] = out_override;
        if (!seed_override.empty()) overrides["seed"] = seed_override;

        if (run_cmd->parsed()) {
            anonsched::ExperimentConfig cfg =
                anonsched::make_config(file_values_or_empty(config_path), overrides);
            anonsched::RunSummary summary = anonsched::run_experiment(cfg);
            std::cout << "run complete: " << cfg.output_dir << "\n";
            for (const auto& [key, value] : summary.values) {
                std::cout << "  " << key << " = " << value << "\n";
            }
        } else if (sweep_cmd->parsed()) {
            anonsched::SweepSpec spec;
            for (const std::string& axis : grid_args) {
                std::size_t eq = axis.find('=');
                if (eq == std::string::npos) {
                    throw anonsched::ConfigError("--grid expects key=v1,v2,... got '" + axis +
                                                 "'");
                }
                anonsched::SweepAxis parsed;
                parsed.key = axis.substr(0, eq);
                std::string values = axis.substr(eq + 1);
                std::size_t start = 0;
                while (start <= values.size()) {
                    std::size_t comma = values.find(',', start);
                    if (comma == std::string::npos) {
                        parsed.values.push_back(values.substr(start));
                        break;
                    }
                    parsed.values.push_back(values.substr(start, comma - start));
                    start = comma + 1;
                }
                spec.axes.push_back(std::move(parsed));
            }
            spec.derived_seeds = seed_mode == "derived";
            spec.jobs = jobs;
            std::string out_dir = out_override.empty() ? "sweep_out" : out_override;
            overrides.erase("output.dir");
            anonsched::run_sweep(file_values_or_empty(config_path), overrides, spec, out_dir);
            std::cout << "sweep complete: " << out_dir << "\n";
        } else if (synth_cmd->parsed()) {
            anonsched::ExperimentConfig cfg =
                anonsched::make_config(file_values_or_empty(config_path), overrides);
            anonsched::SynthTraceParams params = cfg.synth;
            params.slots_per_interval = cfg.time.slots_per_interval;
            params.slot_seconds = cfg.time.slot_seconds;
            params.rng_seed = cfg.master_seed;
            if (params.intervals == 0) params.intervals = cfg.time.num_intervals + 2;
            anonsched::TraceData trace = anonsched::synth_trace(params);
            std::ofstream out(synth_out, std::ios::binary);
            if (!out) throw anonsched::InputError("synth: cannot write '" + synth_out + "'");
            anonsched::write_trace(out, trace);
            std::cout << "wrote " << trace.events.size() << " events for "
                      << trace.users.size() << " users to " << synth_out << "\n";
        } else if (plot_cmd->parsed()) {
            anonsched::plot_to_file(plot_spec, plot_out);
            std::cout << "wrote " << plot_out << "\n";
        } else if (validate_cmd->parsed()) {
            anonsched::ExperimentConfig cfg =
                anonsched::make_config(file_values_or_empty(config_path), overrides);
            std::cout << anonsched::echo_config(cfg);
        }
    } catch (const anonsched::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const anonsched::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
