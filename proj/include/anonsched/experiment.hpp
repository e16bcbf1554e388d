#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anonsched/adversary.hpp"
#include "anonsched/clustering.hpp"
#include "anonsched/core.hpp"
#include "anonsched/metrics.hpp"
#include "anonsched/scheduling.hpp"
#include "anonsched/simulation.hpp"
#include "anonsched/trace.hpp"

// Experiment runner: configuration, the end-to-end pipeline
// (arrival -> learning -> grouping -> scheduling -> communication ->
// adversary), CSV emission and parameter sweeps.

namespace anonsched {

enum class GroupingMode { kmodes, random };
enum class ScheduleMode { fixed, updatable };
enum class TraceSource { file, synthetic };

struct ExperimentConfig {
    TimeConfig time;
    ArrivalConfig arrival;
    int clustering_k = 15;
    int clustering_max_iterations = 100;
    GroupingMode grouping = GroupingMode::kmodes;
    int random_repeats = 10;
    SchedulingConfig scheduling;
    ScheduleMode schedule_mode = ScheduleMode::fixed;
    EliminationPolicy policy;
    ChurnModel churn;  // rng_seed filled from the master seed at run time
    TraceSource trace_source = TraceSource::synthetic;
    std::string trace_path;
    bool trace_strict = false;
    std::optional<std::int64_t> trace_epoch;
    SynthTraceParams synth;  // w / slot_seconds are tied to `time`
    int message_size_bytes = 1024;
    bool rejoin_eliminated = false;
    bool dump_activity = false;
    std::string output_dir = "out";
    std::uint64_t master_seed = 1;

    void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

// Flat key=value file with '#' comments; requires config_version = 1.
KeyValues read_config_file(const std::string& path);

// Precedence: overrides (CLI) > ANONSCHED_* environment > file > defaults.
// Unknown keys are configuration errors.
ExperimentConfig make_config(const KeyValues& file_values, const KeyValues& overrides);
ExperimentConfig load_config(const std::string& path, const KeyValues& overrides = {});

// Canonical serialization of every setting except output.dir, so two runs of
// the same experiment echo byte-identical configs.
std::string echo_config(const ExperimentConfig& cfg);

const std::vector<std::string>& known_keys();

// --- pipeline ---------------------------------------------------------------

struct PreparedTrace {
    TraceData trace;
    SlottedActivity activity;  // rebased: slot 0 = learning start
    Batch batch;
};

PreparedTrace prepare_trace(const ExperimentConfig& cfg);

struct LearnedState {
    Simulator simulator;  // snapshot right after the learning phase
    VectorsById learned;
};

LearnedState learn(const ExperimentConfig& cfg, const PreparedTrace& prepared);

// One grouping repetition end to end, in memory. rep selects the random
// grouping seed; it is ignored under k-modes.
struct PipelineResult {
    std::vector<Cluster> clusters;
    KModesResult kmodes_info;  // populated under k-modes grouping
    std::vector<ValidSet> valid_sets;
    std::vector<Schedule> schedules;  // aligned with valid_sets
    std::vector<SetId> infeasible_sets;
    CarryoverPool pool;
    AssignmentBundle bundle;
    Transcript transcript;
    MetricsReport metrics;
    AnonymityReport anonymity;
};

PipelineResult run_rep(const ExperimentConfig& cfg, const LearnedState& learned, int rep);

struct RunSummary {
    std::map<std::string, std::string> values;
};

// Full experiment: runs the pipeline (random grouping repeats it
// random_repeats times into rep subdirectories) and writes all CSV reports
// under cfg.output_dir.
RunSummary run_experiment(const ExperimentConfig& cfg);

// --- sweep ------------------------------------------------------------------

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};

struct SweepSpec {
    std::vector<SweepAxis> axes;
    // Shared (default): every cell runs under the base master seed so paired
    // comparisons see identical draws. Derived: per-cell seeds for
    // independent replications.
    bool derived_seeds = false;
    int jobs = 1;

    void validate() const;
};

// One run_experiment per grid cell under <output_dir>/cellNNN plus a
// combined long-format summary.
void run_sweep(const KeyValues& file_values, const KeyValues& overrides, const SweepSpec& spec,
               const std::string& output_dir);

// Users eliminated during a run; with rejoin enabled they re-enter the next
// batch's arrival stream under fresh identities.
std::vector<UserId> rejoin_candidates(const Transcript& transcript, bool rejoin_enabled);

}  // namespace anonsched
