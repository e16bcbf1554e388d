#include "anonsched/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "anonsched/csv.hpp"
#include "anonsched/rng.hpp"

namespace fs = std::filesystem;

namespace anonsched {

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << content;
}

template <class Fn>
void write_csv(const fs::path& path, Fn&& fn) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    fn(out);
}

SynthTraceParams effective_synth(const ExperimentConfig& cfg) {
    SynthTraceParams p = cfg.synth;
    p.slots_per_interval = cfg.time.slots_per_interval;
    p.slot_seconds = cfg.time.slot_seconds;
    p.rng_seed = rng::derive(cfg.master_seed, "synth");
    if (p.intervals == 0) p.intervals = cfg.time.num_intervals + 2;
    return p;
}

std::string fmt_kv(std::uint64_t v) { return std::to_string(v); }

// Trace analyses over the batch and the protocol window: per-user totals,
// per-interval non-publishing counts, behavior change across intervals.
void write_trace_analyses(const fs::path& dir, const ExperimentConfig& cfg,
                          const PreparedTrace& prepared) {
    const int w = cfg.time.slots_per_interval;
    const std::int64_t window_end = static_cast<std::int64_t>(w) * (1 + cfg.time.num_intervals);

    std::map<std::uint64_t, std::uint32_t> histogram;  // total messages -> user count
    for (UserId u : prepared.batch.users) {
        std::uint64_t total = 0;
        for (const auto& [slot, count] : prepared.activity.per_user[idx(u)]) {
            if (slot >= window_end) break;
            if (slot >= 0) total += count;
        }
        ++histogram[total];
    }
    write_csv(dir / "rates_histogram.csv", [&](std::ostream& out) {
        out << "total_messages,user_count\n";
        for (const auto& [total, users] : histogram) out << total << ',' << users << '\n';
    });

    write_csv(dir / "nonpublishing.csv", [&](std::ostream& out) {
        out << "interval,non_publishing_users\n";
        for (int e = 0; e <= cfg.time.num_intervals; ++e) {
            std::uint32_t none = 0;
            for (UserId u : prepared.batch.users) {
                BehaviorVector v = behavior_from_activity(prepared.activity, u,
                                                          static_cast<std::int64_t>(e) * w, w);
                none += hamming_weight(v) == 0;
            }
            out << e << ',' << none << '\n';
        }
    });

    write_csv(dir / "behavior_change.csv", [&](std::ostream& out) {
        out << "interval,case1_similar,case1_different,case2_similar,case2_different\n";
        std::vector<BehaviorVector> prev, base;
        for (UserId u : prepared.batch.users) {
            base.push_back(behavior_from_activity(prepared.activity, u, 0, w));
        }
        prev = base;
        for (int e = 1; e <= cfg.time.num_intervals; ++e) {
            std::uint32_t c1s = 0, c1d = 0, c2s = 0, c2d = 0;
            std::vector<BehaviorVector> current;
            current.reserve(prepared.batch.users.size());
            for (std::size_t i = 0; i < prepared.batch.users.size(); ++i) {
                BehaviorVector v = behavior_from_activity(
                    prepared.activity, prepared.batch.users[i],
                    static_cast<std::int64_t>(e) * w, w);
                vectors_similar(v, base[i], 1) ? ++c1s : ++c1d;
                vectors_similar(v, prev[i], 1) ? ++c2s : ++c2d;
                current.push_back(std::move(v));
            }
            out << e << ',' << c1s << ',' << c1d << ',' << c2s << ',' << c2d << '\n';
            prev = std::move(current);
        }
    });
}

void write_rep_outputs(const fs::path& dir, const ExperimentConfig& cfg,
                       const PipelineResult& result) {
    write_csv(dir / "clusters.csv",
              [&](std::ostream& out) { write_clusters_csv(out, result.clusters); });
    write_csv(dir / "heads.csv",
              [&](std::ostream& out) { write_heads_csv(out, result.clusters); });

    std::vector<std::tuple<SetId, int, Schedule, int>> schedule_rows;
    for (const ScheduleHistoryRow& row : result.transcript.schedule_history) {
        schedule_rows.emplace_back(row.set, row.interval, row.schedule, row.q_count);
    }
    write_csv(dir / "schedules.csv",
              [&](std::ostream& out) { write_schedules_csv(out, schedule_rows); });

    write_csv(dir / "bandwidth.csv",
              [&](std::ostream& out) { write_bandwidth_csv(out, result.metrics); });
    write_csv(dir / "latency.csv",
              [&](std::ostream& out) { write_latency_csv(out, result.metrics); });
    write_csv(dir / "setsize.csv",
              [&](std::ostream& out) { write_setsize_csv(out, result.metrics); });
    write_csv(dir / "anonymity.csv",
              [&](std::ostream& out) { write_anonymity_csv(out, result.anonymity); });

    if (!result.pool.entries.empty()) {
        write_csv(dir / "carryover.csv", [&](std::ostream& out) {
            out << "pseudonym_id,origin_batch\n";
            for (const CarryoverEntry& e : result.pool.entries) {
                out << idx(e.pseudonym) << ',' << e.origin_batch << '\n';
            }
        });
    }
    if (cfg.rejoin_eliminated) {
        std::vector<UserId> rejoining = rejoin_candidates(result.transcript, true);
        if (!rejoining.empty()) {
            write_csv(dir / "rejoin_pool.csv", [&](std::ostream& out) {
                out << "user,eliminated_at_slot\n";
                for (UserId u : rejoining) {
                    out << idx(u) << ',' << result.transcript.users[idx(u)].eliminated_at
                        << '\n';
                }
            });
        }
    }
}

void summarize_rep(const PipelineResult& result, const std::string& prefix,
                   std::map<std::string, std::string>& values) {
    values[prefix + "valid_sets"] = std::to_string(result.valid_sets.size());
    values[prefix + "infeasible_sets"] = std::to_string(result.infeasible_sets.size());
    values[prefix + "pool_size"] = std::to_string(result.pool.entries.size());
    values[prefix + "total_cover_comm"] = fmt_kv(result.metrics.total_cover_comm);
    values[prefix + "total_cover_learning"] = fmt_kv(result.metrics.total_cover_learning);
    values[prefix + "created"] = fmt_kv(result.metrics.created_total);
    values[prefix + "published"] = fmt_kv(result.metrics.published_total);
    values[prefix + "queued_end"] = fmt_kv(result.metrics.queued_total);
    values[prefix + "in_flight_end"] = fmt_kv(result.metrics.in_flight_total);
    values[prefix + "lost"] = fmt_kv(result.metrics.lost_total);
    values[prefix + "mean_latency_slots"] = csv::fmt_double(result.metrics.mean_latency_slots);
    values[prefix + "eliminated"] = std::to_string(result.metrics.eliminated_count);
    values[prefix + "departed"] = std::to_string(result.metrics.departed_count);
    values[prefix + "deanonymized"] = std::to_string(result.anonymity.deanonymized_count);
    values[prefix + "min_final_candidates"] = std::to_string(result.anonymity.min_candidates);
    values[prefix + "mean_final_candidates"] =
        csv::fmt_double(result.anonymity.mean_candidates);
}

}  // namespace

PreparedTrace prepare_trace(const ExperimentConfig& cfg) {
    PreparedTrace prepared;
    if (cfg.trace_source == TraceSource::file) {
        ParseOptions opt;
        opt.strict = cfg.trace_strict;
        prepared.trace = load_trace(cfg.trace_path, opt);
    } else {
        prepared.trace = synth_trace(effective_synth(cfg));
    }
    if (prepared.trace.events.empty()) throw InputError("trace: no events");

    std::int64_t epoch = cfg.trace_epoch ? *cfg.trace_epoch
                                         : default_epoch(prepared.trace, cfg.time.slot_seconds);
    SlottedActivity global =
        bucket(prepared.trace.events, prepared.trace.users.size(), cfg.time, epoch);
    prepared.batch = run_arrival(global, cfg.arrival, cfg.time.slots_per_interval);
    prepared.activity = rebase(global, -prepared.batch.learning_start);
    return prepared;
}

LearnedState learn(const ExperimentConfig& cfg, const PreparedTrace& prepared) {
    PseudonymDirectory directory = PseudonymDirectory::create(
        prepared.batch.users, rng::derive(cfg.master_seed, "pseudonyms"));
    Simulator simulator(cfg.time, prepared.activity, prepared.batch.users,
                        std::move(directory));
    VectorsById learned = simulator.run_learning();
    return LearnedState{std::move(simulator), std::move(learned)};
}

PipelineResult run_rep(const ExperimentConfig& cfg, const LearnedState& learned, int rep) {
    PipelineResult result;

    const std::uint64_t grouping_seed = rng::derive(cfg.master_seed, "grouping");
    if (cfg.grouping == GroupingMode::kmodes) {
        ClusteringConfig ccfg{cfg.clustering_k, grouping_seed, cfg.clustering_max_iterations};
        result.kmodes_info = kmodes(learned.learned, ccfg);
        result.clusters = result.kmodes_info.clusters;
    } else {
        result.clusters = random_grouping(learned.learned, cfg.clustering_k,
                                          rng::derive(grouping_seed, static_cast<std::uint64_t>(rep)));
    }

    std::vector<int> batch_of(learned.simulator.directory().pseudonym_count(), 0);
    ValidationResult validation = validate_sets(result.clusters, cfg.scheduling.z, batch_of);
    result.pool = std::move(validation.pool);

    // Build schedules; a set whose schedule comes out all-zero could never
    // publish, so it is recorded as infeasible and its members join the pool.
    std::vector<const BehaviorVector*> vector_of(learned.simulator.directory().pseudonym_count(),
                                                 nullptr);
    for (std::size_t i = 0; i < learned.learned.size(); ++i) {
        vector_of[idx(learned.learned.ids[i])] = &learned.learned.vectors[i];
    }
    for (ValidSet& set : validation.valid) {
        std::vector<BehaviorVector> members;
        members.reserve(set.cluster.members.size());
        for (PseudonymId p : set.cluster.members) members.push_back(*vector_of[idx(p)]);
        int q_count = q_count_for(static_cast<int>(members.size()),
                                  cfg.scheduling.q_for(set.id));
        Schedule schedule = create_schedule(members, q_count);
        if (hamming_weight(schedule) == 0) {
            result.infeasible_sets.push_back(set.id);
            for (PseudonymId p : set.cluster.members) {
                result.pool.entries.push_back(CarryoverEntry{p, batch_of[idx(p)]});
            }
            continue;
        }
        result.valid_sets.push_back(set);
        result.schedules.push_back(std::move(schedule));
    }

    result.bundle = broadcast_assignments(result.valid_sets, result.schedules);

    Simulator simulator = learned.simulator;  // fresh copy of the post-learning state
    simulator.install_sets(result.valid_sets, result.schedules, cfg.scheduling,
                           cfg.schedule_mode == ScheduleMode::updatable);
    ChurnModel churn = cfg.churn;
    churn.rng_seed = rng::derive(cfg.master_seed, "churn");
    simulator.run_communication(cfg.policy, churn);

    result.transcript = simulator.take_transcript();
    result.metrics = metrics(result.transcript, cfg.message_size_bytes);

    // Mount the intersection attack on every installed pseudonym.
    ObservationLog log = observe(result.transcript);
    std::vector<TargetActivity> index = publication_index(result.transcript);
    std::vector<CandidateSet> attacks;
    std::vector<PseudonymId> silent;
    std::uint32_t observed_users = 0;
    {
        std::vector<std::uint8_t> seen(result.transcript.users.size(), 0);
        for (const auto& slot_sends : result.transcript.sends) {
            for (const SendRecord& rec : slot_sends) {
                if (!seen[idx(rec.user)]) {
                    seen[idx(rec.user)] = 1;
                    ++observed_users;
                }
            }
        }
    }
    for (const ValidSet& set : result.valid_sets) {
        for (PseudonymId p : set.cluster.members) {
            auto it = std::lower_bound(index.begin(), index.end(), p,
                                       [](const TargetActivity& t, PseudonymId v) {
                                           return t.pseudonym < v;
                                       });
            if (it != index.end() && it->pseudonym == p && !it->publication_slots.empty()) {
                attacks.push_back(intersect_attack(log, p, it->publication_slots));
            } else {
                silent.push_back(p);
            }
        }
    }
    result.anonymity = attack_report(attacks, observed_users, silent);
    return result;
}

std::vector<UserId> rejoin_candidates(const Transcript& transcript, bool rejoin_enabled) {
    std::vector<UserId> out;
    if (!rejoin_enabled) return out;
    for (std::size_t u = 0; u < transcript.users.size(); ++u) {
        if (transcript.users[u].eliminated_at >= 0) out.push_back(user_id(u));
    }
    return out;
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    PreparedTrace prepared = prepare_trace(cfg);
    LearnedState learned = learn(cfg, prepared);

    RunSummary summary;
    summary.values["schema_version"] = "1";
    summary.values["batch_users"] = std::to_string(prepared.batch.users.size());
    summary.values["batch_close_slot"] = std::to_string(prepared.batch.close_slot);
    summary.values["learning_start_slot"] = std::to_string(prepared.batch.learning_start);
    summary.values["trace_users"] = std::to_string(prepared.trace.users.size());
    summary.values["trace_events"] = std::to_string(prepared.trace.events.size());
    summary.values["trace_skipped_lines"] = std::to_string(prepared.trace.skipped_lines);

    const int reps = cfg.grouping == GroupingMode::random ? cfg.random_repeats : 1;
    double mean_cover = 0.0, mean_latency = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        PipelineResult result = run_rep(cfg, learned, rep);
        fs::path rep_dir = dir;
        std::string prefix;
        if (cfg.grouping == GroupingMode::random) {
            char name[32];
            std::snprintf(name, sizeof(name), "rep%02d", rep);
            rep_dir = dir / name;
            fs::create_directories(rep_dir);
            prefix = std::string(name) + ".";
        } else {
            summary.values["kmodes_iterations"] = std::to_string(result.kmodes_info.iterations);
            summary.values["kmodes_converged"] =
                result.kmodes_info.converged ? "true" : "false";
            if (!result.kmodes_info.cost_history.empty()) {
                summary.values["kmodes_cost"] =
                    std::to_string(result.kmodes_info.cost_history.back());
            }
        }
        write_rep_outputs(rep_dir, cfg, result);
        summarize_rep(result, prefix, summary.values);
        mean_cover += static_cast<double>(result.metrics.total_cover_comm) / reps;
        mean_latency += result.metrics.mean_latency_slots / reps;
    }
    if (cfg.grouping == GroupingMode::random) {
        summary.values["mean_total_cover_comm"] = csv::fmt_double(mean_cover);
        summary.values["mean_rep_latency_slots"] = csv::fmt_double(mean_latency);
        summary.values["random_repeats"] = std::to_string(reps);
    }

    write_trace_analyses(dir, cfg, prepared);
    if (cfg.dump_activity) {
        write_csv(dir / "activity.csv", [&](std::ostream& out) {
            write_activity_csv(out, prepared.activity, cfg.time.slots_per_interval);
        });
    }
    write_file(dir / "config_echo.txt", echo_config(cfg));
    write_file(dir / "schema_version.txt", "1\n");
    write_csv(dir / "summary.csv", [&](std::ostream& out) {
        out << "key,value\n";
        for (const auto& [key, value] : summary.values) out << key << ',' << value << '\n';
    });
    return summary;
}

void SweepSpec::validate() const {
    if (axes.empty()) throw ConfigError("sweep: empty parameter grid");
    for (const SweepAxis& axis : axes) {
        if (axis.values.empty()) {
            throw ConfigError("sweep: axis '" + axis.key + "' has no values");
        }
        bool known = false;
        for (const std::string& key : known_keys()) known |= key == axis.key;
        if (!known) throw ConfigError("sweep: unknown parameter '" + axis.key + "'");
    }
    if (jobs < 1) throw ConfigError("sweep: jobs must be >= 1");
}

void run_sweep(const KeyValues& file_values, const KeyValues& overrides, const SweepSpec& spec,
               const std::string& output_dir) {
    spec.validate();

    std::size_t cells = 1;
    for (const SweepAxis& axis : spec.axes) cells *= axis.values.size();

    struct Cell {
        std::string name;
        KeyValues params;
        RunSummary summary;
    };
    std::vector<Cell> grid(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        std::size_t rest = i;
        for (const SweepAxis& axis : spec.axes) {
            grid[i].params[axis.key] = axis.values[rest % axis.values.size()];
            rest /= axis.values.size();
        }
        char name[32];
        std::snprintf(name, sizeof(name), "cell%03zu", i);
        grid[i].name = name;
    }

    fs::create_directories(output_dir);

    auto run_cell = [&](std::size_t i) {
        KeyValues cell_overrides = overrides;
        for (const auto& [key, value] : grid[i].params) cell_overrides[key] = value;
        cell_overrides["output.dir"] = (fs::path(output_dir) / grid[i].name).string();
        ExperimentConfig cfg = make_config(file_values, cell_overrides);
        if (spec.derived_seeds) {
            std::string cell_key;
            for (const auto& [key, value] : grid[i].params) {
                cell_key += key + "=" + value + ";";
            }
            cfg.master_seed = rng::derive(cfg.master_seed, cell_key);
        }
        grid[i].summary = run_experiment(cfg);
    };

    if (spec.jobs <= 1) {
        for (std::size_t i = 0; i < cells; ++i) run_cell(i);
    } else {
        std::size_t next = 0;
        while (next < cells) {
            std::vector<std::future<void>> running;
            for (int j = 0; j < spec.jobs && next < cells; ++j, ++next) {
                running.push_back(std::async(std::launch::async, run_cell, next));
            }
            for (auto& f : running) f.get();
        }
    }

    std::ofstream out(fs::path(output_dir) / "combined_summary.csv", std::ios::binary);
    out << "cell,key,value\n";
    for (const Cell& cell : grid) {
        for (const auto& [key, value] : cell.params) {
            out << cell.name << ",param." << key << ',' << value << '\n';
        }
        for (const auto& [key, value] : cell.summary.values) {
            out << cell.name << ',' << key << ',' << value << '\n';
        }
    }
}

}  // namespace anonsched
