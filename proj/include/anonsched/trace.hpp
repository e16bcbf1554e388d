#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "anonsched/core.hpp"

// Trace ingestion and synthesis. A trace is a stream of publishing events
// (timestamp, user, topic); this module parses real-world-shaped logs,
// generates synthetic ones and buckets events into per-user slot counts.

namespace anonsched {

struct TraceEvent {
    std::int64_t timestamp = 0;  // epoch seconds
    UserId user{};
    std::uint32_t topic = 0;     // interned tag; carried through, unused by the protocol
};

struct TraceData {
    std::vector<TraceEvent> events;  // sorted ascending by timestamp (stable)
    std::vector<std::string> users;  // id -> user string, in first-appearance order
    std::vector<std::string> topics;
    std::size_t skipped_lines = 0;
    std::vector<std::size_t> skipped_line_numbers;  // 1-based, first few only
};

struct ParseOptions {
    bool strict = false;  // fail on the first malformed line instead of skipping
    std::size_t max_reported_skips = 16;
};

// One record per line: timestamp, user id, topic. Comma- or tab-separated,
// auto-detected from the first non-empty line.
TraceData parse_trace(std::istream& in, const ParseOptions& opt = {});

// Reads a trace file; gzip-compressed input is detected by magic bytes.
TraceData load_trace(const std::string& path, const ParseOptions& opt = {});

void write_trace(std::ostream& out, const TraceData& trace);

// First event's timestamp rounded down to a slot boundary; 0 for an empty trace.
std::int64_t default_epoch(const TraceData& trace, std::int64_t slot_seconds);

// Per-user real-message counts on a global slot axis. Slots may be rebased
// (shifted) so that slot 0 is the start of the learning interval, in which
// case pre-learning backlog sits at negative slots.
struct SlottedActivity {
    std::vector<std::vector<std::pair<std::int64_t, std::uint32_t>>> per_user;  // sorted by slot
    std::uint64_t total_count = 0;

    std::size_t num_users() const { return per_user.size(); }
    std::uint32_t count_at(UserId u, std::int64_t slot) const;
    // Slot of the user's first event, or nullopt if the user never publishes.
    std::optional<std::int64_t> first_slot(UserId u) const;
};

SlottedActivity bucket(const std::vector<TraceEvent>& events, std::size_t num_users,
                       const TimeConfig& time, std::int64_t epoch);

SlottedActivity rebase(const SlottedActivity& activity, std::int64_t offset);

// Behavior vector over slots [interval_begin, interval_begin + w): bit l set
// iff the user created at least one real message in that slot.
BehaviorVector behavior_from_activity(const SlottedActivity& activity, UserId u,
                                      std::int64_t interval_begin, int w);

struct SynthTraceParams {
    std::size_t num_users = 1000;
    int intervals = 32;
    int slots_per_interval = 24;
    std::int64_t slot_seconds = 3600;
    double base_rate = 0.02;   // per-slot activity probability outside popular slots
    int groups = 0;            // >0 partitions users into behavior groups
    double group_rate = 0.9;   // per-slot probability in the group's popular slots
    int quiet_start = -1;      // diurnal mask [quiet_start, quiet_end): activity suppressed
    int quiet_end = -1;
    bool first_interval_event = false;  // force one event per user in interval 0
    std::uint64_t rng_seed = 1;

    void validate() const;
};

// Deterministic: identical params and seed give a byte-identical trace.
TraceData synth_trace(const SynthTraceParams& p);

// Group index of a user / popular-slot ownership under the synthetic model.
int synth_group_of(const SynthTraceParams& p, std::size_t user);
int synth_group_of_slot(const SynthTraceParams& p, int slot);

void write_activity_csv(std::ostream& out, const SlottedActivity& activity, int w);

}  // namespace anonsched
