#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "anonsched/core.hpp"
#include "anonsched/clustering.hpp"
#include "anonsched/scheduling.hpp"
#include "anonsched/trace.hpp"

// The five-phase state machine: batch arrival, learning, communication with
// per-user message queues, cover traffic, churn, elimination policies,
// graceful departures and transcript capture. The user<->pseudonym bijection
// lives in PseudonymDirectory, which is simulator-side ground truth; the
// adversary module never receives it.

namespace anonsched {

struct ArrivalConfig {
    std::size_t batch_threshold = 5000;
    std::optional<std::int64_t> max_wait_slots;  // unset: wait for the full batch

    void validate() const {
        if (batch_threshold < 1) throw ConfigError("arrival: batch_threshold must be >= 1");
        if (max_wait_slots && *max_wait_slots < 1) {
            throw ConfigError("arrival: max_wait_slots must be >= 1");
        }
    }
};

struct Batch {
    std::vector<UserId> users;          // ascending
    std::int64_t close_slot = 0;        // trace-global slot at which the batch was fixed
    std::int64_t learning_start = 0;    // first slot of the learning interval (multiple of w)
};

// Users arrive at the slot of their first trace event. The batch closes when
// batch_threshold users have arrived, or at the max_wait deadline (with
// whoever arrived by then), or at stream end. Zero collected users is an
// error. The learning interval begins at the next interval boundary.
Batch run_arrival(const SlottedActivity& activity, const ArrivalConfig& cfg, int w);

// Ground-truth user<->pseudonym bijection. Pseudonym numbers are a seeded
// shuffle so they carry no relation to user numbering. reissue() supports the
// fresh-pseudonym rule for sets that mix batches.
class PseudonymDirectory {
public:
    static PseudonymDirectory create(const std::vector<UserId>& users, std::uint64_t rng_seed);

    PseudonymId pseudonym_of(UserId u) const;
    UserId owner_of(PseudonymId p) const;
    bool has_pseudonym(UserId u) const { return by_user_.count(idx(u)) > 0; }
    bool retired(PseudonymId p) const { return retired_[idx(p)]; }
    std::size_t pseudonym_count() const { return owner_.size(); }  // ids are dense

    PseudonymId reissue(UserId u);

    // Issue pseudonyms for a later batch's users; ids continue the dense range.
    void extend(const std::vector<UserId>& users, std::uint64_t rng_seed);

private:
    std::unordered_map<std::size_t, PseudonymId> by_user_;
    std::vector<UserId> owner_;        // by pseudonym index
    std::vector<std::uint8_t> retired_;
};

struct EliminationPolicy {
    enum class Kind { no_chances, chances };
    Kind kind = Kind::no_chances;
    int wait_active_slots = 1;            // d, in active-slot units
    std::optional<int> max_failures = 1;  // total missed active slots allowed; nullopt = unlimited

    static EliminationPolicy no_chances() { return {}; }
    static EliminationPolicy chances(int d, std::optional<int> max_failures = 1) {
        return {Kind::chances, d, max_failures};
    }

    // NoChances behaves as a zero-length waiting window.
    int window() const { return kind == Kind::chances ? wait_active_slots : 0; }

    void validate() const {
        if (kind == Kind::chances && wait_active_slots < 1) {
            throw ConfigError("elimination: d must be >= 1 for chances");
        }
        if (max_failures && *max_failures < 0) {
            throw ConfigError("elimination: max_failures must be >= 0");
        }
    }
};

struct ChurnModel {
    double rate = 0.0;              // fraction of each set selected to misbehave
    double miss_probability = 0.5;  // per active slot, for selected users
    std::uint64_t rng_seed = 0;
    // Forced (user, slot) misses for replay and targeted tests; applied on
    // top of the stochastic draws.
    std::vector<std::pair<UserId, std::int64_t>> scripted_misses;

    void validate() const {
        if (rate < 0.0 || rate > 1.0) throw ConfigError("churn: rate not in [0,1]");
        if (miss_probability < 0.0 || miss_probability > 1.0) {
            throw ConfigError("churn: miss_probability not in [0,1]");
        }
    }
};

struct DepartureConfig {
    std::vector<std::pair<UserId, std::int64_t>> requests;  // (user, request slot)
    int min_departers = 2;
};

// Requesters are removed only when at least min_departers of the set's alive
// members have requested; returns the removed users (empty below threshold).
std::vector<UserId> departures_ready(const std::vector<UserId>& members,
                                     const std::vector<UserId>& requesters, int min_departers);

struct QueuedMessage {
    std::uint64_t id = 0;
    std::int64_t creation_slot = 0;  // protocol slot; negative = created before learning
};

enum class Membership : std::uint8_t { outside, active, eliminated, departed };

struct UserState {
    std::deque<QueuedMessage> queue;  // pending reals, creation order
    Membership membership = Membership::outside;
    SetId set{};
    int misses_total = 0;
    int missed_in_episode = 0;  // > 0 while an elimination window is open
    bool selected_for_churn = false;
    bool departure_requested = false;
};

struct SlotSend {
    int count = 0;  // messages transmitted (reals + covers)
    std::vector<QueuedMessage> reals;
};

// One user-slot step: enqueue the slot's new reals; in an active slot pop up
// to `capacity` reals and pad with covers to exactly `capacity`; in an
// inactive slot send nothing.
SlotSend user_slot_step(UserState& state, bool active, int capacity,
                        std::span<const QueuedMessage> new_reals);

// --- Transcript -----------------------------------------------------------

struct SendRecord {
    UserId user{};
    std::uint32_t count = 0;  // total messages sent in the slot
    std::uint32_t reals = 0;
    bool catch_up = false;    // send fulfilled previously missed slots too
};

struct PublicationRecord {
    std::uint64_t message_id = 0;
    PseudonymId pseudonym{};
    std::int64_t creation_slot = 0;
    std::int64_t sent_slot = 0;
    std::int64_t publish_slot = 0;
};

struct SetSizeRecord {
    SetId set{};
    std::uint32_t size = 0;
};

enum class RemovalReason : std::uint8_t { missed_no_chances, window_lapsed, failures_exceeded };

struct EliminationRecord {
    std::int64_t slot = 0;
    UserId user{};
    SetId set{};
    RemovalReason reason{};
};

struct DepartureRecord {
    std::int64_t slot = 0;
    UserId user{};
    SetId set{};
};

struct UserTally {
    bool in_batch = false;
    bool simulated = false;  // member of an installed valid set
    std::uint64_t created = 0;        // reals that entered the queue
    std::uint64_t published = 0;
    std::uint64_t published_comm = 0;
    std::uint64_t queued_end = 0;
    std::uint64_t in_flight_end = 0;  // sent but still withheld when the run ended
    std::uint64_t lost = 0;           // queue dropped at elimination/departure
    std::uint64_t ignored_after_removal = 0;
    std::uint64_t covers_learning = 0;
    std::uint64_t covers_comm = 0;
    std::uint64_t reals_sent_learning = 0;
    std::uint64_t reals_sent_comm = 0;
    std::uint64_t active_attended = 0;   // communication active slots where the user sent
    std::uint64_t active_fulfilled = 0;  // attended plus missed slots later caught up
    std::int64_t eliminated_at = -1;
    std::int64_t departed_at = -1;
};

struct ScheduleHistoryRow {
    SetId set{};
    std::int32_t interval = 0;
    Schedule schedule;
    int q_count = 0;
};

// Everything the run produced. Sender records are user-side metadata;
// publication records are pseudonym-side content. No record pairs the two.
struct Transcript {
    TimeConfig time;
    std::int64_t slot_count = 0;  // w * (1 + v); slot 0 = first learning slot
    std::vector<std::vector<SendRecord>> sends;               // [slot]
    std::vector<std::vector<PublicationRecord>> publications; // [publish slot]
    std::vector<std::vector<SetSizeRecord>> set_sizes;        // [slot], communication only
    std::vector<EliminationRecord> eliminations;
    std::vector<DepartureRecord> departures;
    std::vector<UserTally> users;  // by user index over the trace universe
    std::vector<ScheduleHistoryRow> schedule_history;
};

// --- Simulator -------------------------------------------------------------

class Simulator {
public:
    // activity must be rebased so that slot 0 is the first learning slot;
    // batch users' earlier events become queued backlog with their original
    // creation slots.
    Simulator(const TimeConfig& time, SlottedActivity activity, std::vector<UserId> batch_users,
              PseudonymDirectory directory);

    // Learning Phase: every batch user sends m messages per slot, cover-filled.
    // Returns per-pseudonym behavior vectors (bit = creation slot, plus
    // transmitted backlog), sorted by pseudonym id.
    VectorsById run_learning();

    // Install the valid sets and their initial schedules for the
    // Communication Phase. With updatable == true, schedules are recomputed
    // from each completed interval's behavior under the update gate.
    void install_sets(const std::vector<ValidSet>& sets, const std::vector<Schedule>& schedules,
                      const SchedulingConfig& sched_cfg, bool updatable);

    void run_communication(const EliminationPolicy& policy, const ChurnModel& churn,
                           const DepartureConfig& departures = {});

    const Transcript& transcript() const { return transcript_; }
    Transcript take_transcript() { return std::move(transcript_); }
    const PseudonymDirectory& directory() const { return directory_; }
    const std::vector<UserState>& user_states() const { return states_; }

private:
    struct BlockedBundle {
        std::int64_t slot = 0;
        std::vector<UserId> blockers;
        std::vector<PublicationRecord> records;
    };
    struct SetState {
        SetId id{};
        std::vector<UserId> members;  // alive, ascending
        Schedule schedule;
        Fraction q{1, 10};
        int q_count = 1;
        std::vector<BlockedBundle> blocked;
    };

    std::uint32_t take_creations(UserId u, std::int64_t slot);
    void enqueue_creations(UserId u, std::int64_t slot);
    void publish(PublicationRecord rec, std::int64_t publish_slot);
    void release_blocks_of(SetState& set, UserId resolved, std::int64_t slot);
    void eliminate(SetState& set, UserId u, std::int64_t slot, RemovalReason reason);

    TimeConfig time_;
    SlottedActivity activity_;
    std::vector<UserId> batch_;
    PseudonymDirectory directory_;
    Transcript transcript_;
    std::vector<UserState> states_;
    std::vector<std::size_t> cursor_;  // per-user position into activity
    std::vector<Bits> backlog_bits_;   // learning bits owed to transmitted backlog
    std::uint64_t next_message_id_ = 0;
    bool learning_done_ = false;
    std::vector<SetState> sets_;
    bool updatable_ = false;
    SchedulingConfig sched_cfg_;
};

}  // namespace anonsched
