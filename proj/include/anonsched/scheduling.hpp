#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "anonsched/core.hpp"
#include "anonsched/clustering.hpp"

// Communication schedules: per-set activity-threshold construction, validity
// filtering against the minimum set size z, carryover of invalid sets to the
// next batch, the per-interval update rule and the broadcast bundle.

namespace anonsched {

struct SchedulingConfig {
    Fraction q_fraction{1, 10};                 // global activity threshold
    std::map<SetId, Fraction> q_overrides;      // per-set thresholds
    int z = 50;                                 // minimum valid set size
    int min_active_for_update = 2;

    Fraction q_for(SetId set) const {
        auto it = q_overrides.find(set);
        return it == q_overrides.end() ? q_fraction : it->second;
    }

    void validate() const {
        auto check_q = [](const Fraction& q) {
            if (q.num <= 0 || q.num > q.den) {
                throw ConfigError("scheduling: q_fraction must be in (0,1]");
            }
        };
        check_q(q_fraction);
        for (const auto& [set, q] : q_overrides) check_q(q);
        if (z < 1) throw ConfigError("scheduling: z must be >= 1");
        if (min_active_for_update < 1) {
            throw ConfigError("scheduling: min_active_for_update must be >= 1");
        }
    }
};

// Absolute activity threshold for a set: ceil(q * size), at least 1.
int q_count_for(int cluster_size, Fraction q_fraction);

// Slot l is active iff at least q_count member vectors have a 1 at l.
Schedule create_schedule(std::span<const BehaviorVector> member_vectors, int q_count);

// Recompute from the newest interval's vectors; adopt only when the candidate
// schedule has at least min_active active slots. An empty vector list counts
// as an all-zero candidate and leaves the current schedule in place.
Schedule update_schedule(const Schedule& current, std::span<const BehaviorVector> new_vectors,
                         int q_count, int min_active);

struct ValidSet {
    SetId id{};          // position in the grouping output
    Cluster cluster;
    bool mixed_batches = false;  // members from more than one batch: publish
                                 // under fresh pseudonyms before communicating
};

struct CarryoverEntry {
    PseudonymId pseudonym{};
    int origin_batch = 0;
};

// Pseudonyms deferred from invalid sets, waiting to be regrouped with the
// next batch. A pseudonym is in at most one of: a valid set, this pool, or
// eliminated.
struct CarryoverPool {
    std::vector<CarryoverEntry> entries;
};

struct ValidationResult {
    std::vector<ValidSet> valid;
    CarryoverPool pool;
};

// Clusters of size >= z pass; smaller ones are dissolved into the pool.
// batch_of maps pseudonym index -> batch tag.
ValidationResult validate_sets(const std::vector<Cluster>& clusters, int z,
                               const std::vector<int>& batch_of);

// The public announcement every user receives: pseudonym -> set and
// set -> schedule. There is no per-user targeting; each user locates her own
// pseudonym's entry locally.
struct AssignmentBundle {
    std::vector<std::pair<PseudonymId, SetId>> assignments;  // sorted by pseudonym
    std::map<SetId, Schedule> schedules;

    struct Entry {
        SetId set{};
        const Schedule* schedule = nullptr;
    };
    std::optional<Entry> lookup(PseudonymId p) const;
};

AssignmentBundle broadcast_assignments(const std::vector<ValidSet>& sets,
                                       const std::vector<Schedule>& schedules);

void write_schedules_csv(std::ostream& out,
                         const std::vector<std::tuple<SetId, int, Schedule, int>>& rows);

}  // namespace anonsched
