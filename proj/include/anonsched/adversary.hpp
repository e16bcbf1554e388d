#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "anonsched/core.hpp"
#include "anonsched/simulation.hpp"

// The global passive observer. It replays the transcript's network-side
// metadata (who transmitted, when, how many messages) and the content-side
// bulletin board (which pseudonym's posts appeared, when), and mounts the
// deterministic intersection attack. Its inputs never pair a UserId with a
// PseudonymId: ObservationLog carries users only, PublicationIndex carries
// pseudonyms only.

namespace anonsched {

struct ObservationLog {
    std::int64_t slot_count = 0;
    std::size_t num_users = 0;  // id space bound, for set representations
    // Per slot: users seen transmitting and their message counts. Cover and
    // real messages are indistinguishable here.
    std::vector<std::vector<std::pair<UserId, std::uint32_t>>> senders;
};

ObservationLog observe(const Transcript& transcript);

// Content-side view: for each pseudonym that published, the sorted slots at
// which its posts appeared.
struct TargetActivity {
    PseudonymId pseudonym{};
    std::vector<std::int64_t> publication_slots;
};

std::vector<TargetActivity> publication_index(const Transcript& transcript);

struct CandidateSet {
    PseudonymId target{};
    std::vector<UserId> candidates;  // ascending
    // (slot, candidate count) after each intersection step.
    std::vector<std::pair<std::int64_t, std::uint32_t>> size_history;
};

// Intersects the sender sets of every slot where the target's content
// appeared. Throws std::invalid_argument when the target never published.
CandidateSet intersect_attack(const ObservationLog& log, PseudonymId target,
                              std::span<const std::int64_t> publication_slots);

struct AnonymityRow {
    PseudonymId pseudonym{};
    std::uint32_t final_candidates = 0;
    double probability = 0.0;  // adversary's best guess: 1 / |candidates|
    bool deanonymized = false;
    std::uint32_t steps_to_minimum = 0;
    bool had_publications = true;
};

struct AnonymityReport {
    std::vector<AnonymityRow> rows;  // sorted by pseudonym
    std::uint32_t deanonymized_count = 0;
    std::uint32_t min_candidates = 0;
    double mean_candidates = 0.0;
};

// Targets with no publications yield no information; they are reported with
// the full observed-user universe as candidates.
AnonymityReport attack_report(std::span<const CandidateSet> candidate_sets,
                              std::uint32_t observed_users,
                              std::span<const PseudonymId> silent_targets);

void write_anonymity_csv(std::ostream& out, const AnonymityReport& report);

}  // namespace anonsched
