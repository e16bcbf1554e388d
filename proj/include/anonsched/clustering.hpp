#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "anonsched/core.hpp"

// Grouping of pseudonyms by publishing-behavior similarity: k-modes over
// binary vectors with mismatch-count (SMC) distance, plus a seeded random
// grouping baseline for comparison experiments.

namespace anonsched {

struct Cluster {
    BehaviorVector head;
    std::vector<PseudonymId> members;  // sorted ascending
};

struct ClusteringConfig {
    int k = 15;
    std::uint64_t rng_seed = 0;
    int max_iterations = 100;
};

// SMC distance: number of slots at which the two vectors disagree.
inline int smc_distance(const BehaviorVector& a, const BehaviorVector& b) {
    return mismatch_count(a, b);
}

// Column-wise mode: bit l is 1 iff strictly more than half of the member
// vectors have 1 at l; exact ties give 0. Throws on an empty member list.
BehaviorVector mode_head(std::span<const BehaviorVector> members);

// Pseudonyms and their behavior vectors, aligned by index and sorted by id.
struct VectorsById {
    std::vector<PseudonymId> ids;
    std::vector<BehaviorVector> vectors;

    std::size_t size() const { return ids.size(); }
};

struct KModesResult {
    std::vector<Cluster> clusters;  // non-empty clusters, in original index order
    int iterations = 0;             // assignment passes performed
    bool converged = false;
    std::vector<long long> cost_history;  // total cost after each assignment pass
};

// The full procedure: seeded selection of k distinct pseudonyms as initial
// heads, then alternate nearest-head assignment (ties to the lowest-indexed
// cluster) and column-mode head updates until a fixed point or max_iterations.
KModesResult kmodes(const VectorsById& input, const ClusteringConfig& cfg);

// Iteration loop with caller-supplied initial heads. Exposed so experiments
// and oracles can start from chosen centers.
KModesResult kmodes_from_heads(const VectorsById& input,
                               std::vector<BehaviorVector> heads, int max_iterations);

// Seeded shuffle dealt round-robin into k clusters; heads are column modes.
std::vector<Cluster> random_grouping(const VectorsById& input, int k, std::uint64_t rng_seed);

// Sum over clusters of member-to-head SMC distances.
long long clustering_cost(const std::vector<Cluster>& clusters, const VectorsById& input);

void write_clusters_csv(std::ostream& out, const std::vector<Cluster>& clusters);
void write_heads_csv(std::ostream& out, const std::vector<Cluster>& clusters);

}  // namespace anonsched
