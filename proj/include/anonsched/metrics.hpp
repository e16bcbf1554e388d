#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "anonsched/core.hpp"
#include "anonsched/simulation.hpp"

// The three evaluation metrics: per-user bandwidth overhead (cover messages
// sent during the communication phase), per-message latency from creation to
// publication, and per-slot indistinguishability-set sizes.

namespace anonsched {

struct MetricsReport {
    struct BandwidthRow {
        UserId user{};
        std::uint64_t cover_count = 0;  // communication phase
        std::uint64_t cover_bytes = 0;
    };
    struct LatencyRow {
        std::uint64_t message_id = 0;
        std::int64_t creation_slot = 0;
        std::int64_t publish_slot = 0;
        std::int64_t latency_slots = 0;
    };
    struct SetSizeRow {
        std::int64_t slot = 0;
        SetId set{};
        std::uint32_t size = 0;
    };

    std::vector<BandwidthRow> bandwidth;  // simulated users, ascending
    std::vector<LatencyRow> latency;      // published reals, by message id
    std::vector<SetSizeRow> set_sizes;

    std::uint64_t total_cover_comm = 0;
    std::uint64_t total_cover_learning = 0;
    std::uint64_t created_total = 0;
    std::uint64_t published_total = 0;
    std::uint64_t queued_total = 0;     // still on user side at run end
    std::uint64_t in_flight_total = 0;  // sent but withheld at run end
    std::uint64_t lost_total = 0;       // dropped at elimination/departure
    double mean_latency_slots = 0.0;    // over published reals
    std::uint32_t eliminated_count = 0;
    std::uint32_t departed_count = 0;
};

MetricsReport metrics(const Transcript& transcript, int message_size_bytes);

void write_bandwidth_csv(std::ostream& out, const MetricsReport& report);
void write_latency_csv(std::ostream& out, const MetricsReport& report);
void write_setsize_csv(std::ostream& out, const MetricsReport& report);

}  // namespace anonsched
