#include "anonsched/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "anonsched/csv.hpp"

namespace anonsched {

MetricsReport metrics(const Transcript& transcript, int message_size_bytes) {
    if (message_size_bytes < 1) throw ConfigError("metrics: message size must be >= 1");
    MetricsReport report;

    for (std::size_t u = 0; u < transcript.users.size(); ++u) {
        const UserTally& tally = transcript.users[u];
        if (!tally.in_batch) continue;
        if (tally.simulated) {
            report.bandwidth.push_back(MetricsReport::BandwidthRow{
                user_id(u), tally.covers_comm,
                tally.covers_comm * static_cast<std::uint64_t>(message_size_bytes)});
        }
        report.total_cover_comm += tally.covers_comm;
        report.total_cover_learning += tally.covers_learning;
        report.created_total += tally.created;
        report.published_total += tally.published;
        report.queued_total += tally.queued_end;
        report.in_flight_total += tally.in_flight_end;
        report.lost_total += tally.lost;
        report.eliminated_count += tally.eliminated_at >= 0;
        report.departed_count += tally.departed_at >= 0;
    }

    long double latency_sum = 0.0;
    for (const auto& slot_pubs : transcript.publications) {
        for (const PublicationRecord& rec : slot_pubs) {
            std::int64_t latency = rec.publish_slot - rec.creation_slot;
            report.latency.push_back(MetricsReport::LatencyRow{rec.message_id, rec.creation_slot,
                                                               rec.publish_slot, latency});
            latency_sum += static_cast<long double>(latency);
        }
    }
    std::sort(report.latency.begin(), report.latency.end(),
              [](const auto& a, const auto& b) { return a.message_id < b.message_id; });
    report.mean_latency_slots =
        report.latency.empty() ? 0.0
                               : static_cast<double>(latency_sum / report.latency.size());

    for (std::size_t g = 0; g < transcript.set_sizes.size(); ++g) {
        for (const SetSizeRecord& rec : transcript.set_sizes[g]) {
            report.set_sizes.push_back(
                MetricsReport::SetSizeRow{static_cast<std::int64_t>(g), rec.set, rec.size});
        }
    }
    return report;
}

void write_bandwidth_csv(std::ostream& out, const MetricsReport& report) {
    out << "user,cover_count,cover_bytes\n";
    for (const auto& row : report.bandwidth) {
        out << idx(row.user) << ',' << row.cover_count << ',' << row.cover_bytes << '\n';
    }
}

void write_latency_csv(std::ostream& out, const MetricsReport& report) {
    out << "message_id,creation_slot,publish_slot,latency_slots\n";
    for (const auto& row : report.latency) {
        out << row.message_id << ',' << row.creation_slot << ',' << row.publish_slot << ','
            << row.latency_slots << '\n';
    }
}

void write_setsize_csv(std::ostream& out, const MetricsReport& report) {
    out << "slot,set_id,size\n";
    for (const auto& row : report.set_sizes) {
        out << row.slot << ',' << idx(row.set) << ',' << row.size << '\n';
    }
}

namespace csv {

Table read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("csv: cannot open '" + path + "'");
    Table table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            table.header = split_line(line);
            first = false;
        } else {
            table.rows.push_back(split_line(line));
        }
    }
    return table;
}

}  // namespace csv

}  // namespace anonsched
