#include "anonsched/scheduling.hpp"

#include <algorithm>
#include <ostream>

namespace anonsched {

int q_count_for(int cluster_size, Fraction q_fraction) {
    if (cluster_size < 1) throw std::invalid_argument("q_count_for: cluster_size < 1");
    if (q_fraction.num <= 0 || q_fraction.den <= 0) {
        throw std::invalid_argument("q_count_for: bad fraction");
    }
    // Exact ceil(num * size / den).
    std::int64_t count = (q_fraction.num * cluster_size + q_fraction.den - 1) / q_fraction.den;
    return static_cast<int>(std::max<std::int64_t>(1, count));
}

Schedule create_schedule(std::span<const BehaviorVector> member_vectors, int q_count) {
    if (member_vectors.empty()) throw std::invalid_argument("create_schedule: no member vectors");
    if (q_count < 1) throw std::invalid_argument("create_schedule: q_count < 1");
    int w = member_vectors[0].width();
    std::vector<int> ones(static_cast<std::size_t>(w), 0);
    for (const BehaviorVector& v : member_vectors) {
        if (v.width() != w) throw std::invalid_argument("create_schedule: vector widths differ");
        for (int l = 0; l < w; ++l) ones[static_cast<std::size_t>(l)] += v.test(l);
    }
    Schedule schedule(w);
    for (int l = 0; l < w; ++l) {
        schedule.set(l, ones[static_cast<std::size_t>(l)] >= q_count);
    }
    return schedule;
}

Schedule update_schedule(const Schedule& current, std::span<const BehaviorVector> new_vectors,
                         int q_count, int min_active) {
    if (new_vectors.empty()) return current;  // all-zero candidate
    Schedule temp = create_schedule(new_vectors, q_count);
    if (temp.width() != current.width()) {
        throw std::invalid_argument("update_schedule: schedule widths differ");
    }
    return hamming_weight(temp) >= min_active ? temp : current;
}

ValidationResult validate_sets(const std::vector<Cluster>& clusters, int z,
                               const std::vector<int>& batch_of) {
    if (z < 1) throw std::invalid_argument("validate_sets: z < 1");
    ValidationResult out;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const Cluster& cluster = clusters[c];
        if (cluster.members.size() >= static_cast<std::size_t>(z)) {
            ValidSet set;
            set.id = set_id(c);
            set.cluster = cluster;
            int first_batch = batch_of[idx(cluster.members.front())];
            set.mixed_batches =
                std::any_of(cluster.members.begin(), cluster.members.end(),
                            [&](PseudonymId p) { return batch_of[idx(p)] != first_batch; });
            out.valid.push_back(std::move(set));
        } else {
            for (PseudonymId p : cluster.members) {
                out.pool.entries.push_back(CarryoverEntry{p, batch_of[idx(p)]});
            }
        }
    }
    return out;
}

std::optional<AssignmentBundle::Entry> AssignmentBundle::lookup(PseudonymId p) const {
    auto it = std::lower_bound(assignments.begin(), assignments.end(), p,
                               [](const auto& e, PseudonymId v) { return e.first < v; });
    if (it == assignments.end() || it->first != p) return std::nullopt;
    auto sched = schedules.find(it->second);
    require(sched != schedules.end(), "bundle: assignment without schedule");
    return Entry{it->second, &sched->second};
}

AssignmentBundle broadcast_assignments(const std::vector<ValidSet>& sets,
                                       const std::vector<Schedule>& schedules) {
    if (sets.size() != schedules.size()) {
        throw std::invalid_argument("broadcast_assignments: set without schedule");
    }
    AssignmentBundle bundle;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        bundle.schedules.emplace(sets[i].id, schedules[i]);
        for (PseudonymId p : sets[i].cluster.members) {
            bundle.assignments.emplace_back(p, sets[i].id);
        }
    }
    std::sort(bundle.assignments.begin(), bundle.assignments.end());
    return bundle;
}

void write_schedules_csv(std::ostream& out,
                         const std::vector<std::tuple<SetId, int, Schedule, int>>& rows) {
    out << "set_id,interval,schedule_bits,q_count\n";
    for (const auto& [set, interval, schedule, q_count] : rows) {
        out << idx(set) << ',' << interval << ',' << schedule.to_string() << ',' << q_count
            << '\n';
    }
}

}  // namespace anonsched
