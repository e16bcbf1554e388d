#include "anonsched/adversary.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "anonsched/csv.hpp"

namespace anonsched {

namespace {

// Dense bit set over user ids.
class UserBits {
public:
    explicit UserBits(std::size_t n) : words_((n + 63) / 64, 0) {}

    void set(std::size_t i) { words_[i >> 6] |= 1ULL << (i & 63); }

    void intersect(const UserBits& other) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
    }

    std::uint32_t count() const {
        std::uint32_t n = 0;
        for (std::uint64_t w : words_) n += static_cast<std::uint32_t>(__builtin_popcountll(w));
        return n;
    }

    std::vector<UserId> to_users() const {
        std::vector<UserId> out;
        for (std::size_t i = 0; i < words_.size(); ++i) {
            std::uint64_t w = words_[i];
            while (w) {
                int b = __builtin_ctzll(w);
                out.push_back(user_id(i * 64 + static_cast<std::size_t>(b)));
                w &= w - 1;
            }
        }
        return out;
    }

private:
    std::vector<std::uint64_t> words_;
};

}  // namespace

ObservationLog observe(const Transcript& transcript) {
    ObservationLog log;
    log.slot_count = transcript.slot_count;
    log.num_users = transcript.users.size();
    log.senders.resize(transcript.sends.size());
    for (std::size_t g = 0; g < transcript.sends.size(); ++g) {
        auto& out = log.senders[g];
        out.reserve(transcript.sends[g].size());
        for (const SendRecord& rec : transcript.sends[g]) {
            out.emplace_back(rec.user, rec.count);  // metadata only
        }
    }
    return log;
}

std::vector<TargetActivity> publication_index(const Transcript& transcript) {
    std::map<PseudonymId, std::vector<std::int64_t>> slots;
    for (std::size_t g = 0; g < transcript.publications.size(); ++g) {
        for (const PublicationRecord& rec : transcript.publications[g]) {
            auto& v = slots[rec.pseudonym];
            if (v.empty() || v.back() != static_cast<std::int64_t>(g)) {
                v.push_back(static_cast<std::int64_t>(g));
            }
        }
    }
    std::vector<TargetActivity> out;
    out.reserve(slots.size());
    for (auto& [p, v] : slots) out.push_back(TargetActivity{p, std::move(v)});
    return out;
}

CandidateSet intersect_attack(const ObservationLog& log, PseudonymId target,
                              std::span<const std::int64_t> publication_slots) {
    if (publication_slots.empty()) {
        throw std::invalid_argument("intersect_attack: target has no publication slots");
    }
    CandidateSet out;
    out.target = target;

    UserBits candidates(log.num_users);
    bool first = true;
    for (std::int64_t slot : publication_slots) {
        require(slot >= 0 && slot < log.slot_count, "intersect_attack: slot out of range");
        UserBits seen(log.num_users);
        for (const auto& [user, count] : log.senders[static_cast<std::size_t>(slot)]) {
            (void)count;
            seen.set(idx(user));
        }
        if (first) {
            candidates = seen;
            first = false;
        } else {
            candidates.intersect(seen);
        }
        out.size_history.emplace_back(slot, candidates.count());
    }
    out.candidates = candidates.to_users();
    return out;
}

AnonymityReport attack_report(std::span<const CandidateSet> candidate_sets,
                              std::uint32_t observed_users,
                              std::span<const PseudonymId> silent_targets) {
    AnonymityReport report;
    for (const CandidateSet& cs : candidate_sets) {
        AnonymityRow row;
        row.pseudonym = cs.target;
        row.final_candidates = static_cast<std::uint32_t>(cs.candidates.size());
        row.probability = row.final_candidates > 0 ? 1.0 / row.final_candidates : 0.0;
        row.deanonymized = row.final_candidates == 1;
        std::uint32_t final_size = row.final_candidates;
        for (std::size_t i = 0; i < cs.size_history.size(); ++i) {
            if (cs.size_history[i].second == final_size) {
                row.steps_to_minimum = static_cast<std::uint32_t>(i + 1);
                break;
            }
        }
        report.rows.push_back(row);
    }
    for (PseudonymId p : silent_targets) {
        AnonymityRow row;
        row.pseudonym = p;
        row.final_candidates = observed_users;
        row.probability = observed_users > 0 ? 1.0 / observed_users : 0.0;
        row.deanonymized = false;
        row.steps_to_minimum = 0;
        row.had_publications = false;
        report.rows.push_back(row);
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const AnonymityRow& a, const AnonymityRow& b) {
                  return a.pseudonym < b.pseudonym;
              });

    double sum = 0.0;
    report.min_candidates = report.rows.empty() ? 0 : report.rows.front().final_candidates;
    for (const AnonymityRow& row : report.rows) {
        report.deanonymized_count += row.deanonymized;
        report.min_candidates = std::min(report.min_candidates, row.final_candidates);
        sum += row.final_candidates;
    }
    report.mean_candidates = report.rows.empty() ? 0.0 : sum / report.rows.size();
    return report;
}

void write_anonymity_csv(std::ostream& out, const AnonymityReport& report) {
    out << "pseudonym,final_candidates,probability,deanonymized,steps_to_minimum\n";
    for (const AnonymityRow& row : report.rows) {
        out << idx(row.pseudonym) << ',' << row.final_candidates << ','
            << csv::fmt_double(row.probability) << ',' << (row.deanonymized ? 1 : 0) << ','
            << row.steps_to_minimum << '\n';
    }
}

}  // namespace anonsched
