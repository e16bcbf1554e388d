#include "anonsched/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anonsched/rng.hpp"

namespace anonsched {

Batch run_arrival(const SlottedActivity& activity, const ArrivalConfig& cfg, int w) {
    cfg.validate();

    std::vector<std::pair<std::int64_t, UserId>> arrivals;  // (first event slot, user)
    for (std::size_t u = 0; u < activity.num_users(); ++u) {
        if (auto slot = activity.first_slot(user_id(u))) {
            if (*slot < 0) throw InputError("run_arrival: activity has negative slots");
            arrivals.emplace_back(*slot, user_id(u));
        }
    }
    std::sort(arrivals.begin(), arrivals.end());

    const std::int64_t deadline =
        cfg.max_wait_slots ? *cfg.max_wait_slots : std::numeric_limits<std::int64_t>::max();

    Batch batch;
    std::int64_t close_slot = -1;
    for (const auto& [slot, user] : arrivals) {
        if (slot >= deadline) break;  // arrived after the waiting window
        batch.users.push_back(user);
        close_slot = slot;
        if (batch.users.size() == cfg.batch_threshold) break;
    }

    if (batch.users.empty()) {
        throw InputError("run_arrival: no users arrived before the batch deadline");
    }
    if (batch.users.size() < cfg.batch_threshold && cfg.max_wait_slots) {
        close_slot = deadline;  // batch fixed at the waiting deadline
    }
    batch.close_slot = close_slot;
    // Learning starts at the next interval boundary after the batch is known.
    batch.learning_start = ((close_slot + 1 + w - 1) / w) * w;
    std::sort(batch.users.begin(), batch.users.end());
    return batch;
}

PseudonymDirectory PseudonymDirectory::create(const std::vector<UserId>& users,
                                              std::uint64_t rng_seed) {
    PseudonymDirectory dir;
    std::vector<std::uint32_t> numbers(users.size());
    for (std::size_t i = 0; i < numbers.size(); ++i) numbers[i] = static_cast<std::uint32_t>(i);
    rng::Engine eng(rng_seed);
    eng.shuffle(numbers);

    dir.owner_.resize(users.size(), UserId{0});
    dir.retired_.assign(users.size(), 0);
    for (std::size_t i = 0; i < users.size(); ++i) {
        PseudonymId p{numbers[i]};
        dir.by_user_.emplace(idx(users[i]), p);
        dir.owner_[idx(p)] = users[i];
    }
    return dir;
}

PseudonymId PseudonymDirectory::pseudonym_of(UserId u) const {
    auto it = by_user_.find(idx(u));
    require(it != by_user_.end(), "directory: user has no pseudonym");
    return it->second;
}

UserId PseudonymDirectory::owner_of(PseudonymId p) const {
    require(idx(p) < owner_.size(), "directory: unknown pseudonym");
    return owner_[idx(p)];
}

PseudonymId PseudonymDirectory::reissue(UserId u) {
    auto it = by_user_.find(idx(u));
    require(it != by_user_.end(), "directory: reissue for unknown user");
    retired_[idx(it->second)] = 1;
    PseudonymId fresh{static_cast<std::uint32_t>(owner_.size())};
    owner_.push_back(u);
    retired_.push_back(0);
    it->second = fresh;
    return fresh;
}

void PseudonymDirectory::extend(const std::vector<UserId>& users, std::uint64_t rng_seed) {
    const std::uint32_t base = static_cast<std::uint32_t>(owner_.size());
    std::vector<std::uint32_t> numbers(users.size());
    for (std::size_t i = 0; i < numbers.size(); ++i) {
        numbers[i] = base + static_cast<std::uint32_t>(i);
    }
    rng::Engine eng(rng_seed);
    eng.shuffle(numbers);
    owner_.resize(owner_.size() + users.size(), UserId{0});
    retired_.resize(retired_.size() + users.size(), 0);
    for (std::size_t i = 0; i < users.size(); ++i) {
        require(by_user_.count(idx(users[i])) == 0, "directory: user already has a pseudonym");
        PseudonymId p{numbers[i]};
        by_user_.emplace(idx(users[i]), p);
        owner_[idx(p)] = users[i];
    }
}

std::vector<UserId> departures_ready(const std::vector<UserId>& members,
                                     const std::vector<UserId>& requesters, int min_departers) {
    std::vector<UserId> eligible;
    for (UserId u : requesters) {
        if (std::binary_search(members.begin(), members.end(), u)) eligible.push_back(u);
    }
    if (eligible.size() < static_cast<std::size_t>(min_departers)) return {};
    std::sort(eligible.begin(), eligible.end());
    return eligible;
}

SlotSend user_slot_step(UserState& state, bool active, int capacity,
                        std::span<const QueuedMessage> new_reals) {
    for (const QueuedMessage& msg : new_reals) state.queue.push_back(msg);
    SlotSend send;
    if (!active) return send;
    send.count = capacity;
    while (!state.queue.empty() && static_cast<int>(send.reals.size()) < capacity) {
        send.reals.push_back(state.queue.front());
        state.queue.pop_front();
    }
    return send;
}

Simulator::Simulator(const TimeConfig& time, SlottedActivity activity,
                     std::vector<UserId> batch_users, PseudonymDirectory directory)
    : time_(time),
      activity_(std::move(activity)),
      batch_(std::move(batch_users)),
      directory_(std::move(directory)) {
    time_.validate();
    const int w = time_.slots_per_interval;
    const std::size_t n = activity_.num_users();

    transcript_.time = time_;
    transcript_.slot_count = static_cast<std::int64_t>(w) * (1 + time_.num_intervals);
    transcript_.sends.resize(static_cast<std::size_t>(transcript_.slot_count));
    transcript_.publications.resize(static_cast<std::size_t>(transcript_.slot_count));
    transcript_.set_sizes.resize(static_cast<std::size_t>(transcript_.slot_count));
    transcript_.users.resize(n);

    states_.resize(n);
    cursor_.assign(n, 0);
    backlog_bits_.resize(n);

    std::sort(batch_.begin(), batch_.end());
    for (UserId u : batch_) {
        transcript_.users[idx(u)].in_batch = true;
        backlog_bits_[idx(u)] = Bits(w);
    }

    // Messages created while waiting for the batch become queued backlog,
    // keeping their original creation slots. Ids are assigned in
    // (slot, user) order.
    std::vector<std::pair<std::int64_t, UserId>> backlog;
    for (UserId u : batch_) {
        for (const auto& [slot, count] : activity_.per_user[idx(u)]) {
            if (slot >= 0) break;
            for (std::uint32_t i = 0; i < count; ++i) backlog.emplace_back(slot, u);
        }
    }
    std::sort(backlog.begin(), backlog.end());
    for (const auto& [slot, u] : backlog) {
        states_[idx(u)].queue.push_back(QueuedMessage{next_message_id_++, slot});
        ++transcript_.users[idx(u)].created;
    }
    // Position cursors past the consumed backlog.
    for (UserId u : batch_) {
        const auto& entries = activity_.per_user[idx(u)];
        while (cursor_[idx(u)] < entries.size() && entries[cursor_[idx(u)]].first < 0) {
            ++cursor_[idx(u)];
        }
    }
}

std::uint32_t Simulator::take_creations(UserId u, std::int64_t slot) {
    auto& entries = activity_.per_user[idx(u)];
    std::size_t& pos = cursor_[idx(u)];
    while (pos < entries.size() && entries[pos].first < slot) ++pos;
    if (pos < entries.size() && entries[pos].first == slot) {
        return entries[pos++].second;
    }
    return 0;
}

void Simulator::enqueue_creations(UserId u, std::int64_t slot) {
    std::uint32_t count = take_creations(u, slot);
    UserState& st = states_[idx(u)];
    for (std::uint32_t i = 0; i < count; ++i) {
        st.queue.push_back(QueuedMessage{next_message_id_++, slot});
    }
    transcript_.users[idx(u)].created += count;
}

void Simulator::publish(PublicationRecord rec, std::int64_t publish_slot) {
    rec.publish_slot = publish_slot;
    UserTally& tally = transcript_.users[idx(directory_.owner_of(rec.pseudonym))];
    ++tally.published;
    if (publish_slot >= time_.slots_per_interval) ++tally.published_comm;
    transcript_.publications[static_cast<std::size_t>(publish_slot)].push_back(rec);
}

VectorsById Simulator::run_learning() {
    require(!learning_done_, "run_learning called twice");
    learning_done_ = true;

    const int w = time_.slots_per_interval;
    const int m = time_.messages_per_slot;

    for (std::int64_t g = 0; g < w; ++g) {
        auto& sends = transcript_.sends[static_cast<std::size_t>(g)];
        for (UserId u : batch_) {
            enqueue_creations(u, g);
            UserState& st = states_[idx(u)];
            SlotSend send = user_slot_step(st, true, m, {});
            for (const QueuedMessage& msg : send.reals) {
                if (msg.creation_slot < 0) {
                    int bit = static_cast<int>(((msg.creation_slot % w) + w) % w);
                    backlog_bits_[idx(u)].set(bit);
                }
                publish(PublicationRecord{msg.id, directory_.pseudonym_of(u), msg.creation_slot,
                                          g, g},
                        g);
            }
            UserTally& tally = transcript_.users[idx(u)];
            tally.reals_sent_learning += send.reals.size();
            tally.covers_learning += static_cast<std::uint64_t>(m) - send.reals.size();
            sends.push_back(SendRecord{u, static_cast<std::uint32_t>(m),
                                       static_cast<std::uint32_t>(send.reals.size()), false});
        }
    }

    // Eq.-style behavior bits: creations during the learning interval, plus
    // transmitted backlog at its slot-of-interval position.
    std::vector<std::pair<PseudonymId, BehaviorVector>> learned;
    learned.reserve(batch_.size());
    for (UserId u : batch_) {
        BehaviorVector bits = behavior_from_activity(activity_, u, 0, w);
        for (int l = 0; l < w; ++l) {
            if (backlog_bits_[idx(u)].test(l)) bits.set(l);
        }
        learned.emplace_back(directory_.pseudonym_of(u), std::move(bits));
    }
    std::sort(learned.begin(), learned.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    VectorsById out;
    out.ids.reserve(learned.size());
    out.vectors.reserve(learned.size());
    for (auto& [p, v] : learned) {
        out.ids.push_back(p);
        out.vectors.push_back(std::move(v));
    }
    return out;
}

void Simulator::install_sets(const std::vector<ValidSet>& sets,
                             const std::vector<Schedule>& schedules,
                             const SchedulingConfig& sched_cfg, bool updatable) {
    require(learning_done_, "install_sets before learning");
    if (sets.size() != schedules.size()) {
        throw std::invalid_argument("install_sets: set without schedule");
    }
    sched_cfg.validate();
    sets_.clear();
    updatable_ = updatable;
    sched_cfg_ = sched_cfg;

    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (schedules[i].width() != time_.slots_per_interval) {
            throw std::invalid_argument("install_sets: schedule width differs from w");
        }
        SetState st;
        st.id = sets[i].id;
        st.schedule = schedules[i];
        st.q = sched_cfg.q_for(sets[i].id);
        st.q_count = q_count_for(static_cast<int>(sets[i].cluster.members.size()), st.q);
        for (PseudonymId p : sets[i].cluster.members) {
            UserId u = directory_.owner_of(p);
            st.members.push_back(u);
            states_[idx(u)].membership = Membership::active;
            states_[idx(u)].set = st.id;
            transcript_.users[idx(u)].simulated = true;
        }
        std::sort(st.members.begin(), st.members.end());
        sets_.push_back(std::move(st));
    }
}

void Simulator::release_blocks_of(SetState& set, UserId resolved, std::int64_t slot) {
    for (auto it = set.blocked.begin(); it != set.blocked.end();) {
        auto& blockers = it->blockers;
        blockers.erase(std::remove(blockers.begin(), blockers.end(), resolved), blockers.end());
        if (blockers.empty()) {
            for (PublicationRecord& rec : it->records) publish(rec, slot);
            it = set.blocked.erase(it);
        } else {
            ++it;
        }
    }
}

void Simulator::eliminate(SetState& set, UserId u, std::int64_t slot, RemovalReason reason) {
    UserState& st = states_[idx(u)];
    st.membership = Membership::eliminated;
    st.missed_in_episode = 0;
    UserTally& tally = transcript_.users[idx(u)];
    tally.lost += st.queue.size();
    st.queue.clear();
    tally.eliminated_at = slot;
    transcript_.eliminations.push_back(EliminationRecord{slot, u, set.id, reason});
    set.members.erase(std::remove(set.members.begin(), set.members.end(), u),
                      set.members.end());
    release_blocks_of(set, u, slot);
}

void Simulator::run_communication(const EliminationPolicy& policy, const ChurnModel& churn,
                                  const DepartureConfig& departures) {
    require(!sets_.empty(), "run_communication without installed sets");
    policy.validate();
    churn.validate();

    const int w = time_.slots_per_interval;
    const int m = time_.messages_per_slot;
    const std::int64_t end = transcript_.slot_count;

    // Churn selection: a seeded shuffle prefix per set, independent of the
    // policy and of the rate (a 30% selection is a prefix of the 70% one).
    const std::uint64_t select_seed = rng::derive(churn.rng_seed, "select");
    const std::uint64_t miss_seed = rng::derive(churn.rng_seed, "miss");
    for (SetState& set : sets_) {
        std::vector<UserId> order = set.members;
        rng::Engine eng(rng::derive(select_seed, static_cast<std::uint64_t>(idx(set.id))));
        eng.shuffle(order);
        auto selected = static_cast<std::size_t>(
            std::llround(churn.rate * static_cast<double>(order.size())));
        selected = std::min(selected, order.size());
        for (std::size_t i = 0; i < selected; ++i) {
            states_[idx(order[i])].selected_for_churn = true;
        }
    }

    std::vector<std::pair<std::size_t, std::int64_t>> scripted;
    scripted.reserve(churn.scripted_misses.size());
    for (const auto& [u, slot] : churn.scripted_misses) scripted.emplace_back(idx(u), slot);
    std::sort(scripted.begin(), scripted.end());
    auto scripted_miss = [&](UserId u, std::int64_t g) {
        return std::binary_search(scripted.begin(), scripted.end(), std::make_pair(idx(u), g));
    };

    std::vector<std::pair<std::int64_t, UserId>> requests;  // (slot, user)
    for (const auto& [u, slot] : departures.requests) requests.emplace_back(slot, u);
    std::sort(requests.begin(), requests.end());
    std::size_t next_request = 0;

    for (std::int64_t g = w; g < end; ++g) {
        const std::int64_t interval = g / w;
        const int slot_of_interval = static_cast<int>(g % w);

        if (slot_of_interval == 0) {
            for (const SetState& set : sets_) {
                transcript_.schedule_history.push_back(ScheduleHistoryRow{
                    set.id, static_cast<std::int32_t>(interval), set.schedule, set.q_count});
            }
        }

        while (next_request < requests.size() && requests[next_request].first <= g) {
            states_[idx(requests[next_request].second)].departure_requested = true;
            ++next_request;
        }

        auto& sends = transcript_.sends[static_cast<std::size_t>(g)];
        for (SetState& set : sets_) {
            const bool active = set.schedule.test(slot_of_interval);

            std::vector<PublicationRecord> outgoing;
            std::vector<UserId> missing;

            for (UserId u : set.members) {
                enqueue_creations(u, g);
                if (!active) continue;

                UserState& st = states_[idx(u)];
                bool miss = scripted_miss(u, g) ||
                            (st.selected_for_churn &&
                             rng::hash01(miss_seed, static_cast<std::uint64_t>(idx(u)),
                                         static_cast<std::uint64_t>(g)) <
                                 churn.miss_probability);
                if (miss) {
                    missing.push_back(u);
                    continue;
                }

                const bool catch_up = st.missed_in_episode > 0;
                const int capacity = (1 + st.missed_in_episode) * m;
                SlotSend send = user_slot_step(st, true, capacity, {});
                for (const QueuedMessage& msg : send.reals) {
                    outgoing.push_back(PublicationRecord{msg.id, directory_.pseudonym_of(u),
                                                         msg.creation_slot, g, g});
                }
                UserTally& tally = transcript_.users[idx(u)];
                tally.reals_sent_comm += send.reals.size();
                tally.covers_comm += static_cast<std::uint64_t>(capacity) - send.reals.size();
                tally.active_attended += 1;
                tally.active_fulfilled += 1 + static_cast<std::uint64_t>(st.missed_in_episode);
                sends.push_back(SendRecord{u, static_cast<std::uint32_t>(capacity),
                                           static_cast<std::uint32_t>(send.reals.size()),
                                           catch_up});
                if (catch_up) {
                    st.missed_in_episode = 0;
                    release_blocks_of(set, u, g);
                }
            }

            std::vector<UserId> still_blocking;
            for (UserId u : missing) {
                UserState& st = states_[idx(u)];
                st.misses_total += 1;
                st.missed_in_episode += 1;
                const bool budget_exceeded = policy.kind == EliminationPolicy::Kind::chances &&
                                             policy.max_failures &&
                                             st.misses_total > *policy.max_failures;
                const bool window_exceeded = st.missed_in_episode > policy.window();
                if (window_exceeded || budget_exceeded) {
                    eliminate(set, u, g,
                              policy.kind == EliminationPolicy::Kind::no_chances
                                  ? RemovalReason::missed_no_chances
                              : window_exceeded ? RemovalReason::window_lapsed
                                                : RemovalReason::failures_exceeded);
                } else {
                    still_blocking.push_back(u);
                }
            }

            if (active) {
                if (still_blocking.empty()) {
                    for (PublicationRecord& rec : outgoing) publish(rec, g);
                } else {
                    set.blocked.push_back(BlockedBundle{g, still_blocking, std::move(outgoing)});
                }

                // Graceful departures resolve at active-slot ends so set
                // sizes only ever change during active slots.
                std::vector<UserId> requesters;
                for (UserId u : set.members) {
                    const UserState& st = states_[idx(u)];
                    if (st.departure_requested && st.missed_in_episode == 0) {
                        requesters.push_back(u);
                    }
                }
                for (UserId u :
                     departures_ready(set.members, requesters, departures.min_departers)) {
                    UserState& st = states_[idx(u)];
                    st.membership = Membership::departed;
                    UserTally& tally = transcript_.users[idx(u)];
                    tally.lost += st.queue.size();
                    st.queue.clear();
                    tally.departed_at = g;
                    transcript_.departures.push_back(DepartureRecord{g, u, set.id});
                    set.members.erase(std::remove(set.members.begin(), set.members.end(), u),
                                      set.members.end());
                }
            }
        }

        for (const SetState& set : sets_) {
            transcript_.set_sizes[static_cast<std::size_t>(g)].push_back(
                SetSizeRecord{set.id, static_cast<std::uint32_t>(set.members.size())});
        }

        // Schedule for the next interval comes from this interval's creation
        // behavior, gated on a minimum number of active slots.
        if (updatable_ && slot_of_interval == w - 1 && g + 1 < end) {
            for (SetState& set : sets_) {
                if (set.members.empty()) continue;
                std::vector<BehaviorVector> vectors;
                vectors.reserve(set.members.size());
                for (UserId u : set.members) {
                    vectors.push_back(behavior_from_activity(activity_, u, interval * w, w));
                }
                set.q_count = q_count_for(static_cast<int>(set.members.size()), set.q);
                set.schedule = update_schedule(set.schedule, vectors, set.q_count,
                                               sched_cfg_.min_active_for_update);
            }
        }
    }

    // Terminal accounting.
    for (SetState& set : sets_) {
        for (const BlockedBundle& bundle : set.blocked) {
            for (const PublicationRecord& rec : bundle.records) {
                ++transcript_.users[idx(directory_.owner_of(rec.pseudonym))].in_flight_end;
            }
        }
    }
    for (UserId u : batch_) {
        UserState& st = states_[idx(u)];
        UserTally& tally = transcript_.users[idx(u)];
        tally.queued_end = st.queue.size();
        if (st.membership == Membership::eliminated || st.membership == Membership::departed) {
            const auto& entries = activity_.per_user[idx(u)];
            for (std::size_t pos = cursor_[idx(u)]; pos < entries.size(); ++pos) {
                if (entries[pos].first >= end) break;
                tally.ignored_after_removal += entries[pos].second;
            }
        }
    }
}

}  // namespace anonsched
