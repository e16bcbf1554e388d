#include "anonsched/trace.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "anonsched/rng.hpp"

namespace anonsched {

namespace {

bool parse_i64(std::string_view s, std::int64_t& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

std::uint32_t intern(std::unordered_map<std::string, std::uint32_t>& table,
                     std::vector<std::string>& names, std::string_view s) {
    auto it = table.find(std::string(s));
    if (it != table.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(names.size());
    names.emplace_back(s);
    table.emplace(names.back(), id);
    return id;
}

}  // namespace

TraceData parse_trace(std::istream& in, const ParseOptions& opt) {
    if (!in.good()) throw InputError("trace: unreadable input stream");

    TraceData out;
    std::unordered_map<std::string, std::uint32_t> user_table;
    std::unordered_map<std::string, std::uint32_t> topic_table;

    char sep = 0;
    std::string line;
    std::size_t line_no = 0;

    auto malformed = [&](std::size_t no) {
        if (opt.strict) {
            throw InputError("trace: malformed record at line " + std::to_string(no));
        }
        ++out.skipped_lines;
        if (out.skipped_line_numbers.size() < opt.max_reported_skips) {
            out.skipped_line_numbers.push_back(no);
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        if (sep == 0) sep = line.find('\t') != std::string::npos ? '\t' : ',';

        std::string_view v(line);
        std::size_t c1 = v.find(sep);
        std::size_t c2 = c1 == std::string_view::npos ? c1 : v.find(sep, c1 + 1);
        if (c2 == std::string_view::npos) {
            malformed(line_no);
            continue;
        }
        std::string_view ts_field = v.substr(0, c1);
        std::string_view user_field = v.substr(c1 + 1, c2 - c1 - 1);
        std::string_view topic_field = v.substr(c2 + 1);
        std::size_t c3 = topic_field.find(sep);
        if (c3 != std::string_view::npos) topic_field = topic_field.substr(0, c3);

        std::int64_t ts = 0;
        if (!parse_i64(ts_field, ts) || user_field.empty()) {
            malformed(line_no);
            continue;
        }
        TraceEvent ev;
        ev.timestamp = ts;
        ev.user = UserId{intern(user_table, out.users, user_field)};
        ev.topic = intern(topic_table, out.topics, topic_field);
        out.events.push_back(ev);
    }
    if (in.bad()) throw InputError("trace: read error");

    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) {
                         return a.timestamp < b.timestamp;
                     });
    return out;
}

TraceData load_trace(const std::string& path, const ParseOptions& opt) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw InputError("trace: cannot open '" + path + "'");
    unsigned char magic[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(magic), 2);
    probe.close();

    if (magic[0] == 0x1f && magic[1] == 0x8b) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw InputError("trace: cannot open gzip '" + path + "'");
        std::string content;
        char buf[1 << 16];
        int n;
        while ((n = gzread(gz, buf, sizeof(buf))) > 0) {
            content.append(buf, static_cast<std::size_t>(n));
        }
        bool ok = n == 0;
        gzclose(gz);
        if (!ok) throw InputError("trace: gzip decompression failed for '" + path + "'");
        std::istringstream in(content);
        return parse_trace(in, opt);
    }

    std::ifstream in(path, std::ios::binary);
    return parse_trace(in, opt);
}

void write_trace(std::ostream& out, const TraceData& trace) {
    for (const TraceEvent& ev : trace.events) {
        out << ev.timestamp << ',' << trace.users[idx(ev.user)] << ','
            << trace.topics[ev.topic] << '\n';
    }
}

std::int64_t default_epoch(const TraceData& trace, std::int64_t slot_seconds) {
    if (trace.events.empty()) return 0;
    std::int64_t first = trace.events.front().timestamp;
    return (first / slot_seconds) * slot_seconds - (first % slot_seconds < 0 ? slot_seconds : 0);
}

std::uint32_t SlottedActivity::count_at(UserId u, std::int64_t slot) const {
    const auto& v = per_user[idx(u)];
    auto it = std::lower_bound(v.begin(), v.end(), slot,
                               [](const auto& e, std::int64_t s) { return e.first < s; });
    return it != v.end() && it->first == slot ? it->second : 0;
}

std::optional<std::int64_t> SlottedActivity::first_slot(UserId u) const {
    const auto& v = per_user[idx(u)];
    if (v.empty()) return std::nullopt;
    return v.front().first;
}

SlottedActivity bucket(const std::vector<TraceEvent>& events, std::size_t num_users,
                       const TimeConfig& time, std::int64_t epoch) {
    SlottedActivity out;
    out.per_user.resize(num_users);
    for (const TraceEvent& ev : events) {
        if (ev.timestamp < epoch) {
            throw InputError("bucket: event timestamp before epoch");
        }
        std::int64_t slot = (ev.timestamp - epoch) / time.slot_seconds;
        auto& v = out.per_user[idx(ev.user)];
        if (!v.empty() && v.back().first == slot) {
            ++v.back().second;
        } else if (!v.empty() && v.back().first > slot) {
            // Events arrive sorted by timestamp, so this only happens for
            // ties resolved out of order; merge via binary search.
            auto it = std::lower_bound(v.begin(), v.end(), slot,
                                       [](const auto& e, std::int64_t s) { return e.first < s; });
            if (it != v.end() && it->first == slot) {
                ++it->second;
            } else {
                v.insert(it, {slot, 1});
            }
        } else {
            v.push_back({slot, 1});
        }
        ++out.total_count;
    }
    return out;
}

SlottedActivity rebase(const SlottedActivity& activity, std::int64_t offset) {
    SlottedActivity out = activity;
    for (auto& v : out.per_user) {
        for (auto& e : v) e.first += offset;
    }
    return out;
}

BehaviorVector behavior_from_activity(const SlottedActivity& activity, UserId u,
                                      std::int64_t interval_begin, int w) {
    BehaviorVector bits(w);
    const auto& v = activity.per_user[idx(u)];
    auto it = std::lower_bound(v.begin(), v.end(), interval_begin,
                               [](const auto& e, std::int64_t s) { return e.first < s; });
    for (; it != v.end() && it->first < interval_begin + w; ++it) {
        bits.set(static_cast<int>(it->first - interval_begin));
    }
    return bits;
}

void SynthTraceParams::validate() const {
    if (num_users == 0) throw ConfigError("synth: num_users must be >= 1");
    if (intervals < 1) throw ConfigError("synth: intervals must be >= 1");
    if (slots_per_interval < 1) throw ConfigError("synth: slots_per_interval must be >= 1");
    if (slot_seconds < 1) throw ConfigError("synth: slot_seconds must be >= 1");
    if (base_rate < 0.0 || base_rate > 1.0) throw ConfigError("synth: base_rate not in [0,1]");
    if (group_rate < 0.0 || group_rate > 1.0) throw ConfigError("synth: group_rate not in [0,1]");
    if (groups < 0) throw ConfigError("synth: groups must be >= 0");
    if (groups > slots_per_interval) throw ConfigError("synth: more groups than slots");
    if ((quiet_start < 0) != (quiet_end < 0)) throw ConfigError("synth: partial quiet range");
    if (quiet_start >= 0 && (quiet_start >= quiet_end || quiet_end > slots_per_interval)) {
        throw ConfigError("synth: bad quiet range");
    }
}

int synth_group_of(const SynthTraceParams& p, std::size_t user) {
    if (p.groups <= 0) return 0;
    return static_cast<int>(user * static_cast<std::size_t>(p.groups) / p.num_users);
}

int synth_group_of_slot(const SynthTraceParams& p, int slot) {
    if (p.groups <= 0) return 0;
    return slot * p.groups / p.slots_per_interval;
}

TraceData synth_trace(const SynthTraceParams& p) {
    p.validate();
    TraceData out;
    out.users.reserve(p.num_users);
    out.topics.push_back("synthetic");

    const int w = p.slots_per_interval;
    auto quiet = [&](int slot) {
        return p.quiet_start >= 0 && slot >= p.quiet_start && slot < p.quiet_end;
    };

    for (std::size_t u = 0; u < p.num_users; ++u) {
        out.users.push_back("u" + std::to_string(u));
        int group = synth_group_of(p, u);

        // Per-user stream: adding users or intervals never reshuffles the
        // draws of existing users.
        rng::Engine eng(rng::derive(p.rng_seed, u));
        bool seen_first_interval = false;
        for (int e = 0; e < p.intervals; ++e) {
            for (int s = 0; s < w; ++s) {
                double rate = p.groups > 0 && synth_group_of_slot(p, s) == group
                                  ? p.group_rate
                                  : p.base_rate;
                if (quiet(s)) rate = 0.0;
                double draw = eng.next_double();
                if (draw < rate) {
                    std::int64_t slot = static_cast<std::int64_t>(e) * w + s;
                    out.events.push_back(TraceEvent{slot * p.slot_seconds, user_id(u), 0});
                    if (e == 0) seen_first_interval = true;
                }
            }
        }
        if (p.first_interval_event && !seen_first_interval) {
            std::vector<int> open;
            for (int s = 0; s < w; ++s) {
                if (!quiet(s)) open.push_back(s);
            }
            int s = open.empty() ? 0 : open[static_cast<std::size_t>(eng.below(open.size()))];
            out.events.push_back(TraceEvent{static_cast<std::int64_t>(s) * p.slot_seconds,
                                            user_id(u), 0});
        }
    }

    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) {
                         return a.timestamp < b.timestamp;
                     });
    return out;
}

void write_activity_csv(std::ostream& out, const SlottedActivity& activity, int w) {
    out << "user,interval,slot,count\n";
    for (std::size_t u = 0; u < activity.per_user.size(); ++u) {
        for (const auto& [slot, count] : activity.per_user[u]) {
            std::int64_t interval = slot >= 0 ? slot / w : -(((-slot) + w - 1) / w);
            std::int64_t within = slot - interval * w;
            out << u << ',' << interval << ',' << within << ',' << count << '\n';
        }
    }
}

}  // namespace anonsched
