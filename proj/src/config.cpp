#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "anonsched/csv.hpp"
#include "anonsched/experiment.hpp"

namespace anonsched {

namespace {

const std::vector<std::string> kKnownKeys = {
    "config_version",
    "time.w",
    "time.slot_seconds",
    "time.m",
    "time.intervals",
    "arrival.batch_threshold",
    "arrival.max_wait_slots",
    "clustering.k",
    "clustering.max_iterations",
    "grouping.mode",
    "grouping.random_repeats",
    "scheduling.q_fraction",
    "scheduling.q_overrides",
    "scheduling.z",
    "scheduling.min_active_for_update",
    "schedule.mode",
    "elimination.policy",
    "elimination.d",
    "elimination.max_failures",
    "churn.rate",
    "churn.miss_probability",
    "trace.source",
    "trace.path",
    "trace.strict",
    "trace.epoch",
    "synth.num_users",
    "synth.intervals",
    "synth.base_rate",
    "synth.groups",
    "synth.group_rate",
    "synth.quiet_start",
    "synth.quiet_end",
    "synth.first_interval_event",
    "message.size_bytes",
    "rejoin_eliminated",
    "output.dir",
    "output.dump_activity",
    "seed",
};

std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::string env_name(const std::string& key) {
    std::string name = "ANONSCHED_";
    for (char c : key) {
        name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(c)));
    }
    return name;
}

class Resolver {
public:
    Resolver(const KeyValues& file_values, const KeyValues& overrides)
        : file_(file_values), overrides_(overrides) {
        for (const auto& [key, value] : file_values) check_known(key);
        for (const auto& [key, value] : overrides) check_known(key);
    }

    std::optional<std::string> raw(const std::string& key) const {
        if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
        if (const char* env = std::getenv(env_name(key).c_str())) return std::string(env);
        if (auto it = file_.find(key); it != file_.end()) return it->second;
        return std::nullopt;
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto v = raw(key);
        return v ? *v : fallback;
    }

    bool flag(const std::string& key, bool fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError("config: bad boolean for " + key + ": '" + *v + "'");
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        std::int64_t out = 0;
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || p != v->data() + v->size()) {
            throw ConfigError("config: bad integer for " + key + ": '" + *v + "'");
        }
        return out;
    }

    std::uint64_t uinteger(const std::string& key, std::uint64_t fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || p != v->data() + v->size()) {
            throw ConfigError("config: bad integer for " + key + ": '" + *v + "'");
        }
        return out;
    }

    double real(const std::string& key, double fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            double out = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config: bad number for " + key + ": '" + *v + "'");
        }
    }

    std::optional<std::int64_t> opt_integer(const std::string& key) const {
        auto v = raw(key);
        if (!v || v->empty() || *v == "none") return std::nullopt;
        std::int64_t out = 0;
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || p != v->data() + v->size()) {
            throw ConfigError("config: bad integer for " + key + ": '" + *v + "'");
        }
        return out;
    }

private:
    static void check_known(const std::string& key) {
        for (const std::string& known : kKnownKeys) {
            if (known == key) return;
        }
        throw ConfigError("config: unknown key '" + key + "'");
    }

    const KeyValues& file_;
    const KeyValues& overrides_;
};

std::map<SetId, Fraction> parse_q_overrides(const std::string& text) {
    std::map<SetId, Fraction> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (item.empty()) continue;
        std::size_t colon = item.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("config: q override needs set:fraction, got '" + item + "'");
        }
        std::int64_t set = 0;
        std::string id_part = trim(item.substr(0, colon));
        auto [p, ec] = std::from_chars(id_part.data(), id_part.data() + id_part.size(), set);
        if (ec != std::errc{} || p != id_part.data() + id_part.size() || set < 0) {
            throw ConfigError("config: bad set id in q override '" + item + "'");
        }
        out[set_id(static_cast<std::size_t>(set))] =
            Fraction::parse(trim(item.substr(colon + 1)));
    }
    return out;
}

}  // namespace

const std::vector<std::string>& known_keys() { return kKnownKeys; }

KeyValues read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    KeyValues out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string text = trim(line);
        if (text.empty()) continue;
        std::size_t eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key = value at " + path + ":" +
                              std::to_string(line_no));
        }
        std::string key = trim(text.substr(0, eq));
        std::string value = trim(text.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config: empty key at " + path + ":" + std::to_string(line_no));
        }
        out[key] = value;
    }
    auto version = out.find("config_version");
    if (version == out.end()) {
        throw ConfigError("config: missing config_version in '" + path + "'");
    }
    if (version->second != "1") {
        throw ConfigError("config: unsupported config_version '" + version->second + "'");
    }
    return out;
}

ExperimentConfig make_config(const KeyValues& file_values, const KeyValues& overrides) {
    Resolver r(file_values, overrides);
    if (auto version = r.raw("config_version"); version && *version != "1") {
        throw ConfigError("config: unsupported config_version '" + *version + "'");
    }

    ExperimentConfig cfg;
    cfg.time.slots_per_interval = static_cast<int>(r.integer("time.w", 24));
    cfg.time.slot_seconds = r.integer("time.slot_seconds", 3600);
    cfg.time.messages_per_slot = static_cast<int>(r.integer("time.m", 1));
    cfg.time.num_intervals = static_cast<int>(r.integer("time.intervals", 30));

    cfg.arrival.batch_threshold =
        static_cast<std::size_t>(r.integer("arrival.batch_threshold", 5000));
    cfg.arrival.max_wait_slots = r.opt_integer("arrival.max_wait_slots");

    cfg.clustering_k = static_cast<int>(r.integer("clustering.k", 15));
    cfg.clustering_max_iterations =
        static_cast<int>(r.integer("clustering.max_iterations", 100));

    std::string grouping = r.str("grouping.mode", "kmodes");
    if (grouping == "kmodes") {
        cfg.grouping = GroupingMode::kmodes;
    } else if (grouping == "random") {
        cfg.grouping = GroupingMode::random;
    } else {
        throw ConfigError("config: grouping.mode must be kmodes or random");
    }
    cfg.random_repeats = static_cast<int>(r.integer("grouping.random_repeats", 10));

    cfg.scheduling.q_fraction = Fraction::parse(r.str("scheduling.q_fraction", "0.1"));
    cfg.scheduling.q_overrides = parse_q_overrides(r.str("scheduling.q_overrides", ""));
    cfg.scheduling.z = static_cast<int>(r.integer("scheduling.z", 50));
    cfg.scheduling.min_active_for_update =
        static_cast<int>(r.integer("scheduling.min_active_for_update", 2));

    std::string schedule_mode = r.str("schedule.mode", "fixed");
    if (schedule_mode == "fixed") {
        cfg.schedule_mode = ScheduleMode::fixed;
    } else if (schedule_mode == "updatable") {
        cfg.schedule_mode = ScheduleMode::updatable;
    } else {
        throw ConfigError("config: schedule.mode must be fixed or updatable");
    }

    std::string policy = r.str("elimination.policy", "nochances");
    if (policy == "nochances") {
        cfg.policy.kind = EliminationPolicy::Kind::no_chances;
    } else if (policy == "chances") {
        cfg.policy.kind = EliminationPolicy::Kind::chances;
    } else {
        throw ConfigError("config: elimination.policy must be nochances or chances");
    }
    cfg.policy.wait_active_slots = static_cast<int>(r.integer("elimination.d", 1));
    if (auto v = r.raw("elimination.max_failures"); v && (*v == "unlimited" || *v == "none")) {
        cfg.policy.max_failures = std::nullopt;
    } else {
        cfg.policy.max_failures = static_cast<int>(r.integer("elimination.max_failures", 1));
    }

    cfg.churn.rate = r.real("churn.rate", 0.0);
    cfg.churn.miss_probability = r.real("churn.miss_probability", 0.5);

    std::string source = r.str("trace.source", "synthetic");
    if (source == "file") {
        cfg.trace_source = TraceSource::file;
    } else if (source == "synthetic") {
        cfg.trace_source = TraceSource::synthetic;
    } else {
        throw ConfigError("config: trace.source must be file or synthetic");
    }
    cfg.trace_path = r.str("trace.path", "");
    cfg.trace_strict = r.flag("trace.strict", false);
    cfg.trace_epoch = r.opt_integer("trace.epoch");

    cfg.synth.num_users = static_cast<std::size_t>(r.integer("synth.num_users", 1000));
    cfg.synth.intervals = static_cast<int>(r.integer("synth.intervals", 0));
    cfg.synth.base_rate = r.real("synth.base_rate", 0.02);
    cfg.synth.groups = static_cast<int>(r.integer("synth.groups", 0));
    cfg.synth.group_rate = r.real("synth.group_rate", 0.9);
    cfg.synth.quiet_start = static_cast<int>(r.integer("synth.quiet_start", -1));
    cfg.synth.quiet_end = static_cast<int>(r.integer("synth.quiet_end", -1));
    cfg.synth.first_interval_event = r.flag("synth.first_interval_event", false);

    cfg.message_size_bytes = static_cast<int>(r.integer("message.size_bytes", 1024));
    cfg.rejoin_eliminated = r.flag("rejoin_eliminated", false);
    cfg.dump_activity = r.flag("output.dump_activity", false);
    cfg.output_dir = r.str("output.dir", "out");
    cfg.master_seed = r.uinteger("seed", 1);

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const KeyValues& overrides) {
    return make_config(read_config_file(path), overrides);
}

void ExperimentConfig::validate() const {
    time.validate();
    arrival.validate();
    scheduling.validate();
    policy.validate();
    churn.validate();
    if (clustering_k < 1) throw ConfigError("config: clustering.k must be >= 1");
    if (clustering_max_iterations < 1) {
        throw ConfigError("config: clustering.max_iterations must be >= 1");
    }
    if (random_repeats < 1) throw ConfigError("config: grouping.random_repeats must be >= 1");
    if (message_size_bytes < 1) throw ConfigError("config: message.size_bytes must be >= 1");
    if (trace_source == TraceSource::file && trace_path.empty()) {
        throw ConfigError("config: trace.source = file requires trace.path");
    }
    if (trace_source == TraceSource::synthetic) {
        SynthTraceParams p = synth;
        p.slots_per_interval = time.slots_per_interval;
        p.slot_seconds = time.slot_seconds;
        if (p.intervals == 0) p.intervals = time.num_intervals + 2;  // auto
        p.validate();
    }
    if (output_dir.empty()) throw ConfigError("config: output.dir must not be empty");
}

std::string echo_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "config_version = 1\n";
    out << "time.w = " << cfg.time.slots_per_interval << '\n';
    out << "time.slot_seconds = " << cfg.time.slot_seconds << '\n';
    out << "time.m = " << cfg.time.messages_per_slot << '\n';
    out << "time.intervals = " << cfg.time.num_intervals << '\n';
    out << "arrival.batch_threshold = " << cfg.arrival.batch_threshold << '\n';
    out << "arrival.max_wait_slots = "
        << (cfg.arrival.max_wait_slots ? std::to_string(*cfg.arrival.max_wait_slots) : "none")
        << '\n';
    out << "clustering.k = " << cfg.clustering_k << '\n';
    out << "clustering.max_iterations = " << cfg.clustering_max_iterations << '\n';
    out << "grouping.mode = " << (cfg.grouping == GroupingMode::kmodes ? "kmodes" : "random")
        << '\n';
    out << "grouping.random_repeats = " << cfg.random_repeats << '\n';
    out << "scheduling.q_fraction = " << cfg.scheduling.q_fraction.to_string() << '\n';
    out << "scheduling.q_overrides = ";
    bool first = true;
    for (const auto& [set, q] : cfg.scheduling.q_overrides) {
        if (!first) out << ';';
        out << idx(set) << ':' << q.to_string();
        first = false;
    }
    out << '\n';
    out << "scheduling.z = " << cfg.scheduling.z << '\n';
    out << "scheduling.min_active_for_update = " << cfg.scheduling.min_active_for_update << '\n';
    out << "schedule.mode = "
        << (cfg.schedule_mode == ScheduleMode::fixed ? "fixed" : "updatable") << '\n';
    out << "elimination.policy = "
        << (cfg.policy.kind == EliminationPolicy::Kind::no_chances ? "nochances" : "chances")
        << '\n';
    out << "elimination.d = " << cfg.policy.wait_active_slots << '\n';
    out << "elimination.max_failures = "
        << (cfg.policy.max_failures ? std::to_string(*cfg.policy.max_failures) : "unlimited")
        << '\n';
    out << "churn.rate = " << csv::fmt_double(cfg.churn.rate) << '\n';
    out << "churn.miss_probability = " << csv::fmt_double(cfg.churn.miss_probability) << '\n';
    out << "trace.source = " << (cfg.trace_source == TraceSource::file ? "file" : "synthetic")
        << '\n';
    out << "trace.path = " << cfg.trace_path << '\n';
    out << "trace.strict = " << (cfg.trace_strict ? "true" : "false") << '\n';
    out << "trace.epoch = "
        << (cfg.trace_epoch ? std::to_string(*cfg.trace_epoch) : "none") << '\n';
    out << "synth.num_users = " << cfg.synth.num_users << '\n';
    out << "synth.intervals = " << cfg.synth.intervals << '\n';
    out << "synth.base_rate = " << csv::fmt_double(cfg.synth.base_rate) << '\n';
    out << "synth.groups = " << cfg.synth.groups << '\n';
    out << "synth.group_rate = " << csv::fmt_double(cfg.synth.group_rate) << '\n';
    out << "synth.quiet_start = " << cfg.synth.quiet_start << '\n';
    out << "synth.quiet_end = " << cfg.synth.quiet_end << '\n';
    out << "synth.first_interval_event = " << (cfg.synth.first_interval_event ? "true" : "false")
        << '\n';
    out << "message.size_bytes = " << cfg.message_size_bytes << '\n';
    out << "rejoin_eliminated = " << (cfg.rejoin_eliminated ? "true" : "false") << '\n';
    out << "output.dump_activity = " << (cfg.dump_activity ? "true" : "false") << '\n';
    out << "seed = " << cfg.master_seed << '\n';
    return out.str();
}

}  // namespace anonsched
