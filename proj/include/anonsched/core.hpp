#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Shared vocabulary: time discretization, identifiers and bit vectors used by
// every other module. All types here are immutable value objects once built.

namespace anonsched {

// Error categories. The CLI maps them to exit codes: config 1, input 2,
// anything logic_error-derived 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw InternalError(what);
}

// Time discretization. A run consists of intervals of `slots_per_interval`
// slots each; interval 0 is the learning interval, intervals 1..num_intervals
// make up the communication phase. slot_seconds only maps wall-clock
// timestamps onto slots; all protocol logic is slot-indexed.
struct TimeConfig {
    int slots_per_interval = 24;       // w
    std::int64_t slot_seconds = 3600;
    int messages_per_slot = 1;         // m
    int num_intervals = 30;            // v: communication intervals after learning

    void validate() const {
        if (slots_per_interval < 1) throw ConfigError("time.w must be >= 1");
        if (slot_seconds < 1) throw ConfigError("time.slot_seconds must be >= 1");
        if (messages_per_slot < 1) throw ConfigError("time.m must be >= 1");
        if (num_intervals < 1) throw ConfigError("time.intervals must be >= 1");
    }
};

// A slot within a specific interval. Ordered lexicographically.
struct SlotRef {
    std::int32_t interval = 0;  // 0 = learning interval
    std::int32_t slot = 0;      // in [0, w)

    friend auto operator<=>(const SlotRef&, const SlotRef&) = default;
};

inline std::int64_t global_slot(SlotRef r, int w) {
    return static_cast<std::int64_t>(r.interval) * w + r.slot;
}

inline SlotRef slot_ref(std::int64_t global, int w) {
    require(global >= 0, "slot_ref: negative global slot");
    return SlotRef{static_cast<std::int32_t>(global / w),
                   static_cast<std::int32_t>(global % w)};
}

// Opaque identifiers. Users and pseudonyms live in separate id spaces; the
// bijection between them is held privately by the simulation module and is
// never part of the adversary's inputs.
enum class UserId : std::uint32_t {};
enum class PseudonymId : std::uint32_t {};
enum class SetId : std::uint32_t {};

constexpr std::size_t idx(UserId v) { return static_cast<std::size_t>(v); }
constexpr std::size_t idx(PseudonymId v) { return static_cast<std::size_t>(v); }
constexpr std::size_t idx(SetId v) { return static_cast<std::size_t>(v); }

constexpr UserId user_id(std::size_t i) { return UserId{static_cast<std::uint32_t>(i)}; }
constexpr PseudonymId pseudonym_id(std::size_t i) { return PseudonymId{static_cast<std::uint32_t>(i)}; }
constexpr SetId set_id(std::size_t i) { return SetId{static_cast<std::uint32_t>(i)}; }

// Fixed-width binary vector. Used both for publishing-behavior vectors (one
// bit per slot of an interval) and for communication schedules.
class Bits {
public:
    Bits() = default;
    explicit Bits(int width) : bits_(static_cast<std::size_t>(width), 0) {
        if (width < 0) throw std::invalid_argument("Bits: negative width");
    }

    static Bits from_string(std::string_view s);

    int width() const { return static_cast<int>(bits_.size()); }
    bool test(int i) const { return bits_[static_cast<std::size_t>(i)] != 0; }
    void set(int i, bool v = true) { bits_[static_cast<std::size_t>(i)] = v ? 1 : 0; }

    std::string to_string() const;

    const std::vector<std::uint8_t>& raw() const { return bits_; }

    friend bool operator==(const Bits&, const Bits&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

using BehaviorVector = Bits;  // slot l set iff real messages were created at l
using Schedule = Bits;        // slot l set iff members must send m messages at l

int hamming_weight(const Bits& v);

// Count of positions at which the two vectors disagree (SMC mismatch count).
// Throws std::invalid_argument on width mismatch.
int mismatch_count(const Bits& a, const Bits& b);

// True iff the vectors differ in at most max_mismatch slots.
bool vectors_similar(const BehaviorVector& a, const BehaviorVector& b, int max_mismatch);

// Exact decimal/percent fraction, kept rational so threshold arithmetic like
// ceil(q * size) never suffers float rounding (0.1 * 100 must give 10, not 11).
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;

    // Accepts "0.15", ".5", "15%", "1".
    static Fraction parse(std::string_view text);

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string to_string() const;

    friend bool operator==(const Fraction&, const Fraction&) = default;
};

}  // namespace anonsched
