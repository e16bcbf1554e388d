#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

// Deterministic randomness. Every random decision in the framework goes
// through this header so that (config, seed) fully determines a run.
// std::mt19937_64's raw output is pinned by the standard, so sequences are
// reproducible across platforms; the standard distributions are not, which is
// why uniform draws are implemented by hand here.

namespace anonsched::rng {

constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent sub-stream seeds, keyed by purpose ("grouping", "churn", ...)
// so that changing one experiment knob never shifts another module's draws.
constexpr std::uint64_t derive(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(master ^ mix64(h));
}

constexpr std::uint64_t derive(std::uint64_t master, std::uint64_t n) {
    return mix64(master ^ mix64(n + 0x9e3779b97f4a7c15ULL));
}

// Stateless uniform draw in [0,1) keyed by (seed, a, b). Used for per
// (user, slot) adherence decisions: the draw for a pair never depends on how
// many other draws happened, so identical seeds give identical churn behavior
// across elimination policies.
inline double hash01(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = mix64(seed ^ mix64(a ^ 0x517cc1b727220a95ULL));
    h = mix64(h ^ mix64(b ^ 0x2545f4914f6cdd1dULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

class Engine {
public:
    explicit Engine(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n), n > 0. Multiply-shift; the bias is < n / 2^64.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace anonsched::rng
