#include "anonsched/core.hpp"

#include <charconv>

namespace anonsched {

Bits Bits::from_string(std::string_view s) {
    Bits out(static_cast<int>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1') {
            out.bits_[i] = 1;
        } else if (s[i] != '0') {
            throw std::invalid_argument("Bits::from_string: expected only '0'/'1'");
        }
    }
    return out;
}

std::string Bits::to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i]) s[i] = '1';
    }
    return s;
}

int hamming_weight(const Bits& v) {
    int n = 0;
    for (std::uint8_t b : v.raw()) n += b;
    return n;
}

int mismatch_count(const Bits& a, const Bits& b) {
    if (a.width() != b.width()) {
        throw std::invalid_argument("mismatch_count: vector widths differ");
    }
    int n = 0;
    for (int i = 0; i < a.width(); ++i) {
        n += a.test(i) != b.test(i);
    }
    return n;
}

bool vectors_similar(const BehaviorVector& a, const BehaviorVector& b, int max_mismatch) {
    if (max_mismatch < 0) throw std::invalid_argument("vectors_similar: max_mismatch < 0");
    return mismatch_count(a, b) <= max_mismatch;
}

Fraction Fraction::parse(std::string_view text) {
    std::string_view s = text;
    bool percent = false;
    if (!s.empty() && s.back() == '%') {
        percent = true;
        s.remove_suffix(1);
    }
    if (s.empty()) throw ConfigError("fraction: empty value");

    std::int64_t whole = 0;
    std::size_t dot = s.find('.');
    std::string_view int_part = s.substr(0, dot);
    std::string_view frac_part = dot == std::string_view::npos ? "" : s.substr(dot + 1);

    if (!int_part.empty()) {
        auto [p, ec] = std::from_chars(int_part.data(), int_part.data() + int_part.size(), whole);
        if (ec != std::errc{} || p != int_part.data() + int_part.size()) {
            throw ConfigError("fraction: bad number '" + std::string(text) + "'");
        }
    } else if (frac_part.empty()) {
        throw ConfigError("fraction: bad number '" + std::string(text) + "'");
    }
    if (whole < 0) throw ConfigError("fraction: negative value");

    std::int64_t num = whole;
    std::int64_t den = 1;
    for (char c : frac_part) {
        if (c < '0' || c > '9') {
            throw ConfigError("fraction: bad number '" + std::string(text) + "'");
        }
        if (den > 100000000000000LL) throw ConfigError("fraction: too many digits");
        num = num * 10 + (c - '0');
        den *= 10;
    }
    if (percent) den *= 100;
    return Fraction{num, den};
}

std::string Fraction::to_string() const {
    // Canonical decimal form: num/den with den a power of ten.
    std::int64_t whole = num / den;
    std::int64_t rem = num % den;
    std::string s = std::to_string(whole);
    if (rem != 0) {
        std::string digits;
        std::int64_t d = den;
        while (d > 1) {
            d /= 10;
            digits.push_back(static_cast<char>('0' + (rem / d) % 10));
        }
        while (!digits.empty() && digits.back() == '0') digits.pop_back();
        s.push_back('.');
        s += digits;
    }
    return s;
}

}  // namespace anonsched
