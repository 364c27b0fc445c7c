#include "storyreel/money.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace storyreel {

Usd Usd::parse(std::string_view text) {
    if (text.empty()) {
        throw std::invalid_argument("empty decimal amount");
    }
    bool negative = false;
    std::size_t pos = 0;
    if (text[0] == '-' || text[0] == '+') {
        negative = text[0] == '-';
        pos = 1;
    }
    std::int64_t whole = 0;
    std::int64_t frac = 0;
    int frac_digits = 0;
    bool seen_digit = false;
    bool in_frac = false;
    for (; pos < text.size(); ++pos) {
        const char c = text[pos];
        if (c == '.') {
            if (in_frac) {
                throw std::invalid_argument("malformed decimal amount: " + std::string(text));
            }
            in_frac = true;
            continue;
        }
        if (c < '0' || c > '9') {
            throw std::invalid_argument("malformed decimal amount: " + std::string(text));
        }
        seen_digit = true;
        if (in_frac) {
            if (++frac_digits > 12) {
                throw std::invalid_argument("more than 12 fractional digits: " + std::string(text));
            }
            frac = frac * 10 + (c - '0');
        } else {
            if (whole > 9'000'000) {
                throw std::invalid_argument("amount out of range: " + std::string(text));
            }
            whole = whole * 10 + (c - '0');
        }
    }
    if (!seen_digit) {
        throw std::invalid_argument("malformed decimal amount: " + std::string(text));
    }
    for (int i = frac_digits; i < 12; ++i) {
        frac *= 10;
    }
    const std::int64_t pico = whole * kPicoPerUsd + frac;
    return Usd{negative ? -pico : pico};
}

Usd Usd::from_double(double value) {
    if (!std::isfinite(value) || std::fabs(value) > 9e6) {
        throw std::invalid_argument("amount out of range");
    }
    return Usd{static_cast<std::int64_t>(std::llround(value * static_cast<double>(kPicoPerUsd)))};
}

std::string Usd::to_string() const {
    std::int64_t magnitude = pico_ < 0 ? -pico_ : pico_;
    std::string out = pico_ < 0 ? "-" : "";
    out += std::to_string(magnitude / kPicoPerUsd);
    std::int64_t frac = magnitude % kPicoPerUsd;
    if (frac != 0) {
        std::string digits = std::to_string(frac);
        digits.insert(0, 12 - digits.size(), '0');
        while (!digits.empty() && digits.back() == '0') {
            digits.pop_back();
        }
        out += '.';
        out += digits;
    }
    return out;
}

Usd Usd::divided_by(std::int64_t count) const {
    if (count <= 0) {
        throw std::invalid_argument("division by non-positive count");
    }
    std::int64_t q = pico_ / count;
    std::int64_t r = pico_ % count;
    // half-to-even on the remainder
    const std::int64_t twice = 2 * (r < 0 ? -r : r);
    if (twice > count || (twice == count && (q % 2 != 0))) {
        q += pico_ < 0 ? -1 : 1;
    }
    return Usd{q};
}

}  // namespace storyreel
