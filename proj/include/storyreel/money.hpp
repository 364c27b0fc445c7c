#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace storyreel {

/// Exact USD amount stored as an integer count of pico-dollars (1e-12 USD).
///
/// Ledger arithmetic never touches binary floating point. The range is about
/// +/- 9.2 million USD, which is far beyond any batch this tool produces.
class Usd {
public:
    static constexpr std::int64_t kPicoPerUsd = 1'000'000'000'000;

    constexpr Usd() = default;

    static constexpr Usd from_pico(std::int64_t pico) { return Usd{pico}; }

    /// Parses a plain decimal string such as "0.103" or "12". At most twelve
    /// fractional digits are accepted; anything else throws std::invalid_argument.
    static Usd parse(std::string_view text);

    /// Converts a double by rounding to the nearest pico-dollar. Only used for
    /// config values that arrive as JSON numbers.
    static Usd from_double(double value);

    constexpr std::int64_t pico() const { return pico_; }
    double to_double() const { return static_cast<double>(pico_) / static_cast<double>(kPicoPerUsd); }

    /// Shortest exact decimal rendering ("0.00028", "10.3", "0").
    std::string to_string() const;

    /// Divides by a count, rounding half-to-even at the pico-dollar.
    Usd divided_by(std::int64_t count) const;

    constexpr Usd operator+(Usd other) const { return Usd{pico_ + other.pico_}; }
    constexpr Usd operator-(Usd other) const { return Usd{pico_ - other.pico_}; }
    constexpr Usd& operator+=(Usd other) {
        pico_ += other.pico_;
        return *this;
    }
    constexpr auto operator<=>(const Usd&) const = default;

private:
    constexpr explicit Usd(std::int64_t pico) : pico_(pico) {}
    std::int64_t pico_ = 0;
};

}  // namespace storyreel
