#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace reflectqa {

__extension__ using int128 = __int128;

/// Exact base-10 number: coefficient × 10^exponent.
///
/// The exponent is kept as written, so "0.140" remembers three decimal
/// places; equality and ordering are numeric ("0.140" == "0.14").
class Decimal {
public:
    Decimal() = default;
    Decimal(int128 coefficient, int exponent) : coefficient_(coefficient), exponent_(exponent) {}

    /// Parses an optional sign, digits and an optional fraction ("-1234.50", ".5").
    /// No separators, no exponent notation. Returns nullopt on anything else
    /// or when the coefficient exceeds 36 digits.
    static std::optional<Decimal> parse(std::string_view text);

    [[nodiscard]] int128 coefficient() const { return coefficient_; }
    [[nodiscard]] int exponent() const { return exponent_; }
    [[nodiscard]] int decimal_places() const { return exponent_ < 0 ? -exponent_ : 0; }
    [[nodiscard]] bool is_zero() const { return coefficient_ == 0; }
    [[nodiscard]] bool is_negative() const { return coefficient_ < 0; }

    /// Multiplies by 10^powers exactly.
    [[nodiscard]] Decimal shifted(int powers) const { return {coefficient_, exponent_ + powers}; }
    [[nodiscard]] Decimal negated() const { return {-coefficient_, exponent_}; }
    [[nodiscard]] Decimal abs() const { return coefficient_ < 0 ? negated() : *this; }

    /// Fixed notation that preserves the stored exponent ("1.50", "1200").
    [[nodiscard]] std::string to_string() const;
    [[nodiscard]] long double to_long_double() const;

    /// Exact difference; throws std::overflow_error when the exponents are
    /// too far apart to align in 128 bits.
    friend Decimal operator-(const Decimal& lhs, const Decimal& rhs);

    friend std::strong_ordering operator<=>(const Decimal& lhs, const Decimal& rhs);
    friend bool operator==(const Decimal& lhs, const Decimal& rhs) { return (lhs <=> rhs) == 0; }

private:
    int128 coefficient_ = 0;
    int exponent_ = 0;
};

}  // namespace reflectqa
