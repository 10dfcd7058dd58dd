#include "reflectqa/decimal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reflectqa {

namespace {

constexpr int kMaxDigits = 36;

// Multiplies by 10^powers; nullopt on overflow.
std::optional<int128> scale_up(int128 value, int powers) {
    constexpr int128 kLimit = static_cast<int128>(1) << 122;
    for (int i = 0; i < powers; ++i) {
        if (value > kLimit / 10 || value < -kLimit / 10) {
            return std::nullopt;
        }
        value *= 10;
    }
    return value;
}

std::string unsigned_digits(int128 value) {
    if (value == 0) {
        return "0";
    }
    std::string out;
    while (value > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
        value /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace

std::optional<Decimal> Decimal::parse(std::string_view text) {
    if (text.empty()) {
        return std::nullopt;
    }
    bool negative = false;
    std::size_t i = 0;
    if (text[0] == '-' || text[0] == '+') {
        negative = text[0] == '-';
        ++i;
    }
    int128 coefficient = 0;
    int digits = 0;
    int fraction_digits = 0;
    bool seen_point = false;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '.') {
            if (seen_point) {
                return std::nullopt;
            }
            seen_point = true;
            continue;
        }
        if (c < '0' || c > '9') {
            return std::nullopt;
        }
        if (digits == 0 && c == '0' && !seen_point) {
            // leading zeros carry no digits
        } else {
            ++digits;
        }
        if (digits > kMaxDigits) {
            return std::nullopt;
        }
        coefficient = coefficient * 10 + (c - '0');
        if (seen_point) {
            ++fraction_digits;
        }
    }
    const bool has_digit = text.find_first_of("0123456789") != std::string_view::npos;
    if (!has_digit) {
        return std::nullopt;
    }
    return Decimal(negative ? -coefficient : coefficient, -fraction_digits);
}

std::string Decimal::to_string() const {
    std::string digits = unsigned_digits(coefficient_ < 0 ? -coefficient_ : coefficient_);
    if (exponent_ >= 0) {
        if (coefficient_ != 0) {
            digits.append(static_cast<std::size_t>(exponent_), '0');
        }
    } else {
        const auto places = static_cast<std::size_t>(-exponent_);
        if (digits.size() <= places) {
            digits.insert(0, places - digits.size() + 1, '0');
        }
        digits.insert(digits.size() - places, 1, '.');
    }
    return coefficient_ < 0 ? "-" + digits : digits;
}

long double Decimal::to_long_double() const {
    return static_cast<long double>(coefficient_) * std::pow(10.0L, static_cast<long double>(exponent_));
}

Decimal operator-(const Decimal& lhs, const Decimal& rhs) {
    const int exponent = std::min(lhs.exponent_, rhs.exponent_);
    const auto a = scale_up(lhs.coefficient_, lhs.exponent_ - exponent);
    const auto b = scale_up(rhs.coefficient_, rhs.exponent_ - exponent);
    if (!a || !b) {
        throw std::overflow_error("decimal exponents too far apart");
    }
    return Decimal(*a - *b, exponent);
}

std::strong_ordering operator<=>(const Decimal& lhs, const Decimal& rhs) {
    const int exponent = std::min(lhs.exponent_, rhs.exponent_);
    const auto a = scale_up(lhs.coefficient_, lhs.exponent_ - exponent);
    const auto b = scale_up(rhs.coefficient_, rhs.exponent_ - exponent);
    if (a && b) {
        return *a <=> *b;
    }
    // Alignment overflowed, so the magnitudes differ by many orders and the
    // approximate comparison cannot tie.
    const long double x = lhs.to_long_double();
    const long double y = rhs.to_long_double();
    if (x < y) {
        return std::strong_ordering::less;
    }
    if (x > y) {
        return std::strong_ordering::greater;
    }
    return std::strong_ordering::equal;
}

}  // namespace reflectqa
