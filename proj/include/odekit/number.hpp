#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>

namespace odekit {

/// A numeric literal inside an expression: an exact rational with 64-bit
/// numerator/denominator, or an IEEE double once exactness is lost
/// (overflow, irrational roots, or a literal that cannot be represented).
class Number {
 public:
  constexpr Number() = default;
  Number(std::int64_t value) : num_(value) {}  // NOLINT: implicit from integers is intended

  static Number rational(std::int64_t num, std::int64_t den) {
    std::optional<Number> r = make_rational(num, den);
    if (!r) return real(static_cast<double>(num) / static_cast<double>(den));
    return *r;
  }

  static Number real(double value) {
    Number n;
    n.exact_ = false;
    n.value_ = value;
    return n;
  }

  /// Parses a decimal literal ("3", "3.6", "1.27e-6"). Finite decimals that
  /// fit in 64 bits become exact rationals; everything else is a double.
  static Number from_literal(std::string_view text) {
    std::string s(text);
    std::size_t epos = s.find_first_of("eE");
    std::string mantissa = s.substr(0, epos);
    long exponent = 0;
    if (epos != std::string::npos) exponent = std::strtol(s.c_str() + epos + 1, nullptr, 10);
    std::size_t dot = mantissa.find('.');
    std::string digits = mantissa;
    if (dot != std::string::npos) {
      digits = mantissa.substr(0, dot) + mantissa.substr(dot + 1);
      exponent -= static_cast<long>(mantissa.size() - dot - 1);
    }
    std::size_t first = digits.find_first_not_of('0');
    digits = first == std::string::npos ? "0" : digits.substr(first);
    const double fallback = std::strtod(s.c_str(), nullptr);
    if (digits.size() > 18 || exponent > 18 || exponent < -18) return real(fallback);
    __int128 value = 0;
    for (char c : digits) value = value * 10 + (c - '0');
    __int128 scale = 1;
    for (long i = 0; i < std::labs(exponent); ++i) scale *= 10;
    if (exponent >= 0) value *= scale;
    if (value > INT64_MAX || scale > INT64_MAX) return real(fallback);
    if (exponent >= 0) return Number(static_cast<std::int64_t>(value));
    return rational(static_cast<std::int64_t>(value), static_cast<std::int64_t>(scale));
  }

  bool is_exact() const { return exact_; }
  bool is_integer() const { return exact_ && den_ == 1; }
  std::int64_t numerator() const { return num_; }
  std::int64_t denominator() const { return den_; }

  double to_double() const {
    return exact_ ? static_cast<double>(num_) / static_cast<double>(den_) : value_;
  }

  bool is_zero() const { return exact_ ? num_ == 0 : value_ == 0.0; }
  bool is_one() const { return exact_ ? (num_ == 1 && den_ == 1) : value_ == 1.0; }
  bool is_negative() const { return exact_ ? num_ < 0 : value_ < 0.0; }

  Number operator-() const {
    if (exact_ && num_ != INT64_MIN) return Number::unchecked(-num_, den_);
    return real(-to_double());
  }

  friend Number operator+(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) {
      __int128 n = static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_;
      __int128 d = static_cast<__int128>(a.den_) * b.den_;
      if (auto r = reduce(n, d)) return *r;
    }
    return real(a.to_double() + b.to_double());
  }
  friend Number operator-(const Number& a, const Number& b) { return a + (-b); }
  friend Number operator*(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) {
      __int128 n = static_cast<__int128>(a.num_) * b.num_;
      __int128 d = static_cast<__int128>(a.den_) * b.den_;
      if (auto r = reduce(n, d)) return *r;
    }
    return real(a.to_double() * b.to_double());
  }
  friend Number operator/(const Number& a, const Number& b) { return a * b.reciprocal(); }

  Number reciprocal() const {
    if (exact_ && num_ != 0) {
      if (auto r = reduce(static_cast<__int128>(den_), static_cast<__int128>(num_))) return *r;
    }
    return real(1.0 / to_double());
  }

  /// Exact power when the result is representable: integer exponents on
  /// rationals, and rational exponents when the root is exact.
  static std::optional<Number> exact_pow(const Number& base, const Number& exponent) {
    if (!base.exact_ || !exponent.exact_) return std::nullopt;
    if (exponent.num_ == 0) return Number(1);
    if (base.num_ == 0) {
      if (exponent.num_ > 0) return Number(0);
      return std::nullopt;
    }
    Number b = base;
    std::int64_t p = exponent.num_;
    std::int64_t q = exponent.den_;
    if (q != 1) {
      if (b.num_ < 0 && q % 2 == 0) return std::nullopt;
      auto rn = integer_root(b.num_, q);
      auto rd = integer_root(b.den_, q);
      if (!rn || !rd) return std::nullopt;
      b = Number::unchecked(*rn, *rd);
    }
    if (p < 0) {
      b = b.reciprocal();
      p = -p;
      if (!b.exact_) return std::nullopt;
    }
    Number result(1);
    for (std::int64_t i = 0; i < p; ++i) {
      result = result * b;
      if (!result.exact_) return std::nullopt;
      if (i > 64) return std::nullopt;
    }
    return result;
  }

  static Number pow(const Number& base, const Number& exponent) {
    if (auto r = exact_pow(base, exponent)) return *r;
    return real(std::pow(base.to_double(), exponent.to_double()));
  }

  /// Equality on value: exact pairs compare exactly; anything involving a
  /// double compares to 1e-12 relative.
  friend bool operator==(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) return a.num_ == b.num_ && a.den_ == b.den_;
    const double x = a.to_double();
    const double y = b.to_double();
    if (x == y) return true;
    return std::fabs(x - y) <= 1e-12 * std::max(std::fabs(x), std::fabs(y));
  }

  friend bool operator<(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) {
      return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
    }
    return a.to_double() < b.to_double();
  }

  /// Parseable text: "3", "-1/3", or a round-trip double like "0.1".
  std::string to_string() const {
    if (exact_) {
      if (den_ == 1) return std::to_string(num_);
      return std::to_string(num_) + "/" + std::to_string(den_);
    }
    if (std::isinf(value_)) return value_ > 0 ? "inf" : "-inf";
    if (std::isnan(value_)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value_);
    std::string s = buf;
    // keep a marker that this was a double so it does not re-parse as an integer
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
  }

 private:
  static Number unchecked(std::int64_t num, std::int64_t den) {
    Number n;
    n.num_ = num;
    n.den_ = den;
    return n;
  }

  static std::optional<Number> make_rational(std::int64_t num, std::int64_t den) {
    if (den == 0) return std::nullopt;
    return reduce(static_cast<__int128>(num), static_cast<__int128>(den));
  }

  static std::optional<Number> reduce(__int128 n, __int128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 a = n < 0 ? -n : n;
    __int128 b = d;
    while (b != 0) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      n /= a;
      d /= a;
    }
    if (n > INT64_MAX || n < -INT64_MAX || d > INT64_MAX) return std::nullopt;
    return unchecked(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
  }

  static std::optional<std::int64_t> integer_root(std::int64_t value, std::int64_t degree) {
    const bool negative = value < 0;
    const double guess = std::pow(std::fabs(static_cast<double>(value)), 1.0 / static_cast<double>(degree));
    const auto base = static_cast<std::int64_t>(std::llround(guess));
    for (std::int64_t candidate = std::max<std::int64_t>(0, base - 1); candidate <= base + 1; ++candidate) {
      __int128 acc = 1;
      bool overflow = false;
      for (std::int64_t i = 0; i < degree; ++i) {
        acc *= candidate;
        if (acc > static_cast<__int128>(INT64_MAX)) {
          overflow = true;
          break;
        }
      }
      if (!overflow && acc == (negative ? -static_cast<__int128>(value) : static_cast<__int128>(value))) {
        return negative ? -candidate : candidate;
      }
    }
    return std::nullopt;
  }

  bool exact_ = true;
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
  double value_ = 0.0;
};

}  // namespace odekit
