#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "convkit/error.hpp"

namespace convkit {

// Exact rational with machine-integer numerator/denominator, always kept
// normalized with a positive denominator.
struct Rational {
  int64_t num = 0;
  int64_t den = 1;

  Rational() = default;
  Rational(int64_t n) : num(n), den(1) {}  // NOLINT: implicit by design
  Rational(int64_t n, int64_t d) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den == 0) throw NumericError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  bool is_integer() const { return den == 1; }
  int64_t floor() const {
    int64_t q = num / den;
    if (num % den != 0 && num < 0) --q;
    return q;
  }
  int64_t ceil() const { return -Rational(-num, den).floor(); }
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

  std::string str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }

  friend Rational operator+(Rational a, Rational b) {
    return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
  }
  friend Rational operator-(Rational a, Rational b) {
    return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
  }
  friend Rational operator-(Rational a) { return Rational(-a.num, a.den); }
  friend Rational operator*(Rational a, Rational b) {
    return Rational(a.num * b.num, a.den * b.den);
  }
  friend Rational operator/(Rational a, Rational b) {
    if (b.num == 0) throw NumericError("rational division by zero");
    return Rational(a.num * b.den, a.den * b.num);
  }
  friend bool operator==(Rational a, Rational b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator!=(Rational a, Rational b) { return !(a == b); }
  friend bool operator<(Rational a, Rational b) {
    return a.num * b.den < b.num * a.den;
  }
  friend bool operator<=(Rational a, Rational b) { return a < b || a == b; }
  friend bool operator>(Rational a, Rational b) { return b < a; }
  friend bool operator>=(Rational a, Rational b) { return b <= a; }
};

inline Rational rational_min(Rational a, Rational b) { return a < b ? a : b; }
inline Rational rational_max(Rational a, Rational b) { return a < b ? b : a; }

}  // namespace convkit
