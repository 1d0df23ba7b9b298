#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace phaze {

// Latencies are integer ticks and sizes are exact byte counts everywhere.
using Tick = std::int64_t;
using Bytes = std::int64_t;

inline constexpr Tick kInfTicks = std::numeric_limits<Tick>::max() / 4;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotLinearError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

// Ceiling division for non-negative numerators and positive divisors.
Tick ceil_div(__int128 num, __int128 den);

// Narrows a 128-bit intermediate back to 64 bits, throwing on overflow.
std::int64_t checked_narrow(__int128 v);

bool is_power_of_two(std::int64_t v);
int log2_exact(std::int64_t v);

// Exact rational number. Used for configurable multipliers and
// unit areas so that comparisons and ties are exact.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  // Accepts "3", "3/2", "0.0001" or "-1.5e-3".
  static Rational parse(const std::string& text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  Rational operator+(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool operator<(const Rational& o) const;
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator<=(const Rational& o) const { return !(o < *this); }
  bool operator>=(const Rational& o) const { return !(*this < o); }

  // ceil(value * this) for a non-negative integer value.
  std::int64_t scale_ceil(std::int64_t value) const;

 private:
  static Rational reduce(__int128 num, __int128 den);

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace phaze
