#include "phaze/common.hpp"

#include <cctype>
#include <numeric>

namespace phaze {

namespace {

__int128 gcd128(__int128 a, __int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace

Tick ceil_div(__int128 num, __int128 den) {
  if (den <= 0) throw Error("ceil_div: non-positive divisor");
  if (num <= 0) return checked_narrow(num / den);
  return checked_narrow((num + den - 1) / den);
}

std::int64_t checked_narrow(__int128 v) {
  if (v > std::numeric_limits<std::int64_t>::max() ||
      v < std::numeric_limits<std::int64_t>::min()) {
    throw OverflowError("integer overflow in tick/byte arithmetic");
  }
  return static_cast<std::int64_t>(v);
}

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(std::int64_t v) {
  if (!is_power_of_two(v)) throw ValidationError("value " + std::to_string(v) + " is not a power of two");
  int r = 0;
  while ((std::int64_t{1} << r) < v) ++r;
  return r;
}

Rational Rational::reduce(__int128 num, __int128 den) {
  if (den == 0) throw Error("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  __int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  Rational r;
  r.num_ = checked_narrow(num);
  r.den_ = checked_narrow(den);
  return r;
}

Rational::Rational(std::int64_t num, std::int64_t den) {
  Rational r = reduce(num, den);
  num_ = r.num_;
  den_ = r.den_;
}

Rational Rational::parse(const std::string& raw) {
  std::string text;
  for (char c : raw) {
    if (!std::isspace(static_cast<unsigned char>(c))) text.push_back(c);
  }
  if (text.empty()) throw ParseError("empty rational");
  if (auto slash = text.find('/'); slash != std::string::npos) {
    Rational a = parse(text.substr(0, slash));
    Rational b = parse(text.substr(slash + 1));
    if (b.num_ == 0) throw ParseError("rational '" + raw + "' divides by zero");
    return reduce(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
  }
  // Decimal with optional exponent, parsed exactly.
  std::size_t pos = 0;
  bool negative = false;
  if (text[pos] == '+' || text[pos] == '-') negative = text[pos++] == '-';
  __int128 mantissa = 0;
  int frac_digits = 0;
  bool seen_digit = false;
  bool in_frac = false;
  for (; pos < text.size(); ++pos) {
    char c = text[pos];
    if (c == '.') {
      if (in_frac) throw ParseError("malformed number '" + raw + "'");
      in_frac = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      mantissa = mantissa * 10 + (c - '0');
      if (mantissa > (static_cast<__int128>(1) << 100)) throw ParseError("number '" + raw + "' too precise");
      if (in_frac) ++frac_digits;
      seen_digit = true;
    } else {
      break;
    }
  }
  if (!seen_digit) throw ParseError("malformed number '" + raw + "'");
  int exponent = 0;
  if (pos < text.size()) {
    if (text[pos] != 'e' && text[pos] != 'E') throw ParseError("malformed number '" + raw + "'");
    try {
      std::size_t used = 0;
      exponent = std::stoi(text.substr(pos + 1), &used);
      if (pos + 1 + used != text.size()) throw ParseError("malformed number '" + raw + "'");
    } catch (const std::logic_error&) {
      throw ParseError("malformed number '" + raw + "'");
    }
  }
  exponent -= frac_digits;
  __int128 num = negative ? -mantissa : mantissa;
  __int128 den = 1;
  if (exponent > 30 || exponent < -30) throw ParseError("exponent out of range in '" + raw + "'");
  for (; exponent > 0; --exponent) num *= 10;
  for (; exponent < 0; ++exponent) den *= 10;
  return reduce(num, den);
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational Rational::operator+(const Rational& o) const {
  return reduce(static_cast<__int128>(num_) * o.den_ + static_cast<__int128>(o.num_) * den_,
                static_cast<__int128>(den_) * o.den_);
}

Rational Rational::operator*(const Rational& o) const {
  return reduce(static_cast<__int128>(num_) * o.num_, static_cast<__int128>(den_) * o.den_);
}

bool Rational::operator<(const Rational& o) const {
  return static_cast<__int128>(num_) * o.den_ < static_cast<__int128>(o.num_) * den_;
}

std::int64_t Rational::scale_ceil(std::int64_t value) const {
  return ceil_div(static_cast<__int128>(value) * num_, den_);
}

}  // namespace phaze
