#pragma once

#include <stdexcept>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace rulegame {

using BigInt = boost::multiprecision::cpp_int;

inline BigInt binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  BigInt result = 1;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return result;
}

/// Number of initial boards with exactly K pieces over C colors: C^K * binom(L,K).
inline BigInt count_initial_configs(int length, int pieces, int colors) {
  if (pieces < 0 || pieces > length || colors < 1)
    throw std::invalid_argument("need 0 <= K <= L and C >= 1");
  return boost::multiprecision::pow(BigInt(colors), static_cast<unsigned>(pieces)) *
         binomial(length, pieces);
}

/// L! orders times 2^(C*L) position/color interactions per order.
inline BigInt rule_space_upper_bound(int length, int colors) {
  if (length < 1 || colors < 1) throw std::invalid_argument("need L >= 1 and C >= 1");
  BigInt orders = 1;
  for (int i = 2; i <= length; ++i) orders *= i;
  return orders << (colors * length);
}

/// Scientific form with `digits` significant digits, e.g. "2.80e36".
inline std::string scientific(const BigInt& value, int digits = 3) {
  if (value < 0) return "-" + scientific(-value, digits);
  std::string dec = value.str();
  int exponent = static_cast<int>(dec.size()) - 1;
  std::string mantissa = dec.substr(0, static_cast<std::size_t>(digits));
  mantissa.resize(static_cast<std::size_t>(digits), '0');
  if (dec.size() > static_cast<std::size_t>(digits) && dec[static_cast<std::size_t>(digits)] >= '5') {
    int i = digits - 1;
    while (i >= 0 && mantissa[static_cast<std::size_t>(i)] == '9') mantissa[static_cast<std::size_t>(i--)] = '0';
    if (i >= 0) {
      ++mantissa[static_cast<std::size_t>(i)];
    } else {
      mantissa.insert(mantissa.begin(), '1');
      mantissa.pop_back();
      ++exponent;
    }
  }
  std::string out(1, mantissa[0]);
  if (digits > 1) out += "." + mantissa.substr(1);
  return out + "e" + std::to_string(exponent);
}

} // namespace rulegame
