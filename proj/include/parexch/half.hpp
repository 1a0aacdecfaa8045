// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>

namespace parexch {

// IEEE-754 binary16 value held as its bit pattern.
struct Half {
  std::uint16_t bits = 0;

  friend bool operator==(Half, Half) = default;
};

inline constexpr std::uint16_t kHalfInfBits = 0x7c00;
inline constexpr float kHalfMax = 65504.0f;

inline bool is_half_inf_or_nan(Half h) { return (h.bits & 0x7c00) == 0x7c00; }

// Round-to-nearest-even narrowing. Magnitudes at or above 65520 produce
// infinity; callers that need an error check is_half_inf_or_nan().
inline Half half_from_float(float value) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t ax = x & 0x7fffffffu;
  if (ax >= 0x7f800000u) {
    return Half{static_cast<std::uint16_t>(sign | 0x7c00u | (ax > 0x7f800000u ? 0x200u : 0u))};
  }
  if (ax >= 0x477ff000u) {  // 65520: halfway to the next binade, ties go to inf
    return Half{static_cast<std::uint16_t>(sign | kHalfInfBits)};
  }
  if (ax < 0x38800000u) {  // below 2^-14: subnormal or zero
    // Scaling by 2^24 is exact here; nearbyint rounds ties to even.
    const float scaled = std::bit_cast<float>(ax) * 16777216.0f;
    const auto q = static_cast<std::uint16_t>(std::nearbyint(scaled));
    return Half{static_cast<std::uint16_t>(sign | q)};
  }
  const std::uint32_t mant = ax & 0x7fffffu;
  const std::uint32_t exp = (ax >> 23) - 127u + 15u;
  std::uint32_t h = (exp << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) {
    ++h;  // carry into the exponent is the correct result
  }
  return Half{static_cast<std::uint16_t>(sign | h)};
}

// Same rounding as half_from_float, directly from binary64.
inline Half half_from_double(double value) {
  const bool negative = std::signbit(value);
  const std::uint16_t sign = negative ? 0x8000u : 0u;
  const double a = std::fabs(value);
  if (std::isnan(a)) {
    return Half{static_cast<std::uint16_t>(sign | 0x7e00u)};
  }
  if (a >= 65520.0) {
    return Half{static_cast<std::uint16_t>(sign | kHalfInfBits)};
  }
  if (a < 0x1p-14) {
    const auto q = static_cast<std::uint16_t>(std::nearbyint(a * 0x1p24));
    return Half{static_cast<std::uint16_t>(sign | q)};
  }
  int e2 = 0;
  std::frexp(a, &e2);  // a = m * 2^e2, m in [0.5, 1)
  int exp = e2 - 1;
  auto q = static_cast<std::uint32_t>(std::nearbyint(std::ldexp(a, 10 - exp)));
  if (q == 2048u) {
    q = 1024u;
    ++exp;
  }
  if (exp > 15) {
    return Half{static_cast<std::uint16_t>(sign | kHalfInfBits)};
  }
  const auto bits = static_cast<std::uint32_t>(exp + 15) << 10 | (q - 1024u);
  return Half{static_cast<std::uint16_t>(sign | bits)};
}

// Exact widening.
inline float half_to_float(Half h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h.bits & 0x8000u) << 16;
  const std::uint32_t exp = (h.bits >> 10) & 0x1fu;
  const std::uint32_t mant = h.bits & 0x3ffu;
  if (exp == 0) {
    const float mag = static_cast<float>(mant) * 0x1p-24f;
    return sign ? -mag : mag;
  }
  if (exp == 31) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
  }
  return std::bit_cast<float>(sign | ((exp - 15u + 127u) << 23) | (mant << 13));
}

template <typename T>
inline Half half_from(T value) {
  if constexpr (std::is_same_v<T, float>) {
    return half_from_float(value);
  } else {
    return half_from_double(static_cast<double>(value));
  }
}

}  // namespace parexch
