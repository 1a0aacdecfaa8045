// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Elementwise kernels behind the buffer operations. The serial namespace is
// the reference; the omp namespace splits the same loops across threads.
// Both variants produce bit-identical output.

#include <cmath>
#include <cstddef>
#include <span>

#include "parexch/half.hpp"

namespace parexch::kernels {

// Below this length the omp variants stay on the calling thread.
inline constexpr std::ptrdiff_t kParallelThreshold = 1 << 15;

namespace serial {

template <typename T>
void add(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void sub(std::span<T> dst, std::span<const T> a, std::span<const T> b) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a[i] - b[i];
}

template <typename T>
void scale(std::span<T> dst, T s) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= s;
}

// dst += s * x
template <typename T>
void axpy(std::span<T> dst, T s, std::span<const T> x) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * x[i];
}

// Returns false if any element narrowed to infinity or NaN.
template <typename T>
bool to_half(std::span<const T> src, std::span<Half> dst) {
  bool ok = true;
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = half_from(src[i]);
    ok = ok && !is_half_inf_or_nan(dst[i]);
  }
  return ok;
}

template <typename T>
void from_half(std::span<const Half> src, std::span<T> dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(half_to_float(src[i]));
}

template <typename T>
bool all_finite(std::span<const T> v) {
  for (const T x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace serial

namespace omp {

template <typename T>
void add(std::span<T> dst, std::span<const T> src) {
  const auto n = static_cast<std::ptrdiff_t>(dst.size());
  T* d = dst.data();
  const T* s = src.data();
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
void sub(std::span<T> dst, std::span<const T> a, std::span<const T> b) {
  const auto n = static_cast<std::ptrdiff_t>(dst.size());
  T* d = dst.data();
  const T* pa = a.data();
  const T* pb = b.data();
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = pa[i] - pb[i];
}

template <typename T>
void scale(std::span<T> dst, T s) {
  const auto n = static_cast<std::ptrdiff_t>(dst.size());
  T* d = dst.data();
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] *= s;
}

template <typename T>
void axpy(std::span<T> dst, T s, std::span<const T> x) {
  const auto n = static_cast<std::ptrdiff_t>(dst.size());
  T* d = dst.data();
  const T* px = x.data();
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] += s * px[i];
}

template <typename T>
bool to_half(std::span<const T> src, std::span<Half> dst) {
  const auto n = static_cast<std::ptrdiff_t>(src.size());
  const T* s = src.data();
  Half* d = dst.data();
  int bad = 0;
#pragma omp parallel for reduction(| : bad) if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    d[i] = half_from(s[i]);
    bad |= is_half_inf_or_nan(d[i]) ? 1 : 0;
  }
  return bad == 0;
}

template <typename T>
void from_half(std::span<const Half> src, std::span<T> dst) {
  const auto n = static_cast<std::ptrdiff_t>(src.size());
  const Half* s = src.data();
  T* d = dst.data();
#pragma omp parallel for if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = static_cast<T>(half_to_float(s[i]));
}

template <typename T>
bool all_finite(std::span<const T> v) {
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  const T* p = v.data();
  int bad = 0;
#pragma omp parallel for reduction(| : bad) if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) bad |= std::isfinite(p[i]) ? 0 : 1;
  return bad == 0;
}

}  // namespace omp

// Dispatch used by the library.
#ifdef PAREXCH_HAVE_OPENMP
namespace active = omp;
#else
namespace active = serial;
#endif

}  // namespace parexch::kernels
