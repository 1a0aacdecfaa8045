// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parexch/error.hpp"
#include "parexch/half.hpp"
#include "parexch/kernels.hpp"

namespace parexch {

// Flat parameter (or gradient) vector. Length is fixed at construction and
// every element is finite.
template <typename T>
class Buffer {
 public:
  using value_type = T;

  Buffer() = default;
  explicit Buffer(std::size_t size) : values_(size, T{0}) {}
  explicit Buffer(std::vector<T> values) : values_(std::move(values)) { check_finite("construction"); }
  Buffer(std::initializer_list<T> values) : values_(values) { check_finite("construction"); }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> span() noexcept { return values_; }
  std::span<const T> span() const noexcept { return values_; }
  const std::vector<T>& values() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  void check_finite(const char* where) const {
    if (!kernels::active::all_finite(span())) {
      throw Error(Errc::kNonFinite, std::string("non-finite value after ") + where);
    }
  }

  friend bool operator==(const Buffer&, const Buffer&) = default;

 private:
  std::vector<T> values_;
};

using ParamBuffer = Buffer<float>;

class HalfBuffer {
 public:
  HalfBuffer() = default;
  explicit HalfBuffer(std::size_t size) : values_(size) {}
  explicit HalfBuffer(std::vector<Half> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  std::span<Half> span() noexcept { return values_; }
  std::span<const Half> span() const noexcept { return values_; }
  Half& operator[](std::size_t i) { return values_[i]; }
  const Half& operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const HalfBuffer&, const HalfBuffer&) = default;

 private:
  std::vector<Half> values_;
};

// One of k equal-length pieces of a buffer; the last is zero-padded.
template <typename T>
struct Slice {
  int owner_index = 0;
  std::vector<T> values;

  friend bool operator==(const Slice&, const Slice&) = default;
};

inline std::size_t slice_length(std::size_t total, int k) {
  const auto parts = static_cast<std::size_t>(k);
  return (total + parts - 1) / parts;
}

inline void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw Error(Errc::kLengthMismatch,
                std::string(op) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

// Narrowing with round-to-nearest-even; throws OverflowToInfinity if any
// element lands on infinity.
template <typename T>
HalfBuffer to_half(std::span<const T> values) {
  HalfBuffer out(values.size());
  if (!kernels::active::to_half(values, out.span())) {
    throw Error(Errc::kOverflowToInfinity, "value outside binary16 range");
  }
  return out;
}

template <typename T>
HalfBuffer to_half(const Buffer<T>& b) {
  return to_half(b.span());
}

template <typename T = float>
Buffer<T> from_half(const HalfBuffer& h) {
  Buffer<T> out(h.size());
  kernels::active::from_half(h.span(), out.span());
  return out;
}

template <typename T>
Buffer<T>& add_inplace(Buffer<T>& dst, const Buffer<T>& src) {
  require_same_length(dst.size(), src.size(), "add_inplace");
  kernels::active::add(dst.span(), src.span());
  return dst;
}

template <typename T>
Buffer<T>& scale_inplace(Buffer<T>& dst, T s) {
  kernels::active::scale(dst.span(), s);
  return dst;
}

// a - b
template <typename T>
Buffer<T> difference(const Buffer<T>& a, const Buffer<T>& b) {
  require_same_length(a.size(), b.size(), "difference");
  Buffer<T> out(a.size());
  kernels::active::sub(out.span(), a.span(), b.span());
  return out;
}

template <typename T>
std::vector<Slice<T>> partition(std::span<const T> values, int k) {
  if (k < 1) throw Error(Errc::kInvalidRank, "partition requires k >= 1");
  const std::size_t len = slice_length(values.size(), k);
  std::vector<Slice<T>> slices(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    auto& s = slices[static_cast<std::size_t>(j)];
    s.owner_index = j;
    s.values.assign(len, T{0});
    const std::size_t begin = static_cast<std::size_t>(j) * len;
    for (std::size_t i = 0; i < len && begin + i < values.size(); ++i) {
      s.values[i] = values[begin + i];
    }
  }
  return slices;
}

template <typename T>
std::vector<Slice<T>> partition(const Buffer<T>& b, int k) {
  return partition(b.span(), k);
}

// Concatenates slices in order and truncates to `total` elements.
template <typename T>
std::vector<T> unpartition_values(const std::vector<Slice<T>>& slices, std::size_t total) {
  std::vector<T> out;
  out.reserve(total);
  for (const auto& s : slices) {
    for (const T& v : s.values) {
      if (out.size() == total) return out;
      out.push_back(v);
    }
  }
  if (out.size() != total) {
    throw Error(Errc::kLengthMismatch, "unpartition: slices hold fewer than " + std::to_string(total));
  }
  return out;
}

template <typename T>
Buffer<T> unpartition(const std::vector<Slice<T>>& slices, std::size_t total) {
  return Buffer<T>(unpartition_values(slices, total));
}

}  // namespace parexch
