// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "parexch/buffer.hpp"
#include "parexch/half.hpp"
#include "parexch/kernels.hpp"
#include "parexch/random.hpp"

using namespace parexch;

namespace {

// Exact value of a binary16 pattern, decoded from the format definition.
double decode_half_bits(std::uint16_t bits) {
  const int e = (bits >> 10) & 0x1f;
  const int m = bits & 0x3ff;
  const double sign = (bits & 0x8000) ? -1.0 : 1.0;
  if (e == 0x1f) return m ? std::numeric_limits<double>::quiet_NaN() : sign * INFINITY;
  if (e == 0) return sign * std::ldexp(m, -24);
  return sign * std::ldexp(1024 + m, e - 25);
}

// Nearest finite binary16 by exhaustive search, ties to the even pattern;
// magnitudes at or past the rounding boundary above 65504 become infinity.
std::uint16_t nearest_half(double x) {
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::fabs(x);
  if (a >= 65520.0) return sign | 0x7c00;
  std::uint16_t best = 0;
  double best_err = INFINITY;
  for (std::uint16_t b = 0; b <= 0x7bff; ++b) {
    const double err = std::fabs(decode_half_bits(b) - a);
    if (err < best_err || (err == best_err && (b & 1) == 0)) {
      best = b;
      best_err = err;
    }
  }
  return sign | best;
}

}  // namespace

TEST_CASE("half decode matches the format for every pattern") {
  for (std::uint32_t b = 0; b <= 0xffff; ++b) {
    const double expect = decode_half_bits(static_cast<std::uint16_t>(b));
    const float got = half_to_float(Half{static_cast<std::uint16_t>(b)});
    if (std::isnan(expect)) {
      CHECK(std::isnan(got));
    } else {
      REQUIRE(static_cast<double>(got) == expect);
    }
  }
}

TEST_CASE("half narrowing rounds to nearest even") {
  Rng rng(11);
  std::vector<double> probes = {0.0, -0.0, 1.0, -1.0, 65504.0, 65519.0, 65520.0, -65520.0, 1e-8, 3e-8, 5.9604644775390625e-8,
                                2.98023223876953125e-8, 1.00048828125, 1.000732421875, 2049.0, 2051.0, 0.1, 1e5};
  for (int i = 0; i < 400; ++i) probes.push_back(rng.uniform(-2.0, 2.0));
  for (int i = 0; i < 100; ++i) probes.push_back(std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(40)) - 24));
  for (const double p : probes) {
    const std::uint16_t want = nearest_half(p);
    CHECK_MESSAGE(half_from_double(p).bits == want, "value " << p);
    const auto pf = static_cast<float>(p);
    CHECK_MESSAGE(half_from_float(pf).bits == nearest_half(pf), "value " << pf);
  }
}

TEST_CASE("half narrowing of ties between adjacent halves") {
  for (std::uint16_t b = 0; b < 0x7bff; b += 37) {
    const double mid = 0.5 * (decode_half_bits(b) + decode_half_bits(static_cast<std::uint16_t>(b + 1)));
    const std::uint16_t even = (b & 1) == 0 ? b : static_cast<std::uint16_t>(b + 1);
    CHECK(half_from_double(mid).bits == even);
    CHECK(half_from_float(static_cast<float>(mid)).bits == even);
  }
}

TEST_CASE("to_half throws on overflow and passes the max finite value") {
  const Buffer<float> ok{65504.0f, -65504.0f, 0.5f};
  CHECK(from_half<float>(to_half(ok)) == ok);
  const Buffer<float> big{1.0f, 70000.0f};
  try {
    (void)to_half(big);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kOverflowToInfinity);
  }
}

TEST_CASE("buffer construction rejects non-finite values") {
  CHECK_THROWS_AS(Buffer<float>({1.0f, NAN}), Error);
  try {
    Buffer<double> b(std::vector<double>{INFINITY});
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kNonFinite);
  }
  CHECK(Buffer<float>(std::size_t{3}).size() == 3);
}

TEST_CASE("elementwise ops check lengths") {
  Buffer<float> a{1, 2, 3};
  const Buffer<float> b{1, 1};
  try {
    add_inplace(a, b);
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kLengthMismatch);
  }
  CHECK_THROWS_AS((void)difference(a, b), Error);
  const Buffer<float> c{0.5f, 0.5f, 0.5f};
  add_inplace(a, c);
  CHECK(a == Buffer<float>{1.5f, 2.5f, 3.5f});
  CHECK(difference(a, c) == Buffer<float>{1, 2, 3});
  scale_inplace(a, 2.0f);
  CHECK(a == Buffer<float>{3, 5, 7});
}

TEST_CASE("partition pads the tail and unpartition inverts it") {
  for (int k = 1; k <= 9; ++k) {
    for (std::size_t n : {std::size_t{1}, std::size_t{5}, std::size_t{16}, std::size_t{17}, std::size_t{100}}) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i) + 0.25;
      const Buffer<double> b(v);
      const auto slices = partition(b, k);
      REQUIRE(slices.size() == static_cast<std::size_t>(k));
      const std::size_t len = (n + static_cast<std::size_t>(k) - 1) / static_cast<std::size_t>(k);
      for (int j = 0; j < k; ++j) {
        CHECK(slices[static_cast<std::size_t>(j)].owner_index == j);
        CHECK(slices[static_cast<std::size_t>(j)].values.size() == len);
      }
      CHECK(unpartition(slices, n) == b);
    }
  }
  CHECK_THROWS_AS(partition(Buffer<float>{1.0f}, 0), Error);
  const auto s = partition(Buffer<float>{1.0f, 2.0f}, 2);
  CHECK_THROWS_AS(unpartition(s, 3), Error);
}

TEST_CASE("omp kernels are bit-identical to serial kernels") {
  const std::size_t n = (1 << 16) + 7;
  Rng rng(5);
  std::vector<float> a(n), b(n);
  for (auto& x : a) x = static_cast<float>(rng.uniform(-100.0, 100.0));
  for (auto& x : b) x = static_cast<float>(rng.uniform(-100.0, 100.0));

  auto s1 = a, o1 = a;
  kernels::serial::add<float>(s1, b);
  kernels::omp::add<float>(o1, b);
  CHECK(std::memcmp(s1.data(), o1.data(), n * sizeof(float)) == 0);

  std::vector<float> s2(n), o2(n);
  kernels::serial::sub<float>(s2, a, b);
  kernels::omp::sub<float>(o2, a, b);
  CHECK(s2 == o2);

  auto s3 = a, o3 = a;
  kernels::serial::axpy<float>(s3, 0.3f, b);
  kernels::omp::axpy<float>(o3, 0.3f, b);
  CHECK(s3 == o3);
  kernels::serial::scale<float>(s3, 1.7f);
  kernels::omp::scale<float>(o3, 1.7f);
  CHECK(s3 == o3);

  std::vector<Half> hs(n), ho(n);
  CHECK(kernels::serial::to_half<float>(a, hs));
  CHECK(kernels::omp::to_half<float>(a, ho));
  CHECK(std::equal(hs.begin(), hs.end(), ho.begin(), [](Half x, Half y) { return x.bits == y.bits; }));
  std::vector<float> fs(n), fo(n);
  kernels::serial::from_half<float>(hs, fs);
  kernels::omp::from_half<float>(hs, fo);
  CHECK(fs == fo);

  a[n - 3] = 1e6f;
  CHECK_FALSE(kernels::omp::to_half<float>(a, ho));
  CHECK_FALSE(kernels::serial::to_half<float>(a, hs));
  a[n - 3] = NAN;
  CHECK_FALSE(kernels::serial::all_finite<float>(a));
  CHECK_FALSE(kernels::omp::all_finite<float>(a));
}

TEST_CASE("derived seeds are deterministic and distinct") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  Rng a(9), b(9);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng c(3);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = c.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += c.normal();
  }
  CHECK(std::fabs(sum / 20000.0) < 0.05);
}
