// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <vector>

#include "parexch/collectives.hpp"
#include "parexch/random.hpp"

using namespace parexch;

namespace {

std::vector<float> seeded(std::uint64_t seed, int rank, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rank)));
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

std::vector<double> brute_sum(std::uint64_t seed, int k, std::size_t n) {
  std::vector<double> s(n, 0.0);
  for (int j = 0; j < k; ++j) {
    const auto v = seeded(seed, j, n);
    for (std::size_t i = 0; i < n; ++i) s[i] += v[i];
  }
  return s;
}

}  // namespace

TEST_CASE("AR and ASA agree with a brute-force sum and with each other") {
  for (int k : {1, 2, 3, 5, 8}) {
    for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{64}, std::size_t{1001}}) {
      const auto exact = brute_sum(99, k, n);
      run_world(k, Backend::kInProc, [&](Communicator& comm) {
        const Buffer<float> mine(seeded(99, comm.rank(), n));
        const auto ar = allreduce_ref(comm, mine);
        const auto asa = asa_allreduce(comm, mine);
        REQUIRE(ar.size() == n);
        CHECK(std::memcmp(ar.data(), asa.data(), n * sizeof(float)) == 0);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(std::fabs(asa[i] - exact[i]) <= 1e-6 * k);
      });
    }
  }
}

TEST_CASE("double buffers reduce in double") {
  run_world(3, Backend::kInProc, [](Communicator& comm) {
    const Buffer<double> b{1e-17 * (comm.rank() + 1), 1.0};
    const auto s = allreduce(comm, ExchangeStrategy::kASA, b);
    CHECK(s[0] == doctest::Approx(6e-17).epsilon(1e-12));
    CHECK(s[1] == 3.0);
  });
}

TEST_CASE("alltoall delivers slice j of every rank to rank j") {
  run_world(4, Backend::kInProc, [](Communicator& comm) {
    std::vector<Slice<float>> out(4);
    for (int j = 0; j < 4; ++j) out[static_cast<std::size_t>(j)] = {j, {static_cast<float>(10 * comm.rank() + j)}};
    const auto in = alltoall<float>(comm, out);
    REQUIRE(in.size() == 4);
    for (int src = 0; src < 4; ++src) {
      CHECK(in[static_cast<std::size_t>(src)].values[0] == static_cast<float>(10 * src + comm.rank()));
    }
  });
}

TEST_CASE("allgather, broadcast and allgather_bytes") {
  run_world(3, Backend::kInProc, [](Communicator& comm) {
    const auto all = allgather<float>(comm, Slice<float>{comm.rank(), {static_cast<float>(comm.rank()), 1.0f}});
    for (int r = 0; r < 3; ++r) CHECK(all[static_cast<std::size_t>(r)].values[0] == static_cast<float>(r));

    const Buffer<float> mine{static_cast<float>(comm.rank())};
    CHECK(broadcast(comm, mine, 2)[0] == 2.0f);

    const auto blobs = allgather_bytes(comm, Bytes(static_cast<std::size_t>(comm.rank()), 7));
    for (int r = 0; r < 3; ++r) CHECK(blobs[static_cast<std::size_t>(r)].size() == static_cast<std::size_t>(r));
  });
}

TEST_CASE("mismatched buffer lengths raise LengthMismatch") {
  for (const auto s : {ExchangeStrategy::kAR, ExchangeStrategy::kASA, ExchangeStrategy::kASA16}) {
    try {
      run_world(2, Backend::kInProc, [&](Communicator& comm) {
        const Buffer<float> b(static_cast<std::size_t>(10 + comm.rank() * 10));
        (void)allreduce(comm, s, b);
      }, std::chrono::milliseconds(2000));
      FAIL("expected failure");
    } catch (const WorkerPanic& e) {
      CHECK(std::string(e.what()).find("LengthMismatch") != std::string::npos);
    }
  }
}

TEST_CASE("payload accounting follows the counting formulas") {
  for (int k : {2, 3, 4, 7}) {
    for (std::size_t p : {std::size_t{1}, std::size_t{10}, std::size_t{1024}, std::size_t{1025}}) {
      const std::uint64_t L = (p + static_cast<std::size_t>(k) - 1) / static_cast<std::size_t>(k);
      const auto ku = static_cast<std::uint64_t>(k);
      for (const auto s : {ExchangeStrategy::kAR, ExchangeStrategy::kASA, ExchangeStrategy::kASA16}) {
        std::mutex mu;
        std::vector<TrafficReport> reports(static_cast<std::size_t>(k));
        run_world(k, Backend::kInProc, [&](Communicator& comm) {
          const Buffer<float> b(seeded(1, comm.rank(), p));
          (void)allreduce(comm, s, b);
          std::lock_guard lock(mu);
          reports[static_cast<std::size_t>(comm.rank())] = traffic_report(comm);
        });
        for (const auto& r : reports) {
          if (s == ExchangeStrategy::kAR) {
            const std::uint64_t expect = r.rank == 0 ? (ku - 1) * p * 4 : p * 4;
            CHECK(r.payload_sent == expect);
            CHECK(r.payload_received == expect);
          } else {
            const std::uint64_t width = s == ExchangeStrategy::kASA ? 4 : 2;
            CHECK(r.payload_sent == 2 * (ku - 1) * L * width);
            CHECK(r.payload_received == 2 * (ku - 1) * L * width);
          }
          CHECK(r.bytes_sent > r.payload_sent);
        }
        const TrafficSummary sum = summarize(reports);
        if (s == ExchangeStrategy::kAR) CHECK(sum.max_rank_bytes == 2 * (ku - 1) * p * 4);
      }
    }
  }
}

TEST_CASE("ASA16 stays within the binary16 error bound and agrees across ranks") {
  for (int k = 2; k <= 8; ++k) {
    const std::size_t n = 513;
    const auto exact = brute_sum(static_cast<std::uint64_t>(k) * 31, k, n);
    std::vector<std::vector<float>> results(static_cast<std::size_t>(k));
    run_world(k, Backend::kInProc, [&](Communicator& comm) {
      const Buffer<float> b(seeded(static_cast<std::uint64_t>(k) * 31, comm.rank(), n));
      const auto s = asa16_allreduce(comm, b);
      results[static_cast<std::size_t>(comm.rank())] = s.values();
    });
    const double bound = k * std::ldexp(1.0, -11) + 1e-6;
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::fabs(results[0][i] - exact[i]) <= bound);
    for (int r = 1; r < k; ++r) CHECK(results[static_cast<std::size_t>(r)] == results[0]);
  }
}

TEST_CASE("ASA16 raises OverflowToInfinity on out-of-range input") {
  try {
    run_world(2, Backend::kInProc, [](Communicator& comm) {
      const Buffer<float> b{1.0f, comm.rank() == 1 ? 1e6f : 0.0f};
      (void)asa16_allreduce(comm, b);
    }, std::chrono::milliseconds(2000));
    FAIL("expected overflow");
  } catch (const WorkerPanic& e) {
    CHECK(e.rank() == 1);
    CHECK(std::string(e.what()).find("OverflowToInfinity") != std::string::npos);
  }
}

TEST_CASE("a single rank reduces to the identity without traffic") {
  run_world(1, Backend::kInProc, [](Communicator& comm) {
    const Buffer<float> b{0.1f, 0.2f, 0.3f};
    for (const auto s : {ExchangeStrategy::kAR, ExchangeStrategy::kASA, ExchangeStrategy::kASA16}) {
      CHECK(allreduce(comm, s, b) == b);
    }
    CHECK(comm.totals().bytes_sent == 0);
  });
}

TEST_CASE("strategy names round-trip") {
  for (const auto s : {ExchangeStrategy::kAR, ExchangeStrategy::kASA, ExchangeStrategy::kASA16}) {
    CHECK(parse_strategy(strategy_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("ring"), Error);
}
