// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "parexch/collectives.hpp"
#include "parexch/config.hpp"
#include "parexch/stats.hpp"

namespace parexch {

// Trains as configured. With rank == -1 every rank runs as a thread of this
// process; otherwise this process joins a TCP world as that rank. Writes
// <out>.rank<r>.csv (+ .summary.json) per local rank and one summary line
// per rank to `log`. Returns a process exit code; failures are reported to
// `err` with the failing rank.
int run_experiment(const ExperimentConfig& config, std::ostream& log, std::ostream& err);

// Same as above but throws, and returns the per-rank stats of local ranks.
std::vector<RunStats> run_experiment_stats(const ExperimentConfig& config);

struct BenchRow {
  ExchangeStrategy strategy = ExchangeStrategy::kASA;
  std::size_t params = 0;
  int workers = 1;
  int reps = 1;
  double mean_seconds = 0.0;     // slowest rank, per exchange
  std::uint64_t per_rank_bytes = 0;  // largest payload any rank sends, per exchange
  std::uint64_t rank0_bytes = 0;     // payload rank 0 sends plus receives, per exchange
};

std::string bench_header();
std::string bench_row_csv(const BenchRow& row);

BenchRow bench_exchange(std::size_t params, int workers, ExchangeStrategy strategy, int reps,
                        Backend backend = Backend::kInProc);

struct CheckReport {
  bool ok = true;
  std::string detail;
  std::uint64_t digest = 0;  // identical on every rank when ok
};

// Sizes exercised by check_collectives for a world of k ranks.
std::vector<std::size_t> check_sizes(int k);

// Rank j's input buffer of length n in the collective check.
std::vector<float> check_buffer(std::uint64_t seed, int j, std::size_t n);

// AR and ASA against a double-precision brute-force sum of every rank's
// seeded buffer, for each of check_sizes(k). The digest covers the results.
CheckReport check_collectives(Communicator& comm, std::uint64_t seed);

// A BSP run (f32, ASA, logistic) that compares weight hashes across ranks
// after every exchange. The digest chains every iteration's weight hash.
CheckReport check_lockstep(Communicator& comm, std::uint64_t seed, int iterations);

// Parameter counts of well-known networks.
std::optional<std::size_t> model_preset(const std::string& name);

}  // namespace parexch
