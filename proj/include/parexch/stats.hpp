// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace parexch {

struct IterationRecord {
  std::int64_t iteration = 0;
  int epoch = 0;
  double loss = 0.0;
  double compute_seconds = 0.0;
  double exchange_seconds = 0.0;
  std::uint64_t bytes_sent = 0;
  // FNV-1a of the weight bytes after the exchange.
  std::uint64_t weights_hash = 0;
};

struct RunStats {
  int rank = 0;
  std::vector<IterationRecord> iterations;
  double val_loss = 0.0;
  double val_error = 0.0;
  double wall_seconds = 0.0;
  // Parameter-vector payloads this rank sent/received in EASGD exchanges.
  std::uint64_t param_messages_sent = 0;
  std::uint64_t param_messages_received = 0;
  // Final weights (the center variable on an EASGD server), as doubles.
  std::vector<double> final_weights;
};

std::uint64_t fnv1a(const void* data, std::size_t len);

// CSV: header `iter,epoch,loss,compute_s,exchange_s,bytes_sent`, one row per
// iteration, fixed number formats.
std::string stats_csv(const RunStats& stats);

// Single-line JSON object with the final metrics.
std::string stats_summary_json(const RunStats& stats);

// Writes `path` (CSV) and `path` + ".summary.json".
void emit_stats(const RunStats& stats, const std::string& path);

}  // namespace parexch
