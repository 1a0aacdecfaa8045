// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/stats.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "parexch/error.hpp"

namespace parexch {

std::uint64_t fnv1a(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string stats_csv(const RunStats& stats) {
  std::string out = "iter,epoch,loss,compute_s,exchange_s,bytes_sent\n";
  char line[256];
  for (const auto& r : stats.iterations) {
    std::snprintf(line, sizeof(line), "%lld,%d,%.9g,%.6f,%.6f,%llu\n", static_cast<long long>(r.iteration), r.epoch,
                  r.loss, r.compute_seconds, r.exchange_seconds, static_cast<unsigned long long>(r.bytes_sent));
    out += line;
  }
  return out;
}

std::string stats_summary_json(const RunStats& stats) {
  std::uint64_t bytes = 0;
  for (const auto& r : stats.iterations) bytes += r.bytes_sent;
  nlohmann::ordered_json j;
  j["rank"] = stats.rank;
  j["iterations"] = stats.iterations.size();
  j["final_loss"] = stats.iterations.empty() ? 0.0 : stats.iterations.back().loss;
  j["val_loss"] = stats.val_loss;
  j["val_error"] = stats.val_error;
  j["wall_seconds"] = stats.wall_seconds;
  j["bytes_sent"] = bytes;
  j["param_messages_sent"] = stats.param_messages_sent;
  j["param_messages_received"] = stats.param_messages_received;
  return j.dump();
}

void emit_stats(const RunStats& stats, const std::string& path) {
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw Error(Errc::kIo, "cannot write " + path);
  csv << stats_csv(stats);
  std::ofstream summary(path + ".summary.json", std::ios::binary);
  if (!summary) throw Error(Errc::kIo, "cannot write " + path + ".summary.json");
  summary << stats_summary_json(stats) << '\n';
}

}  // namespace parexch
