// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Parameter-exchange strategies built on the transport:
//
//   AR     reference allreduce: gather to rank 0, sum there, broadcast.
//   ASA    alltoall of k slices, local sum of the owned slice, allgather.
//   ASA16  ASA with every transported slice narrowed to binary16; sums are
//          accumulated at the buffer's own precision.
//
// All ranks must call the same collectives in the same order. Each call
// carries a sequence number; a mismatch raises ProtocolViolation. Sums run
// in ascending source-rank order and AR and ASA are bit-identical.

#include <cstdint>
#include <string>
#include <vector>

#include "parexch/buffer.hpp"
#include "parexch/transport.hpp"

namespace parexch {

enum class ExchangeStrategy { kAR, kASA, kASA16 };

const char* strategy_name(ExchangeStrategy s);
ExchangeStrategy parse_strategy(const std::string& name);

template <typename T>
Buffer<T> allreduce_ref(Communicator& comm, const Buffer<T>& b);

// out[j] is slice `rank` of rank j's input; out[rank] is the local slice.
template <typename E>
std::vector<Slice<E>> alltoall(Communicator& comm, const std::vector<Slice<E>>& slices);

// Every rank receives all k slices in rank order.
template <typename E>
std::vector<Slice<E>> allgather(Communicator& comm, const Slice<E>& slice);

template <typename T>
Buffer<T> asa_allreduce(Communicator& comm, const Buffer<T>& b);

template <typename T>
Buffer<T> asa16_allreduce(Communicator& comm, const Buffer<T>& b);

template <typename T>
Buffer<T> allreduce(Communicator& comm, ExchangeStrategy strategy, const Buffer<T>& b);

// Linear broadcast from `root`.
template <typename T>
Buffer<T> broadcast(Communicator& comm, const Buffer<T>& b, int root = 0);

// Opaque per-rank blobs, returned in rank order.
std::vector<Bytes> allgather_bytes(Communicator& comm, const Bytes& mine);

struct TrafficReport {
  int rank = 0;
  std::uint64_t bytes_sent = 0;        // transport bytes, headers included
  std::uint64_t bytes_received = 0;
  std::uint64_t payload_sent = 0;      // collective element bytes only
  std::uint64_t payload_received = 0;
};

TrafficReport traffic_report(const Communicator& comm);

struct TrafficSummary {
  std::uint64_t max_rank_payload_sent = 0;
  // Payload a rank handles in both directions; for AR this peaks at the root.
  std::uint64_t max_rank_bytes = 0;
  std::uint64_t total_payload_sent = 0;
  std::uint64_t total_payload_received = 0;
};

TrafficSummary summarize(const std::vector<TrafficReport>& reports);

}  // namespace parexch
