// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Message-passing substrate: point-to-point send/recv with per-pair FIFO
// order, a barrier, and byte accounting. Two backends share one contract:
// in-process mailboxes and TCP (see tcp.hpp).

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parexch/error.hpp"

namespace parexch {

using Bytes = std::vector<std::uint8_t>;
using Millis = std::chrono::milliseconds;

inline constexpr Millis kDefaultTimeout{30000};

enum class Backend { kInProc, kTcp };

const char* backend_name(Backend b);
Backend parse_backend(const std::string& name);

// Incoming queues of one rank, one FIFO per sender.
class Mailbox {
 public:
  explicit Mailbox(int world_size);

  void push(int from, Bytes message);
  // Marks the sender as gone; queued messages are still delivered.
  void close_from(int from);

  Bytes pop(int from, Millis timeout);
  // Oldest queued message across all senders.
  std::pair<int, Bytes> pop_any(Millis timeout);

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::deque<std::pair<std::uint64_t, Bytes>>> queues_;
  std::vector<bool> closed_;
  std::uint64_t arrivals_ = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;
  virtual void deliver(int peer, std::span<const std::uint8_t> payload) = 0;
  virtual Mailbox& inbox() = 0;
  // Stops sending; peers observe PeerClosed once they drain our messages.
  virtual void shutdown() = 0;
};

// k connected in-process transports, index == rank.
std::vector<std::unique_ptr<Transport>> make_inproc_world(int world_size);

struct PeerCounters {
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
};

// Element bytes moved by collectives, excluding frame headers.
struct PayloadCounters {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
};

// Handle owned by exactly one rank context.
class Communicator {
 public:
  Communicator(std::unique_ptr<Transport> transport, Backend backend, Millis timeout = kDefaultTimeout);
  ~Communicator();

  Communicator(const Communicator&) = delete;
  Communicator& operator=(const Communicator&) = delete;

  int rank() const noexcept { return rank_; }
  int size() const noexcept { return size_; }
  Backend backend() const noexcept { return backend_; }

  void set_timeout(Millis timeout) noexcept { timeout_ = timeout; }
  Millis timeout() const noexcept { return timeout_; }

  void send(int peer, std::span<const std::uint8_t> payload);
  Bytes recv(int peer);
  // Next message from whichever peer delivers first.
  std::pair<int, Bytes> recv_any();
  // Paired exchange with one peer. Sends never block on the receiver.
  Bytes sendrecv(int peer, std::span<const std::uint8_t> out);

  // Central pattern: every rank reports to rank 0, rank 0 releases everyone.
  // Exactly 2(k-1) messages per call across the world.
  void barrier();

  const PeerCounters& counters(int peer) const { return counters_.at(static_cast<std::size_t>(peer)); }
  PeerCounters totals() const;
  PayloadCounters& payload() noexcept { return payload_; }
  const PayloadCounters& payload() const noexcept { return payload_; }
  void reset_counters();

  // Collective call sequence number; every rank advances it in lockstep.
  std::uint32_t next_sequence() noexcept { return sequence_++; }

  void shutdown();

 private:
  void check_peer(int peer, const char* op) const;

  std::unique_ptr<Transport> transport_;
  Backend backend_;
  Millis timeout_;
  int rank_;
  int size_;
  std::vector<PeerCounters> counters_;
  PayloadCounters payload_;
  std::uint32_t sequence_ = 0;
  bool shut_ = false;
};

// Collective frame header: u32-LE sequence, u8 collective id, u8 dtype,
// u32-LE element count, then the payload.
enum class CollectiveId : std::uint8_t {
  kAllreduceGather = 1,
  kAllreduceBroadcast = 2,
  kAlltoall = 3,
  kAllgather = 4,
  kBarrier = 5,
  kBroadcast = 6,
  kAllgatherBytes = 7,
};

enum class DType : std::uint8_t { kF32 = 0, kF16 = 1, kF64 = 2, kU8 = 3 };

std::size_t dtype_size(DType t);

struct CollectiveHeader {
  std::uint32_t sequence = 0;
  CollectiveId id = CollectiveId::kBarrier;
  DType dtype = DType::kF32;
  std::uint32_t count = 0;

  static constexpr std::size_t kSize = 10;
};

Bytes encode_frame(const CollectiveHeader& h, std::span<const std::uint8_t> payload);
// Validates sequence and id against `expect`; returns header and payload view.
std::pair<CollectiveHeader, std::span<const std::uint8_t>> decode_frame(const Bytes& frame,
                                                                       const CollectiveHeader& expect);

// Trainer <-> loader control channel messages.
struct ControlMessage {
  enum class Kind : std::uint8_t { kMode = 0, kFilename = 1, kNotify = 2 };
  enum class Mode : std::uint8_t { kTrain = 0, kVal = 1, kStop = 2 };

  Kind kind = Kind::kMode;
  Mode mode = Mode::kStop;
  // Filename for kFilename; error text for kNotify (empty means success).
  std::string text;

  static ControlMessage mode_message(Mode m) { return {Kind::kMode, m, {}}; }
  static ControlMessage filename(std::string name) { return {Kind::kFilename, Mode::kStop, std::move(name)}; }
  static ControlMessage notify(std::string error = {}) { return {Kind::kNotify, Mode::kStop, std::move(error)}; }

  Bytes encode() const;
  static ControlMessage decode(const Bytes& bytes);

  friend bool operator==(const ControlMessage&, const ControlMessage&) = default;
};

// Runs `entry` on k rank contexts connected by `backend`, waits for all of
// them, and rethrows the first failure as WorkerPanic.
void run_world(int world_size, Backend backend, const std::function<void(Communicator&)>& entry,
               Millis timeout = kDefaultTimeout);

}  // namespace parexch

namespace parexch {

// run_world that collects one result per rank, indexed by rank.
template <typename Result>
std::vector<Result> spawn_world(int world_size, Backend backend,
                                const std::function<Result(Communicator&)>& entry,
                                Millis timeout = kDefaultTimeout) {
  std::vector<Result> results(static_cast<std::size_t>(world_size < 1 ? 0 : world_size));
  run_world(
      world_size, backend,
      [&](Communicator& comm) { results[static_cast<std::size_t>(comm.rank())] = entry(comm); },
      timeout);
  return results;
}

}  // namespace parexch
