// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/transport.hpp"

#include <bit>
#include <cstring>
#include <exception>
#include <thread>

#include "parexch/tcp.hpp"

namespace parexch {

static_assert(std::endian::native == std::endian::little, "wire formats assume a little-endian host");

const char* backend_name(Backend b) { return b == Backend::kTcp ? "tcp" : "inproc"; }

Backend parse_backend(const std::string& name) {
  if (name == "inproc") return Backend::kInProc;
  if (name == "tcp") return Backend::kTcp;
  throw Error(Errc::kConfig, "unknown backend '" + name + "'");
}

// ---- Mailbox ----

Mailbox::Mailbox(int world_size)
    : queues_(static_cast<std::size_t>(world_size)), closed_(static_cast<std::size_t>(world_size), false) {}

void Mailbox::push(int from, Bytes message) {
  {
    std::lock_guard lock(mu_);
    queues_[static_cast<std::size_t>(from)].emplace_back(arrivals_++, std::move(message));
  }
  cv_.notify_all();
}

void Mailbox::close_from(int from) {
  {
    std::lock_guard lock(mu_);
    closed_[static_cast<std::size_t>(from)] = true;
  }
  cv_.notify_all();
}

Bytes Mailbox::pop(int from, Millis timeout) {
  const auto idx = static_cast<std::size_t>(from);
  std::unique_lock lock(mu_);
  const bool ready =
      cv_.wait_for(lock, timeout, [&] { return !queues_[idx].empty() || closed_[idx]; });
  if (!ready) {
    throw Error(Errc::kTimeout, "no message from rank " + std::to_string(from));
  }
  if (queues_[idx].empty()) {
    throw Error(Errc::kPeerClosed, "rank " + std::to_string(from) + " closed");
  }
  Bytes out = std::move(queues_[idx].front().second);
  queues_[idx].pop_front();
  return out;
}

std::pair<int, Bytes> Mailbox::pop_any(Millis timeout) {
  std::unique_lock lock(mu_);
  int chosen = -1;
  auto ready = [&] {
    chosen = -1;
    std::uint64_t oldest = ~std::uint64_t{0};
    bool any_open = false;
    for (std::size_t i = 0; i < queues_.size(); ++i) {
      if (!queues_[i].empty() && queues_[i].front().first < oldest) {
        oldest = queues_[i].front().first;
        chosen = static_cast<int>(i);
      }
      any_open = any_open || !closed_[i];
    }
    return chosen >= 0 || !any_open;
  };
  if (!cv_.wait_for(lock, timeout, ready)) {
    throw Error(Errc::kTimeout, "no message from any rank");
  }
  if (chosen < 0) {
    throw Error(Errc::kPeerClosed, "all peers closed");
  }
  auto& q = queues_[static_cast<std::size_t>(chosen)];
  Bytes out = std::move(q.front().second);
  q.pop_front();
  return {chosen, std::move(out)};
}

// ---- in-process backend ----

namespace {

struct InProcShared {
  explicit InProcShared(int k) {
    for (int i = 0; i < k; ++i) boxes.push_back(std::make_unique<Mailbox>(k));
    // Nobody sends to themselves.
    for (int i = 0; i < k; ++i) boxes[static_cast<std::size_t>(i)]->close_from(i);
  }
  std::vector<std::unique_ptr<Mailbox>> boxes;
};

class InProcTransport final : public Transport {
 public:
  InProcTransport(int rank, std::shared_ptr<InProcShared> shared) : rank_(rank), shared_(std::move(shared)) {}

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(shared_->boxes.size()); }

  void deliver(int peer, std::span<const std::uint8_t> payload) override {
    shared_->boxes[static_cast<std::size_t>(peer)]->push(rank_, Bytes(payload.begin(), payload.end()));
  }

  Mailbox& inbox() override { return *shared_->boxes[static_cast<std::size_t>(rank_)]; }

  void shutdown() override {
    for (int peer = 0; peer < size(); ++peer) {
      if (peer != rank_) shared_->boxes[static_cast<std::size_t>(peer)]->close_from(rank_);
    }
  }

 private:
  int rank_;
  std::shared_ptr<InProcShared> shared_;
};

}  // namespace

std::vector<std::unique_ptr<Transport>> make_inproc_world(int world_size) {
  if (world_size < 1) throw Error(Errc::kInvalidRank, "world size must be >= 1");
  auto shared = std::make_shared<InProcShared>(world_size);
  std::vector<std::unique_ptr<Transport>> out;
  for (int r = 0; r < world_size; ++r) out.push_back(std::make_unique<InProcTransport>(r, shared));
  return out;
}

// ---- Communicator ----

Communicator::Communicator(std::unique_ptr<Transport> transport, Backend backend, Millis timeout)
    : transport_(std::move(transport)),
      backend_(backend),
      timeout_(timeout),
      rank_(transport_->rank()),
      size_(transport_->size()),
      counters_(static_cast<std::size_t>(size_)) {}

Communicator::~Communicator() { shutdown(); }

void Communicator::shutdown() {
  if (!shut_) {
    shut_ = true;
    transport_->shutdown();
  }
}

void Communicator::check_peer(int peer, const char* op) const {
  if (peer < 0 || peer >= size_) {
    throw Error(Errc::kInvalidRank, std::string(op) + ": rank " + std::to_string(peer) + " outside world of " +
                                        std::to_string(size_));
  }
  if (peer == rank_) {
    throw Error(Errc::kInvalidRank, std::string(op) + ": peer is self");
  }
}

void Communicator::send(int peer, std::span<const std::uint8_t> payload) {
  check_peer(peer, "send");
  transport_->deliver(peer, payload);
  auto& c = counters_[static_cast<std::size_t>(peer)];
  c.bytes_sent += payload.size();
  c.messages_sent += 1;
}

Bytes Communicator::recv(int peer) {
  check_peer(peer, "recv");
  Bytes out = transport_->inbox().pop(peer, timeout_);
  auto& c = counters_[static_cast<std::size_t>(peer)];
  c.bytes_received += out.size();
  c.messages_received += 1;
  return out;
}

std::pair<int, Bytes> Communicator::recv_any() {
  auto [peer, out] = transport_->inbox().pop_any(timeout_);
  auto& c = counters_[static_cast<std::size_t>(peer)];
  c.bytes_received += out.size();
  c.messages_received += 1;
  return {peer, std::move(out)};
}

Bytes Communicator::sendrecv(int peer, std::span<const std::uint8_t> out) {
  check_peer(peer, "sendrecv");
  send(peer, out);
  return recv(peer);
}

void Communicator::barrier() {
  const std::uint32_t seq = next_sequence();
  if (size_ == 1) return;
  const CollectiveHeader h{seq, CollectiveId::kBarrier, DType::kU8, 0};
  const Bytes frame = encode_frame(h, {});
  if (rank_ == 0) {
    for (int r = 1; r < size_; ++r) decode_frame(recv(r), h);
    for (int r = 1; r < size_; ++r) send(r, frame);
  } else {
    send(0, frame);
    decode_frame(recv(0), h);
  }
}

PeerCounters Communicator::totals() const {
  PeerCounters t;
  for (const auto& c : counters_) {
    t.bytes_sent += c.bytes_sent;
    t.bytes_received += c.bytes_received;
    t.messages_sent += c.messages_sent;
    t.messages_received += c.messages_received;
  }
  return t;
}

void Communicator::reset_counters() {
  for (auto& c : counters_) c = PeerCounters{};
  payload_ = PayloadCounters{};
}

// ---- collective frames ----

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF16: return 2;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  throw Error(Errc::kProtocolViolation, "unknown dtype");
}

Bytes encode_frame(const CollectiveHeader& h, std::span<const std::uint8_t> payload) {
  Bytes out(CollectiveHeader::kSize + payload.size());
  std::memcpy(out.data(), &h.sequence, 4);
  out[4] = static_cast<std::uint8_t>(h.id);
  out[5] = static_cast<std::uint8_t>(h.dtype);
  std::memcpy(out.data() + 6, &h.count, 4);
  if (!payload.empty()) std::memcpy(out.data() + CollectiveHeader::kSize, payload.data(), payload.size());
  return out;
}

std::pair<CollectiveHeader, std::span<const std::uint8_t>> decode_frame(const Bytes& frame,
                                                                       const CollectiveHeader& expect) {
  if (frame.size() < CollectiveHeader::kSize) {
    throw Error(Errc::kProtocolViolation, "collective frame shorter than header");
  }
  CollectiveHeader h;
  std::memcpy(&h.sequence, frame.data(), 4);
  h.id = static_cast<CollectiveId>(frame[4]);
  h.dtype = static_cast<DType>(frame[5]);
  std::memcpy(&h.count, frame.data() + 6, 4);
  if (h.sequence != expect.sequence || h.id != expect.id) {
    throw Error(Errc::kProtocolViolation,
                "collective mismatch: got seq " + std::to_string(h.sequence) + " id " +
                    std::to_string(static_cast<int>(h.id)) + ", expected seq " + std::to_string(expect.sequence) +
                    " id " + std::to_string(static_cast<int>(expect.id)));
  }
  if (h.dtype != expect.dtype) {
    throw Error(Errc::kProtocolViolation, "collective dtype mismatch");
  }
  const std::size_t body = frame.size() - CollectiveHeader::kSize;
  if (body != static_cast<std::size_t>(h.count) * dtype_size(h.dtype)) {
    throw Error(Errc::kTruncatedPayload, "collective payload does not match element count");
  }
  return {h, std::span<const std::uint8_t>(frame.data() + CollectiveHeader::kSize, body)};
}

// ---- control messages ----

Bytes ControlMessage::encode() const {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(kind));
  out.push_back(static_cast<std::uint8_t>(mode));
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

ControlMessage ControlMessage::decode(const Bytes& bytes) {
  if (bytes.size() < 2 || bytes[0] > 2 || bytes[1] > 2) {
    throw Error(Errc::kProtocolViolation, "malformed control message");
  }
  ControlMessage m;
  m.kind = static_cast<Kind>(bytes[0]);
  m.mode = static_cast<Mode>(bytes[1]);
  m.text.assign(bytes.begin() + 2, bytes.end());
  return m;
}

// ---- world spawning ----

void run_world(int world_size, Backend backend, const std::function<void(Communicator&)>& entry, Millis timeout) {
  if (world_size < 1) throw Error(Errc::kInvalidRank, "world size must be >= 1");

  std::mutex failure_mu;
  int failed_rank = -1;
  std::string failure;

  auto record = [&](int rank, const std::string& what) {
    std::lock_guard lock(failure_mu);
    if (failed_rank < 0) {
      failed_rank = rank;
      failure = what;
    }
  };

  auto body = [&](int rank, std::unique_ptr<Transport> transport) {
    Communicator comm(std::move(transport), backend, timeout);
    try {
      entry(comm);
    } catch (const std::exception& e) {
      record(rank, e.what());
    } catch (...) {
      record(rank, "unknown exception");
    }
    comm.shutdown();
  };

  std::vector<std::thread> threads;
  if (backend == Backend::kInProc) {
    auto transports = make_inproc_world(world_size);
    for (int r = 0; r < world_size; ++r) {
      threads.emplace_back(body, r, std::move(transports[static_cast<std::size_t>(r)]));
    }
  } else {
    auto listener = std::make_unique<Listener>(Endpoint{"127.0.0.1", 0});
    const Endpoint rendezvous{"127.0.0.1", listener->port()};
    auto connect_and_run = [&, rendezvous](int r, std::unique_ptr<Listener> own) {
      std::unique_ptr<Transport> t;
      try {
        t = connect_tcp(r, world_size, rendezvous, timeout, std::move(own));
      } catch (const std::exception& e) {
        record(r, e.what());
        return;
      }
      body(r, std::move(t));
    };
    threads.emplace_back(connect_and_run, 0, std::move(listener));
    for (int r = 1; r < world_size; ++r) threads.emplace_back(connect_and_run, r, nullptr);
  }
  for (auto& t : threads) t.join();

  if (failed_rank >= 0) throw WorkerPanic(failed_rank, failure);
}

}  // namespace parexch
