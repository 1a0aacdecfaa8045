// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/collectives.hpp"

#include <algorithm>
#include <cstring>

namespace parexch {

namespace {

static_assert(sizeof(Half) == 2);

template <typename E>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<E, float>) {
    return DType::kF32;
  } else if constexpr (std::is_same_v<E, double>) {
    return DType::kF64;
  } else {
    static_assert(std::is_same_v<E, Half>);
    return DType::kF16;
  }
}

template <typename E>
void send_elements(Communicator& comm, int peer, const CollectiveHeader& h, std::span<const E> values) {
  const auto bytes = std::as_bytes(values);
  const Bytes frame =
      encode_frame(h, {reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
  comm.send(peer, frame);
  comm.payload().sent += bytes.size();
}

template <typename E>
std::vector<E> recv_elements(Communicator& comm, int peer, const CollectiveHeader& expect, std::size_t count,
                             const char* op) {
  const Bytes frame = comm.recv(peer);
  auto [h, body] = decode_frame(frame, expect);
  if (h.count != count) {
    throw Error(Errc::kLengthMismatch, std::string(op) + ": rank " + std::to_string(peer) + " sent " +
                                           std::to_string(h.count) + " elements, expected " +
                                           std::to_string(count));
  }
  std::vector<E> out(count);
  if (!body.empty()) std::memcpy(out.data(), body.data(), body.size());
  comm.payload().received += body.size();
  return out;
}

template <typename T>
std::vector<T> widen(const std::vector<Half>& h) {
  std::vector<T> out(h.size());
  kernels::active::from_half(std::span<const Half>(h), std::span<T>(out));
  return out;
}

template <typename T>
std::vector<Half> narrow(const std::vector<T>& v) {
  std::vector<Half> out(v.size());
  if (!kernels::active::to_half(std::span<const T>(v), std::span<Half>(out))) {
    throw Error(Errc::kOverflowToInfinity, "value outside binary16 range");
  }
  return out;
}

std::uint32_t checked_count(std::size_t n) {
  if (n > 0xffffffffu) throw Error(Errc::kLengthMismatch, "buffer exceeds u32 element count");
  return static_cast<std::uint32_t>(n);
}

}  // namespace

const char* strategy_name(ExchangeStrategy s) {
  switch (s) {
    case ExchangeStrategy::kAR: return "ar";
    case ExchangeStrategy::kASA: return "asa";
    case ExchangeStrategy::kASA16: return "asa16";
  }
  return "?";
}

ExchangeStrategy parse_strategy(const std::string& name) {
  if (name == "ar") return ExchangeStrategy::kAR;
  if (name == "asa") return ExchangeStrategy::kASA;
  if (name == "asa16") return ExchangeStrategy::kASA16;
  throw Error(Errc::kConfig, "unknown strategy '" + name + "'");
}

template <typename T>
Buffer<T> allreduce_ref(Communicator& comm, const Buffer<T>& b) {
  const std::uint32_t seq = comm.next_sequence();
  const int k = comm.size();
  if (k == 1) return b;
  const auto count = checked_count(b.size());
  const CollectiveHeader gather{seq, CollectiveId::kAllreduceGather, dtype_of<T>(), count};
  const CollectiveHeader bcast{seq, CollectiveId::kAllreduceBroadcast, dtype_of<T>(), count};

  if (comm.rank() != 0) {
    send_elements<T>(comm, 0, gather, b.span());
    return Buffer<T>(recv_elements<T>(comm, 0, bcast, b.size(), "allreduce_ref"));
  }
  std::vector<T> acc = b.values();
  for (int r = 1; r < k; ++r) {
    const auto part = recv_elements<T>(comm, r, gather, b.size(), "allreduce_ref");
    kernels::active::add(std::span<T>(acc), std::span<const T>(part));
  }
  if (!kernels::active::all_finite(std::span<const T>(acc))) {
    throw Error(Errc::kNonFinite, "allreduce_ref: sum is not finite");
  }
  for (int r = 1; r < k; ++r) send_elements<T>(comm, r, bcast, std::span<const T>(acc));
  return Buffer<T>(std::move(acc));
}

template <typename E>
std::vector<Slice<E>> alltoall(Communicator& comm, const std::vector<Slice<E>>& slices) {
  const std::uint32_t seq = comm.next_sequence();
  const int k = comm.size();
  const int me = comm.rank();
  if (static_cast<int>(slices.size()) != k) {
    throw Error(Errc::kLengthMismatch, "alltoall: expected " + std::to_string(k) + " slices, got " +
                                           std::to_string(slices.size()));
  }
  const std::size_t len = slices.front().values.size();
  for (const auto& s : slices) require_same_length(s.values.size(), len, "alltoall");
  const CollectiveHeader h{seq, CollectiveId::kAlltoall, dtype_of<E>(), checked_count(len)};

  for (int j = 0; j < k; ++j) {
    if (j != me) send_elements<E>(comm, j, h, std::span<const E>(slices[static_cast<std::size_t>(j)].values));
  }
  std::vector<Slice<E>> out(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    auto& dst = out[static_cast<std::size_t>(j)];
    dst.owner_index = me;
    dst.values = j == me ? slices[static_cast<std::size_t>(me)].values
                         : recv_elements<E>(comm, j, h, len, "alltoall");
  }
  return out;
}

template <typename E>
std::vector<Slice<E>> allgather(Communicator& comm, const Slice<E>& slice) {
  const std::uint32_t seq = comm.next_sequence();
  const int k = comm.size();
  const int me = comm.rank();
  const std::size_t len = slice.values.size();
  const CollectiveHeader h{seq, CollectiveId::kAllgather, dtype_of<E>(), checked_count(len)};

  for (int j = 0; j < k; ++j) {
    if (j != me) send_elements<E>(comm, j, h, std::span<const E>(slice.values));
  }
  std::vector<Slice<E>> out(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    auto& dst = out[static_cast<std::size_t>(j)];
    dst.owner_index = j;
    dst.values = j == me ? slice.values : recv_elements<E>(comm, j, h, len, "allgather");
  }
  return out;
}

template <typename T>
Buffer<T> asa_allreduce(Communicator& comm, const Buffer<T>& b) {
  const int k = comm.size();
  const int me = comm.rank();
  const auto received = alltoall<T>(comm, partition(b, k));

  std::vector<T> acc = received.front().values;
  for (int j = 1; j < k; ++j) {
    kernels::active::add(std::span<T>(acc), std::span<const T>(received[static_cast<std::size_t>(j)].values));
  }
  if (!kernels::active::all_finite(std::span<const T>(acc))) {
    throw Error(Errc::kNonFinite, "asa_allreduce: sum is not finite");
  }
  const auto gathered = allgather<T>(comm, Slice<T>{me, std::move(acc)});
  return unpartition(gathered, b.size());
}

template <typename T>
Buffer<T> asa16_allreduce(Communicator& comm, const Buffer<T>& b) {
  const int k = comm.size();
  const int me = comm.rank();
  const auto slices = partition(b, k);

  std::vector<Slice<Half>> outgoing(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    outgoing[static_cast<std::size_t>(j)] = {j, narrow(slices[static_cast<std::size_t>(j)].values)};
  }
  const auto received = alltoall<Half>(comm, outgoing);

  // Local contribution is summed unrounded.
  std::vector<T> acc = me == 0 ? slices[0].values : widen<T>(received[0].values);
  for (int j = 1; j < k; ++j) {
    const auto contrib = j == me ? slices[static_cast<std::size_t>(j)].values
                                 : widen<T>(received[static_cast<std::size_t>(j)].values);
    kernels::active::add(std::span<T>(acc), std::span<const T>(contrib));
  }
  if (k == 1) return Buffer<T>(std::move(acc));

  // The owner adopts its narrowed slice.
  const auto gathered = allgather<Half>(comm, Slice<Half>{me, narrow(acc)});
  std::vector<Slice<T>> wide(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    wide[static_cast<std::size_t>(j)] = {j, widen<T>(gathered[static_cast<std::size_t>(j)].values)};
  }
  return unpartition(wide, b.size());
}

template <typename T>
Buffer<T> allreduce(Communicator& comm, ExchangeStrategy strategy, const Buffer<T>& b) {
  switch (strategy) {
    case ExchangeStrategy::kAR: return allreduce_ref(comm, b);
    case ExchangeStrategy::kASA: return asa_allreduce(comm, b);
    case ExchangeStrategy::kASA16: return asa16_allreduce(comm, b);
  }
  throw Error(Errc::kConfig, "unknown strategy");
}

template <typename T>
Buffer<T> broadcast(Communicator& comm, const Buffer<T>& b, int root) {
  const std::uint32_t seq = comm.next_sequence();
  if (root < 0 || root >= comm.size()) throw Error(Errc::kInvalidRank, "broadcast root out of range");
  if (comm.size() == 1) return b;
  const CollectiveHeader h{seq, CollectiveId::kBroadcast, dtype_of<T>(), checked_count(b.size())};
  if (comm.rank() == root) {
    for (int r = 0; r < comm.size(); ++r) {
      if (r != root) send_elements<T>(comm, r, h, b.span());
    }
    return b;
  }
  return Buffer<T>(recv_elements<T>(comm, root, h, b.size(), "broadcast"));
}

std::vector<Bytes> allgather_bytes(Communicator& comm, const Bytes& mine) {
  const std::uint32_t seq = comm.next_sequence();
  const int k = comm.size();
  const int me = comm.rank();
  std::vector<Bytes> out(static_cast<std::size_t>(k));
  const CollectiveHeader h{seq, CollectiveId::kAllgatherBytes, DType::kU8, checked_count(mine.size())};
  const Bytes frame = encode_frame(h, mine);
  for (int j = 0; j < k; ++j) {
    if (j != me) comm.send(j, frame);
  }
  for (int j = 0; j < k; ++j) {
    if (j == me) {
      out[static_cast<std::size_t>(j)] = mine;
      continue;
    }
    const Bytes got = comm.recv(j);
    CollectiveHeader expect = h;
    // Blob lengths may differ per rank; only sequence and id must agree.
    std::uint32_t count = 0;
    if (got.size() >= CollectiveHeader::kSize) std::memcpy(&count, got.data() + 6, 4);
    expect.count = count;
    auto [hdr, body] = decode_frame(got, expect);
    out[static_cast<std::size_t>(j)].assign(body.begin(), body.end());
  }
  return out;
}

TrafficReport traffic_report(const Communicator& comm) {
  const PeerCounters t = comm.totals();
  return {comm.rank(), t.bytes_sent, t.bytes_received, comm.payload().sent, comm.payload().received};
}

TrafficSummary summarize(const std::vector<TrafficReport>& reports) {
  TrafficSummary s;
  for (const auto& r : reports) {
    s.max_rank_payload_sent = std::max(s.max_rank_payload_sent, r.payload_sent);
    s.max_rank_bytes = std::max(s.max_rank_bytes, r.payload_sent + r.payload_received);
    s.total_payload_sent += r.payload_sent;
    s.total_payload_received += r.payload_received;
  }
  return s;
}

#define PAREXCH_INSTANTIATE(T)                                                      \
  template Buffer<T> allreduce_ref<T>(Communicator&, const Buffer<T>&);             \
  template Buffer<T> asa_allreduce<T>(Communicator&, const Buffer<T>&);             \
  template Buffer<T> asa16_allreduce<T>(Communicator&, const Buffer<T>&);           \
  template Buffer<T> allreduce<T>(Communicator&, ExchangeStrategy, const Buffer<T>&); \
  template Buffer<T> broadcast<T>(Communicator&, const Buffer<T>&, int);

PAREXCH_INSTANTIATE(float)
PAREXCH_INSTANTIATE(double)
#undef PAREXCH_INSTANTIATE

template std::vector<Slice<float>> alltoall<float>(Communicator&, const std::vector<Slice<float>>&);
template std::vector<Slice<double>> alltoall<double>(Communicator&, const std::vector<Slice<double>>&);
template std::vector<Slice<Half>> alltoall<Half>(Communicator&, const std::vector<Slice<Half>>&);
template std::vector<Slice<float>> allgather<float>(Communicator&, const Slice<float>&);
template std::vector<Slice<double>> allgather<double>(Communicator&, const Slice<double>&);
template std::vector<Slice<Half>> allgather<Half>(Communicator&, const Slice<Half>&);

}  // namespace parexch
