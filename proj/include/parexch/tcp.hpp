// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// TCP backend. One duplex connection per unordered rank pair; frames are
// u32-LE length followed by the payload. Rank 0 doubles as the rendezvous
// point: every other rank registers with (u32-LE rank, u32-LE listen port)
// and receives the peer table before the remaining pairs connect.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "parexch/transport.hpp"

namespace parexch {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline constexpr const char* kRendezvousEnv = "PAREXCH_RENDEZVOUS";

Endpoint parse_endpoint(const std::string& text);
std::optional<Endpoint> rendezvous_from_env();

// Bound, listening IPv4 socket. Port 0 picks an ephemeral port.
class Listener {
 public:
  explicit Listener(const Endpoint& where);
  ~Listener();
  Listener(Listener&& other) noexcept;
  Listener& operator=(Listener&&) = delete;
  Listener(const Listener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  int fd() const noexcept { return fd_; }
  // Returns the connected fd; throws Timeout.
  int accept(Millis timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Blocks until the full mesh is connected. Rank 0 listens on `rendezvous`
// unless a pre-bound listener is passed in.
std::unique_ptr<Transport> connect_tcp(int rank, int world_size, const Endpoint& rendezvous,
                                       Millis timeout = kDefaultTimeout,
                                       std::unique_ptr<Listener> rank0_listener = nullptr);

}  // namespace parexch
