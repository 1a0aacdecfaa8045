// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

namespace parexch {

namespace {

using Clock = std::chrono::steady_clock;

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kPeerUnreachable, sys_error("send"));
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

// False on clean EOF before the first byte.
bool read_all(int fd, std::uint8_t* data, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw Error(Errc::kPeerClosed, "connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kPeerClosed, sys_error("recv"));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

void write_frame(int fd, std::span<const std::uint8_t> payload) {
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::uint8_t header[4];
  std::memcpy(header, &len, 4);
  write_all(fd, header, 4);
  if (!payload.empty()) write_all(fd, payload.data(), payload.size());
}

std::optional<Bytes> read_frame(int fd) {
  std::uint8_t header[4];
  if (!read_all(fd, header, 4)) return std::nullopt;
  std::uint32_t len = 0;
  std::memcpy(&len, header, 4);
  Bytes out(len);
  if (len > 0 && !read_all(fd, out.data(), len)) {
    throw Error(Errc::kPeerClosed, "connection closed mid-frame");
  }
  return out;
}

Bytes read_frame_or_throw(int fd, const char* what) {
  auto f = read_frame(fd);
  if (!f) throw Error(Errc::kPeerClosed, std::string(what) + ": connection closed");
  return std::move(*f);
}

void put_u32(Bytes& out, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(const Bytes& in, std::size_t offset) {
  if (offset + 4 > in.size()) throw Error(Errc::kProtocolViolation, "handshake frame too short");
  std::uint32_t v = 0;
  std::memcpy(&v, in.data() + offset, 4);
  return v;
}

sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || res == nullptr) {
    throw Error(Errc::kPeerUnreachable, "cannot resolve '" + ep.host + "': " + ::gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

void tune(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

int connect_with_retry(const sockaddr_in& addr, Millis timeout, const std::string& what) {
  const auto deadline = Clock::now() + timeout;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error(Errc::kPeerUnreachable, sys_error("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      tune(fd);
      return fd;
    }
    const int err = errno;
    ::close(fd);
    if (Clock::now() >= deadline) {
      errno = err;
      throw Error(Errc::kPeerUnreachable, sys_error(("connect to " + what).c_str()));
    }
    std::this_thread::sleep_for(Millis(20));
  }
}

class TcpTransport final : public Transport {
 public:
  TcpTransport(int rank, std::vector<int> fds)
      : rank_(rank), fds_(std::move(fds)), inbox_(static_cast<int>(fds_.size())), write_mu_(fds_.size()) {
    inbox_.close_from(rank_);
    for (int peer = 0; peer < size(); ++peer) {
      if (peer == rank_) continue;
      readers_.emplace_back([this, peer] { read_loop(peer); });
    }
  }

  ~TcpTransport() override {
    shutdown();
    for (auto& t : readers_) t.join();
    for (int fd : fds_) {
      if (fd >= 0) ::close(fd);
    }
  }

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(fds_.size()); }

  void deliver(int peer, std::span<const std::uint8_t> payload) override {
    std::lock_guard lock(write_mu_[static_cast<std::size_t>(peer)]);
    write_frame(fds_[static_cast<std::size_t>(peer)], payload);
  }

  Mailbox& inbox() override { return inbox_; }

  void shutdown() override {
    std::call_once(shutdown_once_, [this] {
      for (int fd : fds_) {
        if (fd >= 0) ::shutdown(fd, SHUT_WR);
      }
    });
  }

 private:
  void read_loop(int peer) {
    const int fd = fds_[static_cast<std::size_t>(peer)];
    try {
      while (auto frame = read_frame(fd)) inbox_.push(peer, std::move(*frame));
    } catch (const Error&) {
      // Treated as a closed peer below.
    }
    inbox_.close_from(peer);
  }

  int rank_;
  std::vector<int> fds_;
  Mailbox inbox_;
  std::vector<std::mutex> write_mu_;
  std::vector<std::thread> readers_;
  std::once_flag shutdown_once_;
};

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 >= text.size()) {
    throw Error(Errc::kConfig, "endpoint '" + text + "' is not host:port");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  char* end = nullptr;
  const long port = std::strtol(text.c_str() + colon + 1, &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) {
    throw Error(Errc::kConfig, "endpoint '" + text + "' has an invalid port");
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::optional<Endpoint> rendezvous_from_env() {
  const char* v = std::getenv(kRendezvousEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return parse_endpoint(v);
}

Listener::Listener(const Endpoint& where) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(Errc::kPeerUnreachable, sys_error("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = where.host.empty() ? sockaddr_in{} : resolve(where);
  addr.sin_family = AF_INET;
  addr.sin_port = htons(where.port);
  if (where.host.empty()) addr.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string msg = sys_error(("bind " + where.str()).c_str());
    ::close(fd_);
    throw Error(Errc::kPeerUnreachable, msg);
  }
  if (::listen(fd_, 128) != 0) {
    const std::string msg = sys_error("listen");
    ::close(fd_);
    throw Error(Errc::kPeerUnreachable, msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

Listener::Listener(Listener&& other) noexcept : fd_(other.fd_), port_(other.port_) { other.fd_ = -1; }

int Listener::accept(Millis timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc == 0) throw Error(Errc::kTimeout, "waiting for peer connection");
  if (rc < 0) throw Error(Errc::kPeerUnreachable, sys_error("poll"));
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw Error(Errc::kPeerUnreachable, sys_error("accept"));
  tune(fd);
  return fd;
}

std::unique_ptr<Transport> connect_tcp(int rank, int world_size, const Endpoint& rendezvous, Millis timeout,
                                       std::unique_ptr<Listener> rank0_listener) {
  if (world_size < 1 || rank < 0 || rank >= world_size) {
    throw Error(Errc::kInvalidRank, "rank " + std::to_string(rank) + " outside world of " + std::to_string(world_size));
  }
  std::vector<int> fds(static_cast<std::size_t>(world_size), -1);
  auto cleanup = [&] {
    for (int& fd : fds) {
      if (fd >= 0) ::close(fd);
      fd = -1;
    }
  };

  try {
    if (rank == 0) {
      if (!rank0_listener) rank0_listener = std::make_unique<Listener>(rendezvous);
      std::vector<std::uint32_t> hosts(static_cast<std::size_t>(world_size), 0);
      std::vector<std::uint32_t> ports(static_cast<std::size_t>(world_size), 0);
      for (int i = 1; i < world_size; ++i) {
        const int fd = rank0_listener->accept(timeout);
        const Bytes reg = read_frame_or_throw(fd, "registration");
        const auto r = static_cast<int>(get_u32(reg, 0));
        if (r <= 0 || r >= world_size || fds[static_cast<std::size_t>(r)] >= 0) {
          ::close(fd);
          throw Error(Errc::kProtocolViolation, "bad registration for rank " + std::to_string(r));
        }
        fds[static_cast<std::size_t>(r)] = fd;
        ports[static_cast<std::size_t>(r)] = get_u32(reg, 4);
        sockaddr_in peer{};
        socklen_t len = sizeof(peer);
        ::getpeername(fd, reinterpret_cast<sockaddr*>(&peer), &len);
        hosts[static_cast<std::size_t>(r)] = peer.sin_addr.s_addr;
      }
      Bytes table;
      for (int r = 0; r < world_size; ++r) {
        put_u32(table, hosts[static_cast<std::size_t>(r)]);
        put_u32(table, ports[static_cast<std::size_t>(r)]);
      }
      for (int r = 1; r < world_size; ++r) write_frame(fds[static_cast<std::size_t>(r)], table);
    } else {
      Listener own(Endpoint{"", 0});
      const int fd0 = connect_with_retry(resolve(rendezvous), timeout, "rendezvous " + rendezvous.str());
      fds[0] = fd0;
      Bytes reg;
      put_u32(reg, static_cast<std::uint32_t>(rank));
      put_u32(reg, own.port());
      write_frame(fd0, reg);
      const Bytes table = read_frame_or_throw(fd0, "peer table");
      if (table.size() != static_cast<std::size_t>(world_size) * 8) {
        throw Error(Errc::kProtocolViolation, "peer table has wrong size");
      }
      // Lower ranks are already listening; higher ranks will connect to us.
      for (int peer = 1; peer < rank; ++peer) {
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = get_u32(table, static_cast<std::size_t>(peer) * 8);
        addr.sin_port = htons(static_cast<std::uint16_t>(get_u32(table, static_cast<std::size_t>(peer) * 8 + 4)));
        const int fd = connect_with_retry(addr, timeout, "rank " + std::to_string(peer));
        fds[static_cast<std::size_t>(peer)] = fd;
        Bytes hello;
        put_u32(hello, static_cast<std::uint32_t>(rank));
        write_frame(fd, hello);
      }
      for (int n = rank + 1; n < world_size; ++n) {
        const int fd = own.accept(timeout);
        const Bytes hello = read_frame_or_throw(fd, "hello");
        const auto peer = static_cast<int>(get_u32(hello, 0));
        if (peer <= rank || peer >= world_size || fds[static_cast<std::size_t>(peer)] >= 0) {
          ::close(fd);
          throw Error(Errc::kProtocolViolation, "unexpected hello from rank " + std::to_string(peer));
        }
        fds[static_cast<std::size_t>(peer)] = fd;
      }
    }
  } catch (...) {
    cleanup();
    throw;
  }
  return std::make_unique<TcpTransport>(rank, std::move(fds));
}

}  // namespace parexch
