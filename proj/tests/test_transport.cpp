// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

#include "parexch/tcp.hpp"
#include "parexch/transport.hpp"

using namespace parexch;
using namespace std::chrono_literals;

namespace {

Bytes bytes(std::initializer_list<int> v) {
  Bytes out;
  for (int x : v) out.push_back(static_cast<std::uint8_t>(x));
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no exception");
  return Errc::kConfig;
}

}  // namespace

TEST_CASE("mailbox keeps per-sender FIFO and global arrival order") {
  Mailbox box(3);
  box.push(1, bytes({1}));
  box.push(2, bytes({2}));
  box.push(1, bytes({3}));
  CHECK(box.pop(1, 10ms) == bytes({1}));
  auto [from, msg] = box.pop_any(10ms);
  CHECK(from == 2);
  CHECK(msg == bytes({2}));
  CHECK(box.pop_any(10ms).second == bytes({3}));
  CHECK(code_of([&] { box.pop(1, 5ms); }) == Errc::kTimeout);
}

TEST_CASE("mailbox drains queued messages before reporting a closed peer") {
  Mailbox box(2);
  box.push(1, bytes({7}));
  box.close_from(1);
  CHECK(box.pop(1, 10ms) == bytes({7}));
  CHECK(code_of([&] { box.pop(1, 10ms); }) == Errc::kPeerClosed);
}

TEST_CASE("communicator rejects bad peers") {
  auto world = make_inproc_world(2);
  Communicator c(std::move(world[0]), Backend::kInProc, 50ms);
  CHECK(code_of([&] { c.send(2, Bytes{}); }) == Errc::kInvalidRank);
  CHECK(code_of([&] { c.send(-1, Bytes{}); }) == Errc::kInvalidRank);
  CHECK(code_of([&] { (void)c.recv(0); }) == Errc::kInvalidRank);
  CHECK(code_of([&] { (void)c.recv(1); }) == Errc::kTimeout);
  CHECK(code_of([] { make_inproc_world(0); }) == Errc::kInvalidRank);
}

TEST_CASE("send and recv count bytes and messages per peer") {
  run_world(3, Backend::kInProc, [](Communicator& comm) {
    if (comm.rank() == 0) {
      comm.send(1, bytes({1, 2, 3}));
      comm.send(2, bytes({4}));
      CHECK(comm.counters(1).bytes_sent == 3);
      CHECK(comm.counters(2).messages_sent == 1);
      CHECK(comm.totals().bytes_sent == 4);
    } else {
      const Bytes m = comm.recv(0);
      CHECK(m.size() == (comm.rank() == 1 ? 3u : 1u));
      CHECK(comm.counters(0).bytes_received == m.size());
    }
  });
}

TEST_CASE("sendrecv pairs do not deadlock") {
  run_world(2, Backend::kInProc, [](Communicator& comm) {
    const int peer = 1 - comm.rank();
    for (int i = 0; i < 100; ++i) {
      const Bytes got = comm.sendrecv(peer, bytes({comm.rank(), i}));
      REQUIRE(got == bytes({peer, i}));
    }
  });
}

TEST_CASE("barrier sends 2(k-1) messages across the world") {
  for (int k : {1, 2, 5}) {
    std::atomic<std::uint64_t> messages{0};
    std::atomic<int> arrived{0};
    run_world(k, Backend::kInProc, [&](Communicator& comm) {
      arrived.fetch_add(1);
      comm.barrier();
      CHECK(arrived.load() == k);
      messages.fetch_add(comm.totals().messages_sent);
    });
    CHECK(messages.load() == static_cast<std::uint64_t>(2 * (k - 1)));
  }
}

TEST_CASE("collective frames round-trip and reject mismatches") {
  const CollectiveHeader h{42, CollectiveId::kAlltoall, DType::kF16, 3};
  const Bytes payload = bytes({1, 2, 3, 4, 5, 6});
  const Bytes frame = encode_frame(h, payload);
  REQUIRE(frame.size() == CollectiveHeader::kSize + 6);
  const auto [got, view] = decode_frame(frame, h);
  CHECK(got.count == 3);
  CHECK(Bytes(view.begin(), view.end()) == payload);

  CollectiveHeader wrong_seq = h;
  wrong_seq.sequence = 43;
  CHECK(code_of([&] { decode_frame(frame, wrong_seq); }) == Errc::kProtocolViolation);
  CollectiveHeader wrong_id = h;
  wrong_id.id = CollectiveId::kAllgather;
  CHECK(code_of([&] { decode_frame(frame, wrong_id); }) == Errc::kProtocolViolation);
  Bytes short_frame(frame.begin(), frame.end() - 1);
  CHECK(code_of([&] { decode_frame(short_frame, h); }) == Errc::kTruncatedPayload);
  CHECK(code_of([&] { decode_frame(bytes({1, 2}), h); }) == Errc::kProtocolViolation);
}

TEST_CASE("control messages round-trip") {
  for (const auto& m : {ControlMessage::mode_message(ControlMessage::Mode::kVal), ControlMessage::filename("a/b.pxb"),
                        ControlMessage::notify(), ControlMessage::notify("disk on fire")}) {
    CHECK(ControlMessage::decode(m.encode()) == m);
  }
  CHECK_THROWS_AS(ControlMessage::decode(Bytes{}), Error);
}

TEST_CASE("run_world attributes a failure to its rank") {
  try {
    run_world(4, Backend::kInProc, [](Communicator& comm) {
      if (comm.rank() == 2) throw Error(Errc::kNonFiniteGradient, "boom");
      comm.barrier();
    }, 2000ms);
    FAIL("expected WorkerPanic");
  } catch (const WorkerPanic& e) {
    CHECK(e.rank() == 2);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("peers see PeerClosed after a rank shuts down") {
  run_world(2, Backend::kInProc, [](Communicator& comm) {
    if (comm.rank() == 0) {
      comm.send(1, bytes({9}));
      comm.shutdown();
    } else {
      CHECK(comm.recv(0) == bytes({9}));
      CHECK(code_of([&] { (void)comm.recv(0); }) == Errc::kPeerClosed);
    }
  });
}

TEST_CASE("endpoint parsing") {
  const Endpoint e = parse_endpoint("127.0.0.1:5000");
  CHECK(e.host == "127.0.0.1");
  CHECK(e.port == 5000);
  CHECK(e.str() == "127.0.0.1:5000");
  CHECK(code_of([] { parse_endpoint("nohost"); }) == Errc::kConfig);
  CHECK(code_of([] { parse_endpoint("h:70000"); }) == Errc::kConfig);
  CHECK(code_of([] { parse_endpoint("h:x"); }) == Errc::kConfig);
}

TEST_CASE("tcp world exchanges messages and counts like inproc") {
  for (const Backend b : {Backend::kInProc, Backend::kTcp}) {
    std::atomic<std::uint64_t> total{0};
    run_world(4, b, [&](Communicator& comm) {
      for (int peer = 0; peer < comm.size(); ++peer) {
        if (peer != comm.rank()) comm.send(peer, Bytes(static_cast<std::size_t>(comm.rank() + 1), 0xab));
      }
      for (int peer = 0; peer < comm.size(); ++peer) {
        if (peer == comm.rank()) continue;
        const Bytes m = comm.recv(peer);
        CHECK(m.size() == static_cast<std::size_t>(peer + 1));
      }
      total.fetch_add(comm.totals().bytes_received);
      comm.barrier();
    });
    CHECK(total.load() == 3 * (1 + 2 + 3 + 4));
  }
}

TEST_CASE("tcp connect to a dead rendezvous fails") {
  Endpoint nowhere{"127.0.0.1", 1};
  const Errc c = code_of([&] { (void)connect_tcp(1, 2, nowhere, 300ms); });
  CHECK((c == Errc::kPeerUnreachable || c == Errc::kTimeout));
}

TEST_CASE("backend names round-trip") {
  CHECK(parse_backend(backend_name(Backend::kTcp)) == Backend::kTcp);
  CHECK(parse_backend("inproc") == Backend::kInProc);
  CHECK_THROWS_AS(parse_backend("udp"), Error);
}
