// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "parexch/optimizer.hpp"

using namespace parexch;

TEST_CASE("sgd step without momentum") {
  SgdState<double> s(Buffer<double>{1.0, -2.0}, 0.1, 0.0);
  sgd_step(s, Buffer<double>{0.5, -1.0});
  CHECK(s.weights[0] == doctest::Approx(0.95));
  CHECK(s.weights[1] == doctest::Approx(-1.9));
}

TEST_CASE("sgd step with momentum accumulates velocity") {
  SgdState<double> s(Buffer<double>{0.0}, 0.5, 0.9);
  sgd_step(s, Buffer<double>{1.0});
  CHECK(s.velocity[0] == doctest::Approx(-0.5));
  CHECK(s.weights[0] == doctest::Approx(-0.5));
  sgd_step(s, Buffer<double>{1.0});
  CHECK(s.velocity[0] == doctest::Approx(-0.95));
  CHECK(s.weights[0] == doctest::Approx(-1.45));
}

TEST_CASE("sgd step rejects bad gradients and hyperparameters") {
  SgdState<float> s(Buffer<float>{1.0f, 2.0f}, 0.1f, 0.0f);
  try {
    sgd_step(s, Buffer<float>(std::size_t{3}));
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kLengthMismatch);
  }
  Buffer<float> g(std::size_t{2});
  g[1] = NAN;
  try {
    sgd_step(s, g);
    FAIL("expected NonFiniteGradient");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kNonFiniteGradient);
  }
  CHECK(s.weights == Buffer<float>{1.0f, 2.0f});
  CHECK_THROWS_AS(SgdState<float>(Buffer<float>{1.0f}, 0.0f, 0.0f), Error);
  CHECK_THROWS_AS(SgdState<float>(Buffer<float>{1.0f}, 0.1f, 1.0f), Error);
}

TEST_CASE("learning-rate schedules") {
  Schedule c{ScheduleKind::kConstant, 0.2};
  CHECK(schedule_lr(c, 50, 1000) == 0.2);

  Schedule st{ScheduleKind::kStepDecay, 0.1};
  st.step_period_epochs = 20;
  CHECK(schedule_lr(st, 19, 0) == doctest::Approx(0.1));
  CHECK(schedule_lr(st, 20, 0) == doctest::Approx(0.01));
  CHECK(schedule_lr(st, 45, 0) == doctest::Approx(0.001));

  Schedule p{ScheduleKind::kPolyDecay, 0.4};
  p.max_iterations = 100;
  p.power = 0.5;
  CHECK(schedule_lr(p, 0, 0) == doctest::Approx(0.4));
  CHECK(schedule_lr(p, 0, 75) == doctest::Approx(0.2));
  CHECK(schedule_lr(p, 0, 100) == 0.0);
  CHECK(schedule_lr(p, 0, 200) == 0.0);

  for (const auto k : {ScheduleKind::kConstant, ScheduleKind::kStepDecay, ScheduleKind::kPolyDecay}) {
    CHECK(parse_schedule(schedule_name(k)) == k);
  }
}

TEST_CASE("worker learning-rate scaling") {
  CHECK(scale_lr_for_workers(0.01, 4, CombineScheme::kAWAGD) == doctest::Approx(0.04));
  CHECK(scale_lr_for_workers(0.01, 4, CombineScheme::kSUBGD) == 0.01);
  CHECK(EffectiveBatch{32, 4}.effective() == 128);
  CHECK(parse_scheme("awagd") == CombineScheme::kAWAGD);
  CHECK_THROWS_AS(parse_scheme("avg"), Error);
}

TEST_CASE("SUBGD and AWAGD combine against per-rank oracles") {
  const int k = 4;
  run_world(k, Backend::kInProc, [&](Communicator& comm) {
    const double r = comm.rank();
    const Buffer<double> before{1.0, 2.0};
    const Buffer<double> after{1.0 + 0.1 * (r + 1), 2.0 - 0.2 * r};
    // Deltas: sum of 0.1*(r+1) = 1.0, sum of -0.2*r = -1.2.
    const auto s = subgd_combine(comm, ExchangeStrategy::kASA, before, after);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(0.8));
    const auto a = awagd_combine(comm, ExchangeStrategy::kAR, after);
    CHECK(a[0] == doctest::Approx(1.25));
    CHECK(a[1] == doctest::Approx(1.7));
  });
}

TEST_CASE("a single worker combines to its own weights") {
  run_world(1, Backend::kInProc, [](Communicator& comm) {
    const Buffer<float> before{0.3f, 0.7f};
    const Buffer<float> after{0.1f, 0.9f};
    for (const auto s : {ExchangeStrategy::kAR, ExchangeStrategy::kASA, ExchangeStrategy::kASA16}) {
      CHECK(subgd_combine(comm, s, before, after) == after);
      CHECK(awagd_combine(comm, s, after) == after);
    }
  });
}
