// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "parexch/buffer.hpp"
#include "parexch/collectives.hpp"

namespace parexch {

// Momentum SGD state confined to one rank.
template <typename T>
struct SgdState {
  Buffer<T> weights;
  Buffer<T> velocity;
  T lr = T{0.01};
  T momentum = T{0};
  std::int64_t iteration = 0;
  int epoch = 0;

  SgdState() = default;
  SgdState(Buffer<T> w, T learning_rate, T mu)
      : weights(std::move(w)), velocity(weights.size()), lr(learning_rate), momentum(mu) {
    if (!(learning_rate > T{0})) throw Error(Errc::kConfig, "learning rate must be positive");
    if (!(mu >= T{0} && mu < T{1})) throw Error(Errc::kConfig, "momentum must lie in [0, 1)");
  }
};

// velocity <- momentum * velocity - lr * grad; weights <- weights + velocity
template <typename T>
void sgd_step(SgdState<T>& state, const Buffer<T>& grad);

enum class ScheduleKind { kConstant, kStepDecay, kPolyDecay };

const char* schedule_name(ScheduleKind k);
ScheduleKind parse_schedule(const std::string& name);

struct Schedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double base_lr = 0.01;
  // step decay: lr * factor^floor(epoch / period)
  double step_factor = 0.1;
  int step_period_epochs = 20;
  // poly decay: lr * (1 - iteration / max_iterations)^power
  std::int64_t max_iterations = 1;
  double power = 0.5;
};

// `iteration` counts minibatches from the start of training
// (epoch * minibatches_per_epoch + step).
double schedule_lr(const Schedule& sched, int epoch, std::int64_t iteration);

enum class CombineScheme { kSUBGD, kAWAGD };

const char* scheme_name(CombineScheme s);
CombineScheme parse_scheme(const std::string& name);

struct EffectiveBatch {
  int per_worker_batch = 1;
  int workers = 1;

  int effective() const noexcept { return per_worker_batch * workers; }
};

// AWAGD needs k times the single-worker rate; SUBGD keeps it.
double scale_lr_for_workers(double lr, int workers, CombineScheme scheme);

// w_before + allreduce(w_after - w_before)
template <typename T>
Buffer<T> subgd_combine(Communicator& comm, ExchangeStrategy strategy, const Buffer<T>& w_before,
                        const Buffer<T>& w_after);

// allreduce(w_after) / k
template <typename T>
Buffer<T> awagd_combine(Communicator& comm, ExchangeStrategy strategy, const Buffer<T>& w_after);

}  // namespace parexch
