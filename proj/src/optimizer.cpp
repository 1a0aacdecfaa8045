// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace parexch {

template <typename T>
void sgd_step(SgdState<T>& state, const Buffer<T>& grad) {
  require_same_length(grad.size(), state.weights.size(), "sgd_step");
  if (!kernels::active::all_finite(grad.span())) {
    throw Error(Errc::kNonFiniteGradient, "gradient contains NaN or Inf");
  }
  kernels::active::scale(state.velocity.span(), state.momentum);
  kernels::active::axpy(state.velocity.span(), -state.lr, grad.span());
  kernels::active::add(state.weights.span(), std::span<const T>(state.velocity.span()));
  ++state.iteration;
}

const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kStepDecay: return "step";
    case ScheduleKind::kPolyDecay: return "poly";
  }
  return "?";
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "step") return ScheduleKind::kStepDecay;
  if (name == "poly") return ScheduleKind::kPolyDecay;
  throw Error(Errc::kConfig, "unknown schedule '" + name + "'");
}

double schedule_lr(const Schedule& sched, int epoch, std::int64_t iteration) {
  switch (sched.kind) {
    case ScheduleKind::kConstant:
      return sched.base_lr;
    case ScheduleKind::kStepDecay:
      return sched.base_lr * std::pow(sched.step_factor, epoch / sched.step_period_epochs);
    case ScheduleKind::kPolyDecay: {
      const double frac = static_cast<double>(iteration) / static_cast<double>(sched.max_iterations);
      return sched.base_lr * std::pow(std::max(0.0, 1.0 - frac), sched.power);
    }
  }
  return sched.base_lr;
}

const char* scheme_name(CombineScheme s) { return s == CombineScheme::kAWAGD ? "awagd" : "subgd"; }

CombineScheme parse_scheme(const std::string& name) {
  if (name == "subgd") return CombineScheme::kSUBGD;
  if (name == "awagd") return CombineScheme::kAWAGD;
  throw Error(Errc::kConfig, "unknown scheme '" + name + "'");
}

double scale_lr_for_workers(double lr, int workers, CombineScheme scheme) {
  return scheme == CombineScheme::kAWAGD ? lr * workers : lr;
}

template <typename T>
Buffer<T> subgd_combine(Communicator& comm, ExchangeStrategy strategy, const Buffer<T>& w_before,
                        const Buffer<T>& w_after) {
  require_same_length(w_before.size(), w_after.size(), "subgd_combine");
  if (comm.size() == 1) {
    return w_after;
  }
  Buffer<T> summed = allreduce(comm, strategy, difference(w_after, w_before));
  add_inplace(summed, w_before);
  return summed;
}

template <typename T>
Buffer<T> awagd_combine(Communicator& comm, ExchangeStrategy strategy, const Buffer<T>& w_after) {
  Buffer<T> summed = allreduce(comm, strategy, w_after);
  if (comm.size() > 1) scale_inplace(summed, T{1} / static_cast<T>(comm.size()));
  return summed;
}

template void sgd_step<float>(SgdState<float>&, const Buffer<float>&);
template void sgd_step<double>(SgdState<double>&, const Buffer<double>&);
template Buffer<float> subgd_combine<float>(Communicator&, ExchangeStrategy, const Buffer<float>&,
                                            const Buffer<float>&);
template Buffer<double> subgd_combine<double>(Communicator&, ExchangeStrategy, const Buffer<double>&,
                                              const Buffer<double>&);
template Buffer<float> awagd_combine<float>(Communicator&, ExchangeStrategy, const Buffer<float>&);
template Buffer<double> awagd_combine<double>(Communicator&, ExchangeStrategy, const Buffer<double>&);

}  // namespace parexch
