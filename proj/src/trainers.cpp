// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/trainers.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "parexch/random.hpp"

namespace parexch {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T>
std::uint64_t hash_weights(const Buffer<T>& w) {
  return fnv1a(w.data(), w.size() * sizeof(T));
}

template <typename T>
Bytes encode_values(std::uint8_t tag, const Buffer<T>& b) {
  Bytes out(1 + b.size() * sizeof(T));
  out[0] = tag;
  if (!b.empty()) std::memcpy(out.data() + 1, b.data(), b.size() * sizeof(T));
  return out;
}

template <typename T>
Buffer<T> decode_values(const Bytes& msg, std::size_t expected) {
  if (msg.size() != 1 + expected * sizeof(T)) {
    throw Error(Errc::kLengthMismatch, "EASGD parameter message has the wrong size");
  }
  std::vector<T> v(expected);
  if (expected > 0) std::memcpy(v.data(), msg.data() + 1, expected * sizeof(T));
  return Buffer<T>(std::move(v));
}

constexpr std::uint8_t kEasgdParams = 0;
constexpr std::uint8_t kEasgdDone = 1;

template <typename T>
using ExchangeHook =
    std::function<void(SgdState<T>& state, const Buffer<T>& w_before, const Buffer<T>& v_before, IterationRecord& rec)>;

// Shared SGD driver; `exchange` runs after every local step.
template <typename T>
RunStats sgd_loop(const TrainConfig& config, BatchStream<T>& stream, Buffer<T> init, double lr, int rank,
                  bool evaluate_each_epoch, const ExchangeHook<T>& exchange) {
  RunStats stats;
  stats.rank = rank;
  const auto wall0 = Clock::now();
  const auto per_epoch = static_cast<std::int64_t>(stream.batches_per_epoch());
  std::int64_t total = per_epoch * config.epochs;
  if (config.max_iterations > 0) total = std::min(total, config.max_iterations);

  Schedule sched;
  sched.kind = config.schedule;
  sched.base_lr = lr;
  sched.max_iterations = std::max<std::int64_t>(total, 1);

  SgdState<T> state(std::move(init), static_cast<T>(lr), static_cast<T>(config.momentum));
  std::int64_t iteration = 0;
  for (int epoch = 0; epoch < config.epochs && iteration < total; ++epoch) {
    state.epoch = epoch;
    stream.run_epoch(epoch, [&](std::size_t, const Batch<T>& batch) {
      if (iteration >= total) return;
      state.lr = static_cast<T>(schedule_lr(sched, epoch, iteration));
      IterationRecord rec;
      rec.iteration = iteration;
      rec.epoch = epoch;

      const auto t0 = Clock::now();
      LossGrad<T> lg = forward_backward(config.model, state.weights, batch);
      if (!std::isfinite(lg.loss)) {
        throw Error(Errc::kNonFiniteLoss, "loss diverged at iteration " + std::to_string(iteration));
      }
      const Buffer<T> w_before = state.weights;
      const Buffer<T> v_before = state.velocity;
      sgd_step(state, lg.grad);
      rec.compute_seconds = seconds_since(t0);
      rec.loss = static_cast<double>(lg.loss);

      exchange(state, w_before, v_before, rec);
      rec.weights_hash = hash_weights(state.weights);
      stats.iterations.push_back(rec);
      ++iteration;
    });
    if (evaluate_each_epoch) {
      const Evaluation e = evaluate(config.model, state.weights, stream.validation());
      stats.val_loss = e.loss;
      stats.val_error = e.error_rate;
    }
  }
  stats.final_weights.assign(state.weights.values().begin(), state.weights.values().end());
  stats.wall_seconds = seconds_since(wall0);
  return stats;
}

}  // namespace

const char* train_mode_name(TrainMode m) { return m == TrainMode::kEasgd ? "easgd" : "bsp"; }

TrainMode parse_train_mode(const std::string& name) {
  if (name == "bsp") return TrainMode::kBsp;
  if (name == "easgd") return TrainMode::kEasgd;
  throw Error(Errc::kConfig, "unknown mode '" + name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kConfig, what); };
  if (workers < 1) fail("workers must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (epochs < 1) fail("epochs must be >= 1");
  if (max_iterations < 0) fail("iterations must be >= 0");
  if (easgd.tau < 1) fail("tau must be >= 1");
  if (!(easgd.alpha > 0.0 && easgd.alpha <= 1.0)) fail("alpha must lie in (0, 1]");
  if (verify_every < 0) fail("verify_every must be >= 0");
  (void)model.param_count();
}

std::vector<std::size_t> shard_dataset(std::size_t count, int k, int rank) {
  if (k < 1 || rank < 0 || rank >= k) throw Error(Errc::kInvalidRank, "shard rank outside [0, k)");
  std::vector<std::size_t> out;
  for (std::size_t i = static_cast<std::size_t>(rank); i < count; i += static_cast<std::size_t>(k)) out.push_back(i);
  return out;
}

template <typename T>
MemoryStream<T>::MemoryStream(const Dataset<T>& train, Dataset<T> validation, int batch_size, int shards,
                              int shard_index)
    : validation_(std::move(validation)) {
  const auto rows = shard_dataset(train.n, shards, shard_index);
  const std::size_t common = train.n / static_cast<std::size_t>(shards);
  const auto b = static_cast<std::size_t>(batch_size);
  const std::size_t count = common / b;
  if (count == 0) {
    throw Error(Errc::kConfig, "each shard holds " + std::to_string(common) + " examples, fewer than one batch of " +
                                   std::to_string(b));
  }
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<std::size_t> pick(rows.begin() + static_cast<std::ptrdiff_t>(t * b),
                                  rows.begin() + static_cast<std::ptrdiff_t>((t + 1) * b));
    batches_.push_back(take_rows(train, pick));
  }
}

template <typename T>
void MemoryStream<T>::run_epoch(int, const typename BatchStream<T>::Visitor& visit) {
  for (std::size_t t = 0; t < batches_.size(); ++t) visit(t, batches_[t]);
}

template <typename T>
FileStream<T>::FileStream(FileSource source, int shards, int shard_index, std::uint64_t seed)
    : source_(std::move(source)), seed_(seed) {
  const auto picks = shard_dataset(source_.train_files.size(), shards, shard_index);
  const std::size_t common = source_.train_files.size() / static_cast<std::size_t>(shards);
  if (common == 0) throw Error(Errc::kConfig, "fewer batch files than workers");
  for (std::size_t i = 0; i < common; ++i) files_.push_back(source_.train_files[picks[i]]);

  std::vector<Batch<T>> val_parts;
  for (const auto& f : source_.val_files) {
    const Batch<float> b = preprocess_serial(read_batch_file(f), source_.loader.mean, LoadMode::kVal,
                                             source_.loader.crop, 0);
    val_parts.push_back(with_labels(f, b));
  }
  validation_ = concat_batches(val_parts);
  loader_ = std::make_unique<Loader>(source_.loader);
}

template <typename T>
Batch<T> FileStream<T>::with_labels(const std::string& file, const Batch<float>& batch) const {
  Batch<T> out;
  out.n = batch.n;
  out.dim = batch.dim;
  out.x.assign(batch.x.begin(), batch.x.end());
  const auto it = source_.labels.find(batch_index_from_name(file));
  if (it == source_.labels.end() || it->second.size() != batch.n) {
    throw Error(Errc::kShapeMismatch, "no labels for " + file);
  }
  out.labels = it->second;
  if (source_.classes > 0) {
    const auto c = static_cast<std::size_t>(source_.classes);
    out.targets.assign(out.n * c, T{0});
    for (std::size_t i = 0; i < out.n; ++i) {
      const auto label = out.labels[i];
      if (label < 0 || static_cast<std::size_t>(label) >= c) throw Error(Errc::kShapeMismatch, "label out of range");
      out.targets[i * c + static_cast<std::size_t>(label)] = T{1};
    }
  }
  return out;
}

template <typename T>
void FileStream<T>::run_epoch(int epoch, const typename BatchStream<T>::Visitor& visit) {
  loader_->run_phase(files_, LoadMode::kTrain, derive_seed(seed_, static_cast<std::uint64_t>(epoch)),
                     [&](std::size_t step, const Batch<float>& b) { visit(step, with_labels(files_[step], b)); });
}

template <typename T>
Buffer<T> broadcast_init(Communicator& comm, const Buffer<T>& params) {
  return broadcast(comm, params, 0);
}

template <typename T>
void elastic_pull(Buffer<T>& x, const Buffer<T>& other, T alpha) {
  require_same_length(x.size(), other.size(), "elastic_pull");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= alpha * (x[i] - other[i]);
}

template <typename T>
RunStats train_bsp(Communicator& comm, const TrainConfig& config, BatchStream<T>& stream) {
  config.validate();
  if (comm.size() != config.workers) {
    throw Error(Errc::kConfig, "BSP needs a world of " + std::to_string(config.workers) + " ranks");
  }
  const Buffer<T> init = broadcast_init(comm, init_params<T>(config.model, config.seed));
  const double lr = scale_lr_for_workers(config.lr, config.workers, config.scheme);
  const bool momentum = config.momentum > 0.0;

  ExchangeHook<T> exchange = [&](SgdState<T>& state, const Buffer<T>& w_before, const Buffer<T>& v_before,
                                 IterationRecord& rec) {
    const std::uint64_t sent0 = comm.totals().bytes_sent;
    const auto t0 = Clock::now();
    if (config.scheme == CombineScheme::kSUBGD) {
      state.weights = subgd_combine(comm, config.strategy, w_before, state.weights);
      if (momentum) state.velocity = subgd_combine(comm, config.strategy, v_before, state.velocity);
    } else {
      state.weights = awagd_combine(comm, config.strategy, state.weights);
      if (momentum) state.velocity = awagd_combine(comm, config.strategy, state.velocity);
    }
    rec.exchange_seconds = seconds_since(t0);
    rec.bytes_sent = comm.totals().bytes_sent - sent0;

    if (config.verify_every > 0 && (rec.iteration + 1) % config.verify_every == 0) {
      const std::uint64_t mine = hash_weights(state.weights);
      Bytes blob(sizeof(mine));
      std::memcpy(blob.data(), &mine, sizeof(mine));
      const auto all = allgather_bytes(comm, blob);
      for (std::size_t r = 0; r < all.size(); ++r) {
        if (all[r] != blob) {
          throw Error(Errc::kProtocolViolation, "lockstep violated at iteration " + std::to_string(rec.iteration) +
                                                    ": rank " + std::to_string(r) + " holds different weights");
        }
      }
    }
  };
  return sgd_loop<T>(config, stream, init, lr, comm.rank(), comm.rank() == 0, exchange);
}

template <typename T>
RunStats train_easgd(Communicator& comm, const TrainConfig& config, BatchStream<T>& stream) {
  config.validate();
  if (comm.size() != config.workers + 1) {
    throw Error(Errc::kConfig, "EASGD needs a world of " + std::to_string(config.workers + 1) + " ranks");
  }
  const int server = config.workers;
  const auto alpha = static_cast<T>(config.easgd.alpha);
  const Buffer<T> init = broadcast_init(comm, init_params<T>(config.model, config.seed));

  if (comm.rank() == server) {
    RunStats stats;
    stats.rank = comm.rank();
    const auto wall0 = Clock::now();
    Buffer<T> center = init;
    int done = 0;
    while (done < config.workers) {
      auto [peer, msg] = comm.recv_any();
      if (msg.empty()) throw Error(Errc::kProtocolViolation, "empty EASGD message");
      if (msg[0] == kEasgdDone) {
        ++done;
        continue;
      }
      if (msg[0] != kEasgdParams) throw Error(Errc::kProtocolViolation, "unknown EASGD message tag");
      const Buffer<T> seen = decode_values<T>(msg, center.size());
      stats.param_messages_received += 1;
      comm.send(peer, encode_values(kEasgdParams, center));
      stats.param_messages_sent += 1;
      elastic_pull(center, seen, alpha);
    }
    const Evaluation e = evaluate(config.model, center, stream.validation());
    stats.val_loss = e.loss;
    stats.val_error = e.error_rate;
    stats.final_weights.assign(center.values().begin(), center.values().end());
    stats.wall_seconds = seconds_since(wall0);
    return stats;
  }

  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  ExchangeHook<T> exchange = [&](SgdState<T>& state, const Buffer<T>&, const Buffer<T>&, IterationRecord& rec) {
    if ((rec.iteration + 1) % config.easgd.tau != 0) return;
    const std::uint64_t sent0 = comm.totals().bytes_sent;
    const auto t0 = Clock::now();
    const Bytes reply = comm.sendrecv(server, encode_values(kEasgdParams, state.weights));
    ++sent;
    ++received;
    const Buffer<T> center = decode_values<T>(reply, state.weights.size());
    elastic_pull(state.weights, center, alpha);
    rec.exchange_seconds = seconds_since(t0);
    rec.bytes_sent = comm.totals().bytes_sent - sent0;
  };
  RunStats stats = sgd_loop<T>(config, stream, init, config.lr, comm.rank(), false, exchange);
  comm.send(server, Bytes{kEasgdDone});
  stats.param_messages_sent = sent;
  stats.param_messages_received = received;
  return stats;
}

template <typename T>
RunStats train_sequential(const TrainConfig& config, BatchStream<T>& stream) {
  config.validate();
  ExchangeHook<T> none = [](SgdState<T>&, const Buffer<T>&, const Buffer<T>&, IterationRecord&) {};
  return sgd_loop<T>(config, stream, init_params<T>(config.model, config.seed), config.lr, 0, true, none);
}

template <typename T>
RunStats easgd_reference(const TrainConfig& config, BatchStream<T>& stream) {
  config.validate();
  if (config.workers != 1) throw Error(Errc::kConfig, "the EASGD reference runs a single worker");
  const auto alpha = static_cast<T>(config.easgd.alpha);
  Buffer<T> center = init_params<T>(config.model, config.seed);
  std::uint64_t exchanges = 0;
  ExchangeHook<T> exchange = [&](SgdState<T>& state, const Buffer<T>&, const Buffer<T>&, IterationRecord& rec) {
    if ((rec.iteration + 1) % config.easgd.tau != 0) return;
    const Buffer<T> sent = state.weights;
    const Buffer<T> seen = center;
    elastic_pull(state.weights, seen, alpha);
    elastic_pull(center, sent, alpha);
    ++exchanges;
  };
  RunStats stats = sgd_loop<T>(config, stream, center, config.lr, 0, false, exchange);
  stats.param_messages_sent = exchanges;
  stats.param_messages_received = exchanges;
  return stats;
}

#define PAREXCH_INSTANTIATE(T)                                                            \
  template class MemoryStream<T>;                                                         \
  template class FileStream<T>;                                                           \
  template Buffer<T> broadcast_init<T>(Communicator&, const Buffer<T>&);                  \
  template void elastic_pull<T>(Buffer<T>&, const Buffer<T>&, T);                         \
  template RunStats train_bsp<T>(Communicator&, const TrainConfig&, BatchStream<T>&);     \
  template RunStats train_easgd<T>(Communicator&, const TrainConfig&, BatchStream<T>&);   \
  template RunStats train_sequential<T>(const TrainConfig&, BatchStream<T>&);             \
  template RunStats easgd_reference<T>(const TrainConfig&, BatchStream<T>&);

PAREXCH_INSTANTIATE(float)
PAREXCH_INSTANTIATE(double)
#undef PAREXCH_INSTANTIATE

}  // namespace parexch
