// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Training loops.
//
// BSP: every worker takes a minibatch from its shard, runs one SGD step, then
// all workers combine parameters (SUBGD or AWAGD over AR/ASA/ASA16) before
// the next step.
//
// EASGD: k workers plus one server rank (rank k) holding the center
// variable. Every tau local steps a worker swaps parameter vectors with the
// server and both move toward the other's value by the moving rate alpha.
// The server serves workers in arrival order; workers never wait on each
// other.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "parexch/collectives.hpp"
#include "parexch/data_pipeline.hpp"
#include "parexch/models.hpp"
#include "parexch/optimizer.hpp"
#include "parexch/stats.hpp"

namespace parexch {

enum class TrainMode { kBsp, kEasgd };

const char* train_mode_name(TrainMode m);
TrainMode parse_train_mode(const std::string& name);

struct EasgdParams {
  double alpha = 0.5;
  int tau = 1;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kBsp;
  int workers = 1;
  int batch_size = 32;
  CombineScheme scheme = CombineScheme::kSUBGD;
  ExchangeStrategy strategy = ExchangeStrategy::kASA;
  ScheduleKind schedule = ScheduleKind::kConstant;
  double lr = 0.01;
  double momentum = 0.0;
  int epochs = 1;
  // Per-worker iteration cap across all epochs; 0 runs every epoch in full.
  std::int64_t max_iterations = 0;
  std::uint64_t seed = 1;
  EasgdParams easgd;
  ModelSpec model;
  // BSP only: compare weight hashes across ranks every N iterations (0: off).
  int verify_every = 0;

  void validate() const;
  EffectiveBatch effective_batch() const { return {batch_size, workers}; }
  // World size the mode needs: k for BSP, k + 1 for EASGD.
  int world_size() const { return mode == TrainMode::kEasgd ? workers + 1 : workers; }
};

// Items whose index is congruent to `rank` mod k.
std::vector<std::size_t> shard_dataset(std::size_t count, int k, int rank);

// Per-rank source of minibatches.
template <typename T>
class BatchStream {
 public:
  using Visitor = std::function<void(std::size_t step, const Batch<T>& batch)>;

  virtual ~BatchStream() = default;
  virtual std::size_t batches_per_epoch() const = 0;
  virtual void run_epoch(int epoch, const Visitor& visit) = 0;
  virtual const Dataset<T>& validation() const = 0;
};

// In-memory dataset sharded by index mod k. Every shard yields the same
// number of full batches; the remainder of a
// larger shard is not visited.
template <typename T>
class MemoryStream final : public BatchStream<T> {
 public:
  MemoryStream(const Dataset<T>& train, Dataset<T> validation, int batch_size, int shards, int shard_index);

  std::size_t batches_per_epoch() const override { return batches_.size(); }
  void run_epoch(int epoch, const typename BatchStream<T>::Visitor& visit) override;
  const Dataset<T>& validation() const override { return validation_; }

 private:
  std::vector<Batch<T>> batches_;
  Dataset<T> validation_;
};

struct FileSource {
  std::vector<std::string> train_files;
  std::vector<std::string> val_files;
  LabelIndex labels;
  LoaderOptions loader;
  int classes = 0;  // > 0 also fills one-hot targets
};

// Batch files sharded by index mod k, streamed through a Loader that
// prepares the next file while the current one trains.
template <typename T>
class FileStream final : public BatchStream<T> {
 public:
  FileStream(FileSource source, int shards, int shard_index, std::uint64_t seed);

  std::size_t batches_per_epoch() const override { return files_.size(); }
  void run_epoch(int epoch, const typename BatchStream<T>::Visitor& visit) override;
  const Dataset<T>& validation() const override { return validation_; }

 private:
  Batch<T> with_labels(const std::string& file, const Batch<float>& batch) const;

  FileSource source_;
  std::vector<std::string> files_;
  std::uint64_t seed_;
  Dataset<T> validation_;
  std::unique_ptr<Loader> loader_;
};

// Rank 0's parameters on every rank.
template <typename T>
Buffer<T> broadcast_init(Communicator& comm, const Buffer<T>& params);

// x <- x - alpha * (x - other)
template <typename T>
void elastic_pull(Buffer<T>& x, const Buffer<T>& other, T alpha);

template <typename T>
RunStats train_bsp(Communicator& comm, const TrainConfig& config, BatchStream<T>& stream);

// Rank k is the server; ranks 0..k-1 are workers.
template <typename T>
RunStats train_easgd(Communicator& comm, const TrainConfig& config, BatchStream<T>& stream);

// Single-context references with no transport: plain SGD for BSP, and one
// worker with a local center variable for EASGD.
template <typename T>
RunStats train_sequential(const TrainConfig& config, BatchStream<T>& stream);

template <typename T>
RunStats easgd_reference(const TrainConfig& config, BatchStream<T>& stream);

}  // namespace parexch
