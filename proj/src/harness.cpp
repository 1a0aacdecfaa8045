// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <ostream>

#include "parexch/data_pipeline.hpp"
#include "parexch/random.hpp"
#include "parexch/tcp.hpp"
#include "parexch/trainers.hpp"

namespace parexch {

namespace {

namespace fs = std::filesystem;

struct Resolved {
  TrainConfig train;
  std::optional<FileSource> files;
};

Resolved resolve(const ExperimentConfig& cfg) {
  cfg.validate();
  Resolved r;
  r.train = cfg.train;
  r.train.model.output_dim = cfg.classes;
  if (cfg.data_dir.empty()) return r;

  const fs::path dir(cfg.data_dir);
  FileSource src;
  src.train_files = list_batch_files(dir / "train");
  src.val_files = list_batch_files(dir / "val");
  if (src.train_files.empty()) throw Error(Errc::kConfig, "no batch files in " + (dir / "train").string());
  if (src.val_files.empty()) throw Error(Errc::kConfig, "no batch files in " + (dir / "val").string());
  src.labels = read_label_index(dir / "labels.pxl");
  src.loader.mean = read_mean_image(dir / "mean.pxm");
  src.classes = cfg.classes;

  const RawBatch first = read_batch_file(src.train_files.front());
  const std::uint32_t side_h = cfg.crop == 0 ? first.height : cfg.crop;
  const std::uint32_t side_w = cfg.crop == 0 ? first.width : cfg.crop;
  src.loader.crop = {side_h, side_w};
  r.train.model.input_dim = static_cast<int>(first.channels * side_h * side_w);
  r.train.batch_size = static_cast<int>(first.n);
  r.files = std::move(src);
  return r;
}

template <typename T>
std::unique_ptr<BatchStream<T>> make_stream(const Resolved& r, int rank,
                                            const Dataset<T>* train, const Dataset<T>* val) {
  const int shards = r.train.workers;
  const int index = rank < shards ? rank : 0;
  if (r.files) return std::make_unique<FileStream<T>>(*r.files, shards, index, r.train.seed);
  return std::make_unique<MemoryStream<T>>(*train, *val, r.train.batch_size, shards, index);
}

template <typename T>
RunStats run_rank(Communicator& comm, const ExperimentConfig& cfg, const Resolved& r, const Dataset<T>* train,
                  const Dataset<T>* val) {
  auto stream = make_stream<T>(r, comm.rank(), train, val);
  RunStats stats = r.train.mode == TrainMode::kEasgd ? train_easgd<T>(comm, r.train, *stream)
                                                     : train_bsp<T>(comm, r.train, *stream);
  emit_stats(stats, cfg.out + ".rank" + std::to_string(comm.rank()) + ".csv");
  return stats;
}

template <typename T>
std::vector<RunStats> run_typed(const ExperimentConfig& cfg) {
  const Resolved r = resolve(cfg);
  Dataset<T> train;
  Dataset<T> val;
  if (!r.files) {
    SyntheticSpec spec;
    spec.seed = cfg.train.seed;
    spec.n = cfg.samples + cfg.val_samples;
    spec.input_dim = r.train.model.input_dim;
    spec.classes = cfg.classes;
    spec.difficulty = cfg.difficulty;
    const Dataset<T> all = make_synthetic<T>(spec);
    std::vector<std::size_t> head(cfg.samples);
    std::vector<std::size_t> tail(cfg.val_samples);
    for (std::size_t i = 0; i < head.size(); ++i) head[i] = i;
    for (std::size_t i = 0; i < tail.size(); ++i) tail[i] = cfg.samples + i;
    train = take_rows(all, head);
    val = take_rows(all, tail);
  }

  const int world = r.train.world_size();
  const Millis timeout(cfg.timeout_ms);
  if (cfg.rank < 0) {
    return spawn_world<RunStats>(
        world, cfg.backend, [&](Communicator& comm) { return run_rank<T>(comm, cfg, r, &train, &val); },
        timeout);
  }

  const auto rendezvous = rendezvous_from_env();
  if (!rendezvous) throw Error(Errc::kConfig, std::string(kRendezvousEnv) + " is not set");
  try {
    Communicator comm(connect_tcp(cfg.rank, world, *rendezvous, timeout), Backend::kTcp, timeout);
    RunStats stats = run_rank<T>(comm, cfg, r, &train, &val);
    comm.shutdown();
    return {std::move(stats)};
  } catch (const WorkerPanic&) {
    throw;
  } catch (const std::exception& e) {
    throw WorkerPanic(cfg.rank, e.what());
  }
}

}  // namespace

std::vector<RunStats> run_experiment_stats(const ExperimentConfig& config) {
  return config.precision == Precision::kF64 ? run_typed<double>(config) : run_typed<float>(config);
}

int run_experiment(const ExperimentConfig& config, std::ostream& log, std::ostream& err) {
  try {
    const auto all = run_experiment_stats(config);
    const int evaluator = config.train.mode == TrainMode::kEasgd ? config.train.workers : 0;
    for (const auto& s : all) {
      char line[256];
      if (s.rank == evaluator) {
        std::snprintf(line, sizeof(line), "rank %d: iterations=%zu val_loss=%.6g val_error=%.4f wall=%.3fs", s.rank,
                      s.iterations.size(), s.val_loss, s.val_error, s.wall_seconds);
      } else {
        std::snprintf(line, sizeof(line), "rank %d: iterations=%zu final_loss=%.6g wall=%.3fs", s.rank,
                      s.iterations.size(), s.iterations.empty() ? 0.0 : s.iterations.back().loss, s.wall_seconds);
      }
      log << line << '\n';
    }
    return 0;
  } catch (const WorkerPanic& e) {
    err << "error: rank " << e.rank() << " failed: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

std::string bench_header() { return "strategy,params,workers,reps,mean_seconds,per_rank_bytes,rank0_bytes"; }

std::string bench_row_csv(const BenchRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%zu,%d,%d,%.6f,%llu,%llu", strategy_name(r.strategy), r.params, r.workers,
                r.reps, r.mean_seconds, static_cast<unsigned long long>(r.per_rank_bytes),
                static_cast<unsigned long long>(r.rank0_bytes));
  return buf;
}

BenchRow bench_exchange(std::size_t params, int workers, ExchangeStrategy strategy, int reps, Backend backend) {
  if (params == 0) throw Error(Errc::kConfig, "params must be >= 1");
  if (workers < 1) throw Error(Errc::kConfig, "workers must be >= 1");
  if (reps < 1) throw Error(Errc::kConfig, "reps must be >= 1");

  struct Sample {
    double seconds = 0.0;
    TrafficReport traffic;
  };
  const auto samples = spawn_world<Sample>(workers, backend, [&](Communicator& comm) {
    Rng rng(derive_seed(params, static_cast<std::uint64_t>(comm.rank())));
    std::vector<float> v(params);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Buffer<float> b(std::move(v));
    comm.barrier();
    comm.reset_counters();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) (void)allreduce(comm, strategy, b);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    return Sample{dt.count(), traffic_report(comm)};
  });

  BenchRow row;
  row.strategy = strategy;
  row.params = params;
  row.workers = workers;
  row.reps = reps;
  const auto r = static_cast<std::uint64_t>(reps);
  for (const auto& s : samples) {
    row.mean_seconds = std::max(row.mean_seconds, s.seconds / reps);
    row.per_rank_bytes = std::max(row.per_rank_bytes, s.traffic.payload_sent / r);
  }
  row.rank0_bytes = (samples[0].traffic.payload_sent + samples[0].traffic.payload_received) / r;
  return row;
}

std::optional<std::size_t> model_preset(const std::string& name) {
  if (name == "alexnet") return 60965224;
  if (name == "googlenet") return 13378280;
  if (name == "vggnet") return 138357544;
  return std::nullopt;
}

}  // namespace parexch

namespace parexch {

std::vector<std::size_t> check_sizes(int k) {
  const auto kk = static_cast<std::size_t>(k);
  std::vector<std::size_t> sizes = {1, kk - 1, kk, kk + 1, 1024, 100003};
  sizes.erase(std::remove(sizes.begin(), sizes.end(), std::size_t{0}), sizes.end());
  return sizes;
}

std::vector<float> check_buffer(std::uint64_t seed, int j, std::size_t n) {
  Rng rng(derive_seed(derive_seed(seed, n), static_cast<std::uint64_t>(j)));
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

namespace {

std::uint64_t chain(std::uint64_t h, std::uint64_t v) {
  const std::uint64_t parts[2] = {h, v};
  return fnv1a(parts, sizeof(parts));
}

// Merges every rank's verdict and digest.
CheckReport agree(Communicator& comm, CheckReport mine) {
  Bytes blob(sizeof(std::uint64_t) + 1);
  std::memcpy(blob.data(), &mine.digest, sizeof(mine.digest));
  blob.back() = mine.ok ? 1 : 0;
  const auto all = allgather_bytes(comm, blob);
  for (std::size_t r = 0; r < all.size(); ++r) {
    if (all[r].back() == 0) {
      mine.ok = false;
      if (mine.detail.empty()) mine.detail = "rank " + std::to_string(r) + " reported a failure";
    } else if (!std::equal(all[r].begin(), all[r].end() - 1, blob.begin())) {
      mine.ok = false;
      if (mine.detail.empty()) mine.detail = "rank " + std::to_string(r) + " disagrees on the digest";
    }
  }
  return mine;
}

}  // namespace

CheckReport check_collectives(Communicator& comm, std::uint64_t seed) {
  const int k = comm.size();
  CheckReport rep;
  rep.digest = 14695981039346656037ULL;
  for (const std::size_t n : check_sizes(k)) {
    std::vector<double> exact(n, 0.0);
    std::vector<double> magnitude(n, 0.0);
    for (int j = 0; j < k; ++j) {
      const auto v = check_buffer(seed, j, n);
      for (std::size_t i = 0; i < n; ++i) {
        exact[i] += v[i];
        magnitude[i] += std::fabs(v[i]);
      }
    }
    const Buffer<float> mine(check_buffer(seed, comm.rank(), n));
    const Buffer<float> ref = allreduce_ref(comm, mine);
    const Buffer<float> asa = asa_allreduce(comm, mine);
    for (std::size_t i = 0; i < n && rep.ok; ++i) {
      const double tol = 1e-6 * magnitude[i];
      if (std::fabs(ref[i] - exact[i]) > tol || std::fabs(asa[i] - exact[i]) > tol) {
        rep.ok = false;
        rep.detail = "P=" + std::to_string(n) + " element " + std::to_string(i) + " off the exact sum";
      }
    }
    if (rep.ok && std::memcmp(ref.data(), asa.data(), n * sizeof(float)) != 0) {
      rep.ok = false;
      rep.detail = "P=" + std::to_string(n) + ": ASA and AR differ";
    }
    rep.digest = chain(rep.digest, fnv1a(asa.data(), n * sizeof(float)));
  }
  return agree(comm, rep);
}

CheckReport check_lockstep(Communicator& comm, std::uint64_t seed, int iterations) {
  TrainConfig t;
  t.mode = TrainMode::kBsp;
  t.workers = comm.size();
  t.batch_size = 8;
  t.strategy = ExchangeStrategy::kASA;
  t.scheme = CombineScheme::kSUBGD;
  t.lr = 0.05;
  t.epochs = 1000;
  t.max_iterations = iterations;
  t.seed = seed;
  t.verify_every = 1;
  t.model = {ModelKind::kLogistic, 16, 4, 0};

  SyntheticSpec spec;
  spec.seed = seed;
  spec.n = static_cast<std::size_t>(t.workers) * 8 * 50;
  spec.input_dim = 16;
  spec.classes = 4;
  spec.difficulty = 0.5;
  const Dataset<float> data = make_synthetic<float>(spec);
  MemoryStream<float> stream(data, take_rows(data, {0, 1, 2, 3}), t.batch_size, t.workers, comm.rank());

  CheckReport rep;
  rep.digest = 14695981039346656037ULL;
  try {
    const RunStats stats = train_bsp<float>(comm, t, stream);
    if (stats.iterations.size() != static_cast<std::size_t>(iterations)) {
      rep.ok = false;
      rep.detail = "ran " + std::to_string(stats.iterations.size()) + " iterations";
    }
    for (const auto& rec : stats.iterations) rep.digest = chain(rep.digest, rec.weights_hash);
  } catch (const Error& e) {
    if (e.code() != Errc::kProtocolViolation) throw;
    return {false, e.what(), 0};
  }
  return agree(comm, rep);
}

}  // namespace parexch
