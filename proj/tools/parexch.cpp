// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

// parexch command-line driver.

#include <CLI11.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "parexch/config.hpp"
#include "parexch/data_pipeline.hpp"
#include "parexch/harness.hpp"
#include "parexch/random.hpp"
#include "parexch/tcp.hpp"

namespace {

using namespace parexch;

struct RunArgs {
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::string preset;
  std::vector<std::string> sets;
  bool print_config = false;
};

void add_run(CLI::App& app, RunArgs& args) {
  auto* run = app.add_subcommand("run", "train a model");
  run->add_option("-c,--config", args.config_path, "key = value config file");
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"--workers", "workers"},       {"--strategy", "strategy"},     {"--scheme", "scheme"},
      {"--mode", "mode"},             {"--tau", "tau"},               {"--alpha", "alpha"},
      {"--lr", "lr"},                 {"--batch-size", "batch_size"}, {"--model", "model"},
      {"--precision", "precision"},   {"--backend", "backend"},       {"--out", "out"},
      {"--epochs", "epochs"},         {"--iterations", "iterations"}, {"--seed", "seed"},
      {"--momentum", "momentum"},     {"--schedule", "schedule"},     {"--data-dir", "data_dir"},
      {"--rank", "rank"},             {"--verify-every", "verify_every"},
  };
  for (const auto& [flag, key] : flags) {
    run->add_option_function<std::string>(
        flag, [&args, key = key](const std::string& v) { args.flags[key] = v; }, "overrides `" + key + "`");
  }
  run->add_option("--preset", args.preset, "named settings bundle (alexnet-like)");
  run->add_option("--set", args.sets, "key=value override (repeatable)");
  run->add_flag("--print-config", args.print_config, "print the resolved config and exit");
}

int do_run(const RunArgs& args) {
  try {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    if (!args.preset.empty()) apply_preset(cfg, args.preset);
    for (const auto& kv : args.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(Errc::kConfig, "--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, value] : args.flags) cfg.set(key, value);
    cfg.validate();
    if (args.print_config) {
      std::cout << serialize_config(cfg);
      return 0;
    }
    return run_experiment(cfg, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

struct BenchArgs {
  std::string params = "1024";
  int workers = 4;
  std::string strategy = "all";
  int reps = 5;
  std::string backend = "inproc";
  std::string out;
};

int do_bench(const BenchArgs& a) {
  try {
    std::size_t p = 0;
    if (const auto preset = model_preset(a.params)) {
      p = *preset;
    } else {
      p = std::stoull(a.params);
    }
    std::vector<ExchangeStrategy> strategies;
    if (a.strategy == "all") {
      strategies = {ExchangeStrategy::kAR, ExchangeStrategy::kASA, ExchangeStrategy::kASA16};
    } else {
      strategies = {parse_strategy(a.strategy)};
    }
    std::ofstream file;
    if (!a.out.empty()) {
      file.open(a.out);
      if (!file) throw Error(Errc::kIo, "cannot write " + a.out);
      file << bench_header() << '\n';
    }
    std::cout << bench_header() << '\n';
    for (const auto s : strategies) {
      const std::string row = bench_row_csv(bench_exchange(p, a.workers, s, a.reps, parse_backend(a.backend)));
      std::cout << row << '\n';
      if (file) file << row << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

struct BatchArgs {
  std::string out;
  int files = 8;
  int val_files = 2;
  int batch_size = 16;
  int channels = 3;
  int size = 12;
  int classes = 4;
  std::uint64_t seed = 1;
};

// Class c brightens a horizontal band of the image over uniform noise.
RawBatch synth_images(const BatchArgs& a, Rng& rng, std::vector<std::int32_t>& labels) {
  RawBatch b;
  b.n = static_cast<std::uint32_t>(a.batch_size);
  b.channels = static_cast<std::uint32_t>(a.channels);
  b.height = b.width = static_cast<std::uint32_t>(a.size);
  b.pixels.resize(b.n * b.example_size());
  labels.resize(b.n);
  const std::uint32_t band = std::max<std::uint32_t>(1, b.height / static_cast<std::uint32_t>(a.classes));
  for (std::uint32_t i = 0; i < b.n; ++i) {
    const auto label = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(a.classes)));
    labels[i] = label;
    std::uint8_t* px = b.pixels.data() + i * b.example_size();
    for (std::uint32_t c = 0; c < b.channels; ++c) {
      for (std::uint32_t y = 0; y < b.height; ++y) {
        const bool lit = y / band == static_cast<std::uint32_t>(label);
        for (std::uint32_t x = 0; x < b.width; ++x) {
          const auto noise = static_cast<int>(rng.below(64));
          px[(c * b.height + y) * b.width + x] = static_cast<std::uint8_t>((lit ? 160 : 40) + noise);
        }
      }
    }
  }
  return b;
}

int do_make_batches(const BatchArgs& a) {
  namespace fs = std::filesystem;
  try {
    if (a.files < 1 || a.val_files < 1 || a.batch_size < 1 || a.channels < 1 || a.size < 1 || a.classes < 2) {
      throw Error(Errc::kConfig, "counts must be positive and classes >= 2");
    }
    const fs::path dir(a.out);
    fs::create_directories(dir / "train");
    fs::create_directories(dir / "val");
    Rng rng(a.seed);
    LabelIndex labels;
    std::vector<RawBatch> train;
    std::uint32_t index = 0;
    for (int f = 0; f < a.files + a.val_files; ++f, ++index) {
      std::vector<std::int32_t> l;
      RawBatch b = synth_images(a, rng, l);
      labels[index] = l;
      const bool is_train = f < a.files;
      write_batch_file(dir / (is_train ? "train" : "val") / batch_file_name(index), b);
      if (is_train) train.push_back(std::move(b));
    }
    write_label_index(dir / "labels.pxl", labels);
    write_mean_image(dir / "mean.pxm", compute_mean_image(train));
    std::cout << "wrote " << a.files << " train and " << a.val_files << " val batches to " << dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

struct CheckArgs {
  int workers = 2;
  int rank = -1;
  std::string backend = "inproc";
  std::uint64_t seed = 7;
  int iterations = 200;
  bool collectives = false;
  bool lockstep = false;
  std::int64_t timeout_ms = kDefaultTimeout.count();
};

int do_selfcheck(CheckArgs a) {
  if (!a.collectives && !a.lockstep) a.collectives = a.lockstep = true;
  std::vector<std::string> lines;
  std::atomic<bool> ok{true};
  auto body = [&](Communicator& comm) {
    std::vector<std::string> mine;
    bool good = true;
    if (a.collectives) {
      const CheckReport r = check_collectives(comm, a.seed);
      good = good && r.ok;
      mine.push_back("collectives " + std::string(r.ok ? "ok" : "FAIL") + " digest=" + std::to_string(r.digest) +
                     (r.detail.empty() ? "" : " (" + r.detail + ")"));
    }
    if (a.lockstep) {
      const CheckReport r = check_lockstep(comm, a.seed, a.iterations);
      good = good && r.ok;
      mine.push_back("lockstep " + std::string(r.ok ? "ok" : "FAIL") + " digest=" + std::to_string(r.digest) +
                     (r.detail.empty() ? "" : " (" + r.detail + ")"));
    }
    if (comm.rank() == 0 || a.rank >= 0) {
      for (auto& m : mine) lines.push_back("rank " + std::to_string(comm.rank()) + ": " + m);
    }
    if (!good) ok = false;
  };
  try {
    const Millis timeout(a.timeout_ms);
    if (a.rank < 0) {
      run_world(a.workers, parse_backend(a.backend), body, timeout);
    } else {
      const auto rendezvous = rendezvous_from_env();
      if (!rendezvous) throw Error(Errc::kConfig, std::string(kRendezvousEnv) + " is not set");
      Communicator comm(connect_tcp(a.rank, a.workers, *rendezvous, timeout), Backend::kTcp, timeout);
      body(comm);
      comm.shutdown();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  for (const auto& l : lines) std::cout << l << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parexch: data-parallel parameter exchange"};
  app.require_subcommand(1);

  RunArgs run_args;
  add_run(app, run_args);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time one parameter exchange");
  b->add_option("--params", bench.params, "element count or alexnet|googlenet|vggnet");
  b->add_option("--workers", bench.workers);
  b->add_option("--strategy", bench.strategy, "ar|asa|asa16|all");
  b->add_option("--reps", bench.reps);
  b->add_option("--backend", bench.backend, "inproc|tcp");
  b->add_option("--out", bench.out, "also write CSV here");

  BatchArgs batches;
  auto* m = app.add_subcommand("make-batches", "write a synthetic image batch directory");
  m->add_option("--out", batches.out)->required();
  m->add_option("--files", batches.files);
  m->add_option("--val-files", batches.val_files);
  m->add_option("--batch-size", batches.batch_size);
  m->add_option("--channels", batches.channels);
  m->add_option("--size", batches.size, "image side in pixels");
  m->add_option("--classes", batches.classes);
  m->add_option("--seed", batches.seed);

  CheckArgs check;
  auto* s = app.add_subcommand("selfcheck", "collective and lockstep checks inside a world");
  s->add_option("--workers", check.workers);
  s->add_option("--rank", check.rank, "this process's rank in a TCP world");
  s->add_option("--backend", check.backend, "inproc|tcp (in-process world)");
  s->add_option("--seed", check.seed);
  s->add_option("--iterations", check.iterations);
  s->add_option("--timeout-ms", check.timeout_ms);
  s->add_flag("--collectives", check.collectives, "only the collective check");
  s->add_flag("--lockstep", check.lockstep, "only the lockstep check");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("run")) return do_run(run_args);
  if (app.got_subcommand("bench")) return do_bench(bench);
  if (app.got_subcommand("make-batches")) return do_make_batches(batches);
  return do_selfcheck(check);
}
