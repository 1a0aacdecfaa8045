// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

// Serial vs OpenMP kernels and preprocessing.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <span>
#include <vector>

#include "parexch/data_pipeline.hpp"
#include "parexch/kernels.hpp"
#include "parexch/random.hpp"

namespace {

using namespace parexch;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <bool Parallel>
void BM_Add(benchmark::State& state) {
  auto a = random_values(static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_values(a.size(), 2);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::add<float>(a, b);
    } else {
      kernels::serial::add<float>(a, b);
    }
    benchmark::DoNotOptimize(a.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(a.size() * sizeof(float) * 2));
}

template <bool Parallel>
void BM_ToHalf(benchmark::State& state) {
  const auto a = random_values(static_cast<std::size_t>(state.range(0)), 3);
  std::vector<Half> h(a.size());
  for (auto _ : state) {
    bool ok = false;
    if constexpr (Parallel) {
      ok = kernels::omp::to_half<float>(a, h);
    } else {
      ok = kernels::serial::to_half<float>(a, h);
    }
    benchmark::DoNotOptimize(ok);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Preprocess(benchmark::State& state) {
  RawBatch raw;
  raw.n = static_cast<std::uint32_t>(state.range(0));
  raw.channels = 3;
  raw.height = raw.width = 64;
  raw.pixels.resize(raw.n * raw.example_size());
  Rng rng(4);
  for (auto& p : raw.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const MeanImage mean = compute_mean_image({raw});
  const CropSpec crop{56, 56};
  for (auto _ : state) {
    auto out = Parallel ? preprocess(raw, mean, LoadMode::kTrain, crop, 9)
                        : preprocess_serial(raw, mean, LoadMode::kTrain, crop, 9);
    benchmark::DoNotOptimize(out.x.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_Add<false>)->Name("add/serial")->Arg(1 << 12)->Arg(1 << 20)->Arg(1 << 24);
BENCHMARK(BM_Add<true>)->Name("add/omp")->Arg(1 << 12)->Arg(1 << 20)->Arg(1 << 24);
BENCHMARK(BM_ToHalf<false>)->Name("to_half/serial")->Arg(1 << 20);
BENCHMARK(BM_ToHalf<true>)->Name("to_half/omp")->Arg(1 << 20);
BENCHMARK(BM_Preprocess<false>)->Name("preprocess/serial")->Arg(64);
BENCHMARK(BM_Preprocess<true>)->Name("preprocess/omp")->Arg(64);

}  // namespace

BENCHMARK_MAIN();
