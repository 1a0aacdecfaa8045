// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Batch files on disk and a loader context that reads, mean-subtracts,
// crops and mirrors the next batch while the trainer computes on the current
// one. Trainer and loader talk over a two-rank in-process channel using
// ControlMessage:
//
//   trainer -> loader   mode(train|val|stop), filename
//   loader  -> trainer  notify (text carries an error, if any)
//
// Sending the next filename is how the trainer says it is done with the
// current input slot. An empty filename delivers the last staged batch
// without loading anything further.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "parexch/models.hpp"
#include "parexch/stats.hpp"
#include "parexch/transport.hpp"

namespace parexch {

// "PXB1", u32-LE n, c, h, w, then n*c*h*w bytes of u8 pixels.
struct RawBatch {
  std::uint32_t n = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t example_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }

  friend bool operator==(const RawBatch&, const RawBatch&) = default;
};

void write_batch_file(const std::filesystem::path& path, const RawBatch& batch);
RawBatch read_batch_file(const std::filesystem::path& path);

// "PXM1", u32-LE c, h, w, then c*h*w f32-LE values.
struct MeanImage {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;

  friend bool operator==(const MeanImage&, const MeanImage&) = default;
};

void write_mean_image(const std::filesystem::path& path, const MeanImage& mean);
MeanImage read_mean_image(const std::filesystem::path& path);
MeanImage compute_mean_image(const std::vector<RawBatch>& batches);

// Labels stay in memory for the whole run: "PXL1", u32-LE file count, then
// per file u32-LE batch index, u32-LE n, n x i32-LE labels.
using LabelIndex = std::map<std::uint32_t, std::vector<std::int32_t>>;

void write_label_index(const std::filesystem::path& path, const LabelIndex& labels);
LabelIndex read_label_index(const std::filesystem::path& path);

// batch_000042.pxb
std::string batch_file_name(std::uint32_t index);
std::uint32_t batch_index_from_name(const std::string& name);
// Sorted batch files in a directory.
std::vector<std::string> list_batch_files(const std::filesystem::path& dir);

enum class LoadMode { kTrain, kVal };

struct CropSpec {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
};

// Mean subtraction, then a crop of `crop` (random offset in train mode,
// centered in val mode) and, in train mode only, a horizontal mirror with
// probability 1/2. Each example draws from its own stream derived from
// (seed, example position).
// Output rows are c x crop.height x crop.width.
Batch<float> preprocess(const RawBatch& raw, const MeanImage& mean, LoadMode mode, CropSpec crop,
                        std::uint64_t seed);
// Single-threaded reference for the above.
Batch<float> preprocess_serial(const RawBatch& raw, const MeanImage& mean, LoadMode mode, CropSpec crop,
                               std::uint64_t seed);

struct LoaderOptions {
  MeanImage mean;
  CropSpec crop;
  // Extra sleep after each file load.
  Millis injected_latency{0};
};

// Staging is written only by the loader; input is written by the loader only
// between receiving the next filename and sending notify.
struct LoaderSlots {
  Batch<float> staging;
  Batch<float> input;
};

// Loader side of the control protocol. `ctrl` is the loader's end of a
// two-rank channel whose rank 0 is the trainer. A mode message's text holds
// the decimal seed for that phase; the batch at position p within the phase
// is preprocessed with derive_seed(phase_seed, p).
void loader_loop(Communicator& ctrl, LoaderSlots& slots, const LoaderOptions& options);

using BatchCallback = std::function<void(std::size_t position, const Batch<float>& batch)>;

// Owns a loader context for the lifetime of the object.
class Loader {
 public:
  explicit Loader(LoaderOptions options);
  ~Loader();

  Loader(const Loader&) = delete;
  Loader& operator=(const Loader&) = delete;

  // Streams `files` through the loader, calling `on_batch` in file order while
  // the next file is prepared in the background.
  RunStats run_phase(const std::vector<std::string>& files, LoadMode mode, std::uint64_t seed,
                     const BatchCallback& on_batch);

 private:
  std::unique_ptr<Communicator> trainer_end_;
  std::unique_ptr<Communicator> loader_end_;
  LoaderSlots slots_;
  LoaderOptions options_;
  std::thread thread_;
  std::string loader_error_;
};

// One phase through a fresh loader.
RunStats pipelined_epoch(const BatchCallback& on_batch, const std::vector<std::string>& files, LoadMode mode,
                         std::uint64_t seed, const LoaderOptions& options);

// Load and preprocess inline, one file at a time. Reference for the pipeline.
RunStats serial_epoch(const BatchCallback& on_batch, const std::vector<std::string>& files, LoadMode mode,
                      std::uint64_t seed, const LoaderOptions& options);

}  // namespace parexch
