// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Experiment configuration as a flat `key = value` text file. Blank lines
// and lines starting with '#' are ignored; unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "parexch/trainers.hpp"
#include "parexch/transport.hpp"

namespace parexch {

enum class Precision { kF32, kF64 };

const char* precision_name(Precision p);
Precision parse_precision(const std::string& name);

struct ExperimentConfig {
  ExperimentConfig() {
    train.model.input_dim = 16;
    train.model.hidden_units = 32;
  }

  TrainConfig train;
  Backend backend = Backend::kInProc;
  Precision precision = Precision::kF32;
  std::string out = "parexch_stats";

  // Synthetic data (used when data_dir is empty).
  std::size_t samples = 2048;
  std::size_t val_samples = 512;
  int classes = 4;
  double difficulty = 0.5;

  // Batch-file directory: train/*.pxb, val/*.pxb, labels.pxl, mean.pxm.
  std::string data_dir;
  std::uint32_t crop = 0;  // square crop side; 0 keeps the full image

  // -1 runs every rank in this process; otherwise this process is that rank
  // of a TCP world found through PAREXCH_RENDEZVOUS.
  int rank = -1;
  std::int64_t timeout_ms = kDefaultTimeout.count();

  void set(const std::string& key, const std::string& value);
  void validate() const;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

// Named bundles of settings, accepted as `preset = NAME`. Later keys
// override them. alexnet-like: workers 8, batch_size 128, lr 0.005.
void apply_preset(ExperimentConfig& config, const std::string& name);

// Keys in the order serialize() writes them.
const std::vector<std::string>& config_keys();

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
std::string serialize_config(const ExperimentConfig& config);

}  // namespace parexch
