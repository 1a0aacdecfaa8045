// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Small models with analytic gradients. Parameters live in one flat buffer:
// layers in forward order, each as [weights row-major (out x in), bias].
//
//   linear    y = W x + b, loss = mean over examples of 0.5 * ||y - t||^2
//   logistic  softmax(W x + b), mean cross-entropy
//   mlp       softmax(W2 tanh(W1 x + b1) + b2), mean cross-entropy

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "parexch/buffer.hpp"

namespace parexch {

enum class ModelKind { kLinear, kLogistic, kMlp };

const char* model_name(ModelKind k);
ModelKind parse_model(const std::string& name);

struct LayerLayout {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::kLogistic;
  int input_dim = 1;
  int output_dim = 1;
  int hidden_units = 0;  // mlp only

  std::vector<LayerLayout> layout() const;
  std::size_t param_count() const;
};

// Rows of x are examples. Classification models read `labels`; the linear
// model regresses onto `targets` (n x output_dim).
template <typename T>
struct Batch {
  std::size_t n = 0;
  int dim = 0;
  std::vector<T> x;
  std::vector<std::int32_t> labels;
  std::vector<T> targets;

  friend bool operator==(const Batch&, const Batch&) = default;
};

template <typename T>
using Dataset = Batch<T>;

template <typename T>
struct LossGrad {
  T loss = T{0};
  Buffer<T> grad;
};

template <typename T>
LossGrad<T> forward_backward(const ModelSpec& spec, const Buffer<T>& params, const Batch<T>& batch);

template <typename T>
T loss_only(const ModelSpec& spec, const Buffer<T>& params, const Batch<T>& batch);

struct Evaluation {
  double loss = 0.0;
  double error_rate = 0.0;
};

// Top-1 error; for the linear model the predicted class is the arg-max output.
template <typename T>
Evaluation evaluate(const ModelSpec& spec, const Buffer<T>& params, const Dataset<T>& data);

template <typename T>
Buffer<T> init_params(const ModelSpec& spec, std::uint64_t seed);

struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t n = 256;
  int input_dim = 8;
  int classes = 4;
  double difficulty = 0.0;
};

// Seeded blobs along a random direction. At difficulty 0 the per-class noise
// is bounded and classes are linearly separable; higher values add Gaussian
// noise scaled by the class spacing. Targets are one-hot labels.
template <typename T>
Dataset<T> make_synthetic(const SyntheticSpec& spec);

// The listed rows, in the given order.
template <typename T>
Batch<T> take_rows(const Dataset<T>& data, const std::vector<std::size_t>& rows);

template <typename T>
Batch<T> concat_batches(const std::vector<Batch<T>>& parts);

}  // namespace parexch
