// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parexch/random.hpp"

namespace parexch {

const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::kLinear: return "linear";
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kMlp: return "mlp";
  }
  return "?";
}

ModelKind parse_model(const std::string& name) {
  if (name == "linear") return ModelKind::kLinear;
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp") return ModelKind::kMlp;
  throw Error(Errc::kConfig, "unknown model '" + name + "'");
}

std::vector<LayerLayout> ModelSpec::layout() const {
  if (input_dim < 1 || output_dim < 1) throw Error(Errc::kShapeMismatch, "model dimensions must be positive");
  std::vector<std::pair<int, int>> shapes;
  if (kind == ModelKind::kMlp) {
    if (hidden_units < 1) throw Error(Errc::kShapeMismatch, "mlp needs hidden_units >= 1");
    shapes = {{input_dim, hidden_units}, {hidden_units, output_dim}};
  } else {
    shapes = {{input_dim, output_dim}};
  }
  std::vector<LayerLayout> out;
  std::size_t offset = 0;
  for (auto [in, o] : shapes) {
    LayerLayout l;
    l.in = in;
    l.out = o;
    l.weight_offset = offset;
    offset += static_cast<std::size_t>(in) * static_cast<std::size_t>(o);
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(o);
    out.push_back(l);
  }
  return out;
}

std::size_t ModelSpec::param_count() const {
  const auto l = layout();
  return l.back().bias_offset + static_cast<std::size_t>(l.back().out);
}

namespace {

template <typename T>
void check_shapes(const ModelSpec& spec, const Buffer<T>& params, const Batch<T>& batch) {
  if (params.size() != spec.param_count()) {
    throw Error(Errc::kShapeMismatch, "parameter buffer has " + std::to_string(params.size()) + " values, model needs " +
                                          std::to_string(spec.param_count()));
  }
  if (batch.dim != spec.input_dim || batch.x.size() != batch.n * static_cast<std::size_t>(batch.dim)) {
    throw Error(Errc::kShapeMismatch, "batch input shape does not match the model");
  }
  if (batch.n == 0) throw Error(Errc::kShapeMismatch, "empty batch");
  if (spec.kind == ModelKind::kLinear) {
    if (batch.targets.size() != batch.n * static_cast<std::size_t>(spec.output_dim)) {
      throw Error(Errc::kShapeMismatch, "linear model needs n x output_dim targets");
    }
  } else {
    if (batch.labels.size() != batch.n) throw Error(Errc::kShapeMismatch, "one label per example required");
    for (auto y : batch.labels) {
      if (y < 0 || y >= spec.output_dim) throw Error(Errc::kShapeMismatch, "label out of range");
    }
  }
}

// out = W x + b for one example.
template <typename T>
void affine(const LayerLayout& l, const T* params, const T* x, T* out) {
  for (int o = 0; o < l.out; ++o) {
    const T* w = params + l.weight_offset + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
    T acc = params[l.bias_offset + static_cast<std::size_t>(o)];
    for (int i = 0; i < l.in; ++i) acc += w[i] * x[i];
    out[o] = acc;
  }
}

// grad_W += delta x^T, grad_b += delta; grad_x (optional) = W^T delta.
template <typename T>
void affine_backward(const LayerLayout& l, const T* params, const T* x, const T* delta, T* grad, T* grad_x) {
  for (int o = 0; o < l.out; ++o) {
    const std::size_t row = l.weight_offset + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
    for (int i = 0; i < l.in; ++i) grad[row + static_cast<std::size_t>(i)] += delta[o] * x[i];
    grad[l.bias_offset + static_cast<std::size_t>(o)] += delta[o];
  }
  if (grad_x != nullptr) {
    for (int i = 0; i < l.in; ++i) grad_x[i] = T{0};
    for (int o = 0; o < l.out; ++o) {
      const std::size_t row = l.weight_offset + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
      for (int i = 0; i < l.in; ++i) grad_x[i] += params[row + static_cast<std::size_t>(i)] * delta[o];
    }
  }
}

// Cross-entropy of softmax(z) against `label`; writes softmax - onehot to delta.
template <typename T>
T softmax_xent(const T* z, int classes, int label, T* delta) {
  const T zmax = *std::max_element(z, z + classes);
  T denom = T{0};
  for (int c = 0; c < classes; ++c) {
    delta[c] = std::exp(z[c] - zmax);
    denom += delta[c];
  }
  for (int c = 0; c < classes; ++c) delta[c] /= denom;
  const T loss = std::log(denom) - (z[label] - zmax);
  delta[label] -= T{1};
  return loss;
}

// Per-example forward (and optionally backward, accumulated into grad).
// Returns the example's loss and writes its outputs to `out`.
template <typename T>
T example_pass(const ModelSpec& spec, const std::vector<LayerLayout>& layers, const T* params, const Batch<T>& batch,
               std::size_t row, T* out, T* grad, std::vector<T>& scratch) {
  const T* x = batch.x.data() + row * static_cast<std::size_t>(batch.dim);
  const int classes = spec.output_dim;
  scratch.assign(static_cast<std::size_t>(classes) * 2 + static_cast<std::size_t>(spec.hidden_units) * 3, T{0});
  T* delta = scratch.data();
  T* hidden = delta + classes;
  T* hidden_delta = hidden + spec.hidden_units;
  T* hidden_grad = hidden_delta + spec.hidden_units;
  T* z = hidden_grad + spec.hidden_units;

  T loss = T{0};
  switch (spec.kind) {
    case ModelKind::kLinear: {
      affine(layers[0], params, x, z);
      const T* t = batch.targets.data() + row * static_cast<std::size_t>(classes);
      for (int o = 0; o < classes; ++o) {
        delta[o] = z[o] - t[o];
        loss += T{0.5} * delta[o] * delta[o];
      }
      if (grad != nullptr) affine_backward<T>(layers[0], params, x, delta, grad, nullptr);
      break;
    }
    case ModelKind::kLogistic: {
      affine(layers[0], params, x, z);
      loss = softmax_xent(z, classes, batch.labels[row], delta);
      if (grad != nullptr) affine_backward<T>(layers[0], params, x, delta, grad, nullptr);
      break;
    }
    case ModelKind::kMlp: {
      affine(layers[0], params, x, hidden);
      for (int h = 0; h < spec.hidden_units; ++h) hidden[h] = std::tanh(hidden[h]);
      affine(layers[1], params, hidden, z);
      loss = softmax_xent(z, classes, batch.labels[row], delta);
      if (grad != nullptr) {
        affine_backward<T>(layers[1], params, hidden, delta, grad, hidden_grad);
        for (int h = 0; h < spec.hidden_units; ++h) hidden_delta[h] = hidden_grad[h] * (T{1} - hidden[h] * hidden[h]);
        affine_backward<T>(layers[0], params, x, hidden_delta, grad, nullptr);
      }
      break;
    }
  }
  if (out != nullptr) std::copy(z, z + classes, out);
  return loss;
}


}  // namespace

template <typename T>
LossGrad<T> forward_backward(const ModelSpec& spec, const Buffer<T>& params, const Batch<T>& batch) {
  check_shapes(spec, params, batch);
  const auto layers = spec.layout();
  LossGrad<T> result{T{0}, Buffer<T>(params.size())};
  std::vector<T> scratch;
  T* grad = result.grad.data();
  T total = T{0};
  for (std::size_t row = 0; row < batch.n; ++row) {
    total += example_pass<T>(spec, layers, params.data(), batch, row, nullptr, grad, scratch);
  }
  const T inv_n = T{1} / static_cast<T>(batch.n);
  scale_inplace(result.grad, inv_n);
  result.loss = total / static_cast<T>(batch.n);
  return result;
}

template <typename T>
T loss_only(const ModelSpec& spec, const Buffer<T>& params, const Batch<T>& batch) {
  check_shapes(spec, params, batch);
  const auto layers = spec.layout();
  std::vector<T> scratch;
  T total = T{0};
  for (std::size_t row = 0; row < batch.n; ++row) {
    total += example_pass<T>(spec, layers, params.data(), batch, row, nullptr, nullptr, scratch);
  }
  return total / static_cast<T>(batch.n);
}

template <typename T>
Evaluation evaluate(const ModelSpec& spec, const Buffer<T>& params, const Dataset<T>& data) {
  check_shapes(spec, params, data);
  const auto layers = spec.layout();
  const auto n = static_cast<std::ptrdiff_t>(data.n);
  const int classes = spec.output_dim;
  std::vector<double> losses(data.n);
  std::vector<unsigned char> wrong(data.n);

  // Per-example in parallel, serial reduction.
#pragma omp parallel
  {
    std::vector<T> scratch;
    std::vector<T> out(static_cast<std::size_t>(classes));
#pragma omp for schedule(static)
    for (std::ptrdiff_t row = 0; row < n; ++row) {
      const auto r = static_cast<std::size_t>(row);
      losses[r] = static_cast<double>(example_pass<T>(spec, layers, params.data(), data, r, out.data(), nullptr, scratch));
      const auto pred = static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
      int truth = 0;
      if (spec.kind == ModelKind::kLinear) {
        const T* t = data.targets.data() + r * static_cast<std::size_t>(classes);
        truth = static_cast<int>(std::max_element(t, t + classes) - t);
      } else {
        truth = data.labels[r];
      }
      wrong[r] = pred != truth ? 1 : 0;
    }
  }
  Evaluation e;
  std::size_t errors = 0;
  for (std::size_t r = 0; r < data.n; ++r) {
    e.loss += losses[r];
    errors += wrong[r];
  }
  e.loss /= static_cast<double>(data.n);
  e.error_rate = static_cast<double>(errors) / static_cast<double>(data.n);
  return e;
}

template <typename T>
Buffer<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  Buffer<T> p(spec.param_count());
  Rng rng(derive_seed(seed, 0x1417));
  for (const auto& l : spec.layout()) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out); ++i) {
      p[l.weight_offset + i] = static_cast<T>(0.1 * scale * rng.normal());
    }
  }
  return p;
}

template <typename T>
Dataset<T> make_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.input_dim < 1 || spec.classes < 2 || spec.difficulty < 0.0) {
    throw Error(Errc::kConfig, "synthetic dataset needs n >= 1, input_dim >= 1, classes >= 2, difficulty >= 0");
  }
  Rng rng(derive_seed(spec.seed, 0xda7a));
  const auto d = static_cast<std::size_t>(spec.input_dim);
  const auto classes = static_cast<std::size_t>(spec.classes);

  std::vector<double> dir(d);
  double norm = 0.0;
  while (norm < 1e-6) {
    norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  }
  for (auto& v : dir) v /= norm;

  constexpr double kSpacing = 2.0;
  // |u . noise| <= h * ||u||_1 <= h * sqrt(d) = 0.4 * spacing < spacing / 2
  const double half_width = 0.4 * kSpacing / std::sqrt(static_cast<double>(d));
  const double sigma = spec.difficulty * kSpacing;

  std::vector<std::int32_t> labels(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) labels[i] = static_cast<std::int32_t>(i % classes);
  for (std::size_t i = spec.n; i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);

  Dataset<T> out;
  out.n = spec.n;
  out.dim = spec.input_dim;
  out.labels = labels;
  out.x.resize(spec.n * d);
  out.targets.assign(spec.n * classes, T{0});
  const double mid = (static_cast<double>(classes) - 1.0) / 2.0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double offset = (static_cast<double>(labels[i]) - mid) * kSpacing;
    for (std::size_t j = 0; j < d; ++j) {
      double v = offset * dir[j] + rng.uniform(-half_width, half_width);
      if (sigma > 0.0) v += sigma * rng.normal();
      out.x[i * d + j] = static_cast<T>(v);
    }
    out.targets[i * classes + static_cast<std::size_t>(labels[i])] = T{1};
  }
  return out;
}

template <typename T>
Batch<T> take_rows(const Dataset<T>& data, const std::vector<std::size_t>& rows) {
  Batch<T> b;
  b.n = rows.size();
  b.dim = data.dim;
  const auto d = static_cast<std::size_t>(data.dim);
  const std::size_t t = data.n == 0 ? 0 : data.targets.size() / data.n;
  b.x.reserve(rows.size() * d);
  for (auto r : rows) {
    if (r >= data.n) throw Error(Errc::kShapeMismatch, "row index out of range");
    b.x.insert(b.x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(r * d),
               data.x.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    if (!data.labels.empty()) b.labels.push_back(data.labels[r]);
    if (t > 0) {
      b.targets.insert(b.targets.end(), data.targets.begin() + static_cast<std::ptrdiff_t>(r * t),
                       data.targets.begin() + static_cast<std::ptrdiff_t>((r + 1) * t));
    }
  }
  return b;
}

template <typename T>
Batch<T> concat_batches(const std::vector<Batch<T>>& parts) {
  Batch<T> b;
  if (parts.empty()) return b;
  b.dim = parts.front().dim;
  for (const auto& p : parts) {
    if (p.dim != b.dim) throw Error(Errc::kShapeMismatch, "concat_batches: dims differ");
    b.n += p.n;
    b.x.insert(b.x.end(), p.x.begin(), p.x.end());
    b.labels.insert(b.labels.end(), p.labels.begin(), p.labels.end());
    b.targets.insert(b.targets.end(), p.targets.begin(), p.targets.end());
  }
  return b;
}

#define PAREXCH_INSTANTIATE(T)                                                                  \
  template LossGrad<T> forward_backward<T>(const ModelSpec&, const Buffer<T>&, const Batch<T>&); \
  template T loss_only<T>(const ModelSpec&, const Buffer<T>&, const Batch<T>&);                 \
  template Evaluation evaluate<T>(const ModelSpec&, const Buffer<T>&, const Dataset<T>&);       \
  template Buffer<T> init_params<T>(const ModelSpec&, std::uint64_t);                           \
  template Dataset<T> make_synthetic<T>(const SyntheticSpec&);                                  \
  template Batch<T> take_rows<T>(const Dataset<T>&, const std::vector<std::size_t>&);           \
  template Batch<T> concat_batches<T>(const std::vector<Batch<T>>&);

PAREXCH_INSTANTIATE(float)
PAREXCH_INSTANTIATE(double)
#undef PAREXCH_INSTANTIATE

}  // namespace parexch
