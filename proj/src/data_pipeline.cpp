// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/data_pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <utility>

#include "parexch/random.hpp"

namespace parexch {

namespace {

using Clock = std::chrono::steady_clock;

constexpr Millis kControlTimeout{10 * 60 * 1000};

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::kIo, "short write to " + path.string());
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  void magic(const char (&m)[5]) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), m, 4) != 0) {
      throw Error(Errc::kCorruptHeader, what_ + ": bad magic, expected " + m);
    }
    pos_ = 4;
  }

  std::uint32_t u32() {
    if (pos_ + 4 > bytes_.size()) throw Error(Errc::kCorruptHeader, what_ + ": header truncated");
    std::uint32_t v = 0;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

void check_payload(const Reader& r, std::size_t expected, const std::string& what) {
  if (r.remaining() < expected) {
    throw Error(Errc::kTruncatedPayload, what + ": payload has " + std::to_string(r.remaining()) + " bytes, header says " +
                                             std::to_string(expected));
  }
  if (r.remaining() > expected) {
    throw Error(Errc::kCorruptHeader, what + ": " + std::to_string(r.remaining() - expected) + " trailing bytes");
  }
}

template <bool Parallel>
Batch<float> preprocess_impl(const RawBatch& raw, const MeanImage& mean, LoadMode mode, CropSpec crop,
                             std::uint64_t seed) {
  if (mean.channels != raw.channels || mean.height != raw.height || mean.width != raw.width) {
    throw Error(Errc::kShapeMismatch, "mean image dims differ from batch dims");
  }
  if (raw.pixels.size() != raw.n * raw.example_size()) {
    throw Error(Errc::kTruncatedPayload, "raw batch pixel count does not match its header");
  }
  const std::uint32_t ch = crop.height == 0 ? raw.height : crop.height;
  const std::uint32_t cw = crop.width == 0 ? raw.width : crop.width;
  if (ch > raw.height || cw > raw.width) {
    throw Error(Errc::kCropLargerThanImage, std::to_string(ch) + "x" + std::to_string(cw) + " crop from " +
                                                std::to_string(raw.height) + "x" + std::to_string(raw.width) + " image");
  }
  const std::size_t out_size = static_cast<std::size_t>(raw.channels) * ch * cw;
  Batch<float> out;
  out.n = raw.n;
  out.dim = static_cast<int>(out_size);
  out.x.resize(out.n * out_size);

  const auto n = static_cast<std::ptrdiff_t>(raw.n);
  const std::size_t in_size = raw.example_size();
  auto one = [&](std::ptrdiff_t e) {
    const auto idx = static_cast<std::size_t>(e);
    std::uint32_t oy = (raw.height - ch) / 2;
    std::uint32_t ox = (raw.width - cw) / 2;
    bool mirror = false;
    if (mode == LoadMode::kTrain) {
      Rng rng(derive_seed(seed, idx));
      oy = static_cast<std::uint32_t>(rng.below(raw.height - ch + 1));
      ox = static_cast<std::uint32_t>(rng.below(raw.width - cw + 1));
      mirror = rng.coin();
    }
    const std::uint8_t* src = raw.pixels.data() + idx * in_size;
    float* dst = out.x.data() + idx * out_size;
    for (std::uint32_t c = 0; c < raw.channels; ++c) {
      for (std::uint32_t y = 0; y < ch; ++y) {
        const std::size_t row = (static_cast<std::size_t>(c) * raw.height + oy + y) * raw.width + ox;
        for (std::uint32_t x = 0; x < cw; ++x) {
          const std::size_t s = row + (mirror ? cw - 1 - x : x);
          *dst++ = static_cast<float>(src[s]) - mean.values[s];
        }
      }
    }
  };
  if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < n; ++e) one(e);
  } else {
    for (std::ptrdiff_t e = 0; e < n; ++e) one(e);
  }
  return out;
}

std::uint64_t parse_seed(const std::string& text) {
  if (text.empty()) return 0;
  char* end = nullptr;
  const auto v = std::strtoull(text.c_str(), &end, 10);
  if (*end != '\0') throw Error(Errc::kProtocolViolation, "mode message seed is not a number");
  return v;
}

ControlMessage::Mode to_wire(LoadMode m) {
  return m == LoadMode::kTrain ? ControlMessage::Mode::kTrain : ControlMessage::Mode::kVal;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

// ---- file formats ----

void write_batch_file(const std::filesystem::path& path, const RawBatch& batch) {
  if (batch.n == 0) throw Error(Errc::kCorruptHeader, "batch file needs at least one example");
  if (batch.pixels.size() != batch.n * batch.example_size()) {
    throw Error(Errc::kCorruptHeader, "pixel count does not match header dims");
  }
  std::vector<std::uint8_t> out = {'P', 'X', 'B', '1'};
  put_u32(out, batch.n);
  put_u32(out, batch.channels);
  put_u32(out, batch.height);
  put_u32(out, batch.width);
  out.insert(out.end(), batch.pixels.begin(), batch.pixels.end());
  write_all(path, out);
}

RawBatch read_batch_file(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  Reader r(bytes, path.string());
  r.magic("PXB1");
  RawBatch b;
  b.n = r.u32();
  b.channels = r.u32();
  b.height = r.u32();
  b.width = r.u32();
  if (b.n == 0) throw Error(Errc::kCorruptHeader, path.string() + ": zero examples");
  check_payload(r, b.n * b.example_size(), path.string());
  b.pixels.assign(r.here(), r.here() + r.remaining());
  return b;
}

void write_mean_image(const std::filesystem::path& path, const MeanImage& mean) {
  if (mean.values.size() != static_cast<std::size_t>(mean.channels) * mean.height * mean.width) {
    throw Error(Errc::kCorruptHeader, "mean image value count does not match dims");
  }
  std::vector<std::uint8_t> out = {'P', 'X', 'M', '1'};
  put_u32(out, mean.channels);
  put_u32(out, mean.height);
  put_u32(out, mean.width);
  const auto* p = reinterpret_cast<const std::uint8_t*>(mean.values.data());
  out.insert(out.end(), p, p + mean.values.size() * sizeof(float));
  write_all(path, out);
}

MeanImage read_mean_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  Reader r(bytes, path.string());
  r.magic("PXM1");
  MeanImage m;
  m.channels = r.u32();
  m.height = r.u32();
  m.width = r.u32();
  const std::size_t count = static_cast<std::size_t>(m.channels) * m.height * m.width;
  check_payload(r, count * sizeof(float), path.string());
  m.values.resize(count);
  std::memcpy(m.values.data(), r.here(), count * sizeof(float));
  for (float v : m.values) {
    if (!std::isfinite(v)) throw Error(Errc::kNonFinite, path.string() + ": non-finite mean value");
  }
  return m;
}

MeanImage compute_mean_image(const std::vector<RawBatch>& batches) {
  if (batches.empty()) throw Error(Errc::kShapeMismatch, "no batches to average");
  MeanImage m{batches[0].channels, batches[0].height, batches[0].width, {}};
  const std::size_t size = batches[0].example_size();
  std::vector<double> sum(size, 0.0);
  std::size_t count = 0;
  for (const auto& b : batches) {
    if (b.channels != m.channels || b.height != m.height || b.width != m.width) {
      throw Error(Errc::kShapeMismatch, "batches have different dims");
    }
    for (std::size_t e = 0; e < b.n; ++e) {
      for (std::size_t i = 0; i < size; ++i) sum[i] += b.pixels[e * size + i];
    }
    count += b.n;
  }
  m.values.resize(size);
  for (std::size_t i = 0; i < size; ++i) m.values[i] = static_cast<float>(sum[i] / static_cast<double>(count));
  return m;
}

void write_label_index(const std::filesystem::path& path, const LabelIndex& labels) {
  std::vector<std::uint8_t> out = {'P', 'X', 'L', '1'};
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  for (const auto& [index, ys] : labels) {
    put_u32(out, index);
    put_u32(out, static_cast<std::uint32_t>(ys.size()));
    for (auto y : ys) put_u32(out, static_cast<std::uint32_t>(y));
  }
  write_all(path, out);
}

LabelIndex read_label_index(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  Reader r(bytes, path.string());
  r.magic("PXL1");
  LabelIndex out;
  const std::uint32_t files = r.u32();
  for (std::uint32_t f = 0; f < files; ++f) {
    const std::uint32_t index = r.u32();
    const std::uint32_t n = r.u32();
    auto& ys = out[index];
    ys.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) ys.push_back(static_cast<std::int32_t>(r.u32()));
  }
  if (r.remaining() != 0) throw Error(Errc::kCorruptHeader, path.string() + ": trailing bytes");
  return out;
}

std::string batch_file_name(std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "batch_%06u.pxb", index);
  return buf;
}

std::uint32_t batch_index_from_name(const std::string& name) {
  const std::string stem = std::filesystem::path(name).stem().string();
  const auto us = stem.rfind('_');
  const std::string digits = us == std::string::npos ? stem : stem.substr(us + 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(Errc::kCorruptHeader, "batch file name '" + name + "' carries no index");
  }
  return static_cast<std::uint32_t>(std::stoul(digits));
}

std::vector<std::string> list_batch_files(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(Errc::kIo, "not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pxb") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- preprocessing ----

Batch<float> preprocess(const RawBatch& raw, const MeanImage& mean, LoadMode mode, CropSpec crop,
                        std::uint64_t seed) {
  return preprocess_impl<true>(raw, mean, mode, crop, seed);
}

Batch<float> preprocess_serial(const RawBatch& raw, const MeanImage& mean, LoadMode mode, CropSpec crop,
                               std::uint64_t seed) {
  return preprocess_impl<false>(raw, mean, mode, crop, seed);
}

// ---- loader ----

void loader_loop(Communicator& ctrl, LoaderSlots& slots, const LoaderOptions& options) {
  constexpr int kTrainer = 0;
  auto next = [&] { return ControlMessage::decode(ctrl.recv(kTrainer)); };
  auto notify = [&](std::string error) { ctrl.send(kTrainer, ControlMessage::notify(std::move(error)).encode()); };

  try {
    std::optional<ControlMessage> pending;
    while (true) {
      ControlMessage msg = pending ? *std::exchange(pending, std::nullopt) : next();
      if (msg.kind != ControlMessage::Kind::kMode) {
        throw Error(Errc::kProtocolViolation, "loader expected a mode message");
      }
      if (msg.mode == ControlMessage::Mode::kStop) break;
      const LoadMode mode = msg.mode == ControlMessage::Mode::kTrain ? LoadMode::kTrain : LoadMode::kVal;
      const std::uint64_t phase_seed = parse_seed(msg.text);

      ControlMessage first = next();
      if (first.kind == ControlMessage::Kind::kMode) {
        pending = first;  // empty phase
        continue;
      }
      if (first.kind != ControlMessage::Kind::kFilename) {
        throw Error(Errc::kProtocolViolation, "loader expected the first filename");
      }
      std::string filename = first.text;
      std::uint64_t position = 0;
      while (true) {
        if (!filename.empty()) {
          const RawBatch raw = read_batch_file(filename);
          slots.staging = preprocess(raw, options.mean, mode, options.crop, derive_seed(phase_seed, position));
          ++position;
          if (options.injected_latency.count() > 0) std::this_thread::sleep_for(options.injected_latency);
        }
        // The next filename means the trainer is done with the current input.
        ControlMessage after = next();
        if (after.kind == ControlMessage::Kind::kMode) {
          pending = after;
          break;
        }
        if (after.kind != ControlMessage::Kind::kFilename) {
          throw Error(Errc::kProtocolViolation, "loader expected a filename or mode message");
        }
        slots.input = slots.staging;
        notify({});
        filename = after.text;
      }
    }
  } catch (const Error& e) {
    if (e.code() != Errc::kPeerClosed) {
      try {
        notify(e.what());
      } catch (const Error&) {
      }
    }
    throw;
  }
}

Loader::Loader(LoaderOptions options) : options_(std::move(options)) {
  auto ends = make_inproc_world(2);
  trainer_end_ = std::make_unique<Communicator>(std::move(ends[0]), Backend::kInProc, kControlTimeout);
  loader_end_ = std::make_unique<Communicator>(std::move(ends[1]), Backend::kInProc, kControlTimeout);
  thread_ = std::thread([this] {
    try {
      loader_loop(*loader_end_, slots_, options_);
    } catch (const std::exception& e) {
      loader_error_ = e.what();
    }
    loader_end_->shutdown();
  });
}

Loader::~Loader() {
  try {
    trainer_end_->send(1, ControlMessage::mode_message(ControlMessage::Mode::kStop).encode());
  } catch (...) {
  }
  thread_.join();
}

RunStats Loader::run_phase(const std::vector<std::string>& files, LoadMode mode, std::uint64_t seed,
                           const BatchCallback& on_batch) {
  constexpr int kLoader = 1;
  RunStats stats;
  const auto start = Clock::now();
  ControlMessage m = ControlMessage::mode_message(to_wire(mode));
  m.text = std::to_string(seed);
  trainer_end_->send(kLoader, m.encode());
  if (!files.empty()) trainer_end_->send(kLoader, ControlMessage::filename(files[0]).encode());

  for (std::size_t t = 0; t < files.size(); ++t) {
    const std::string following = t + 1 < files.size() ? files[t + 1] : std::string{};
    trainer_end_->send(kLoader, ControlMessage::filename(following).encode());
    const ControlMessage reply = ControlMessage::decode(trainer_end_->recv(kLoader));
    if (reply.kind != ControlMessage::Kind::kNotify) {
      throw Error(Errc::kProtocolViolation, "trainer expected notify from loader");
    }
    if (!reply.text.empty()) throw Error(Errc::kIo, "loader failed: " + reply.text);

    const auto t0 = Clock::now();
    on_batch(t, slots_.input);
    IterationRecord rec;
    rec.iteration = static_cast<std::int64_t>(t);
    rec.compute_seconds = seconds_since(t0);
    stats.iterations.push_back(rec);
  }
  stats.wall_seconds = seconds_since(start);
  return stats;
}

RunStats pipelined_epoch(const BatchCallback& on_batch, const std::vector<std::string>& files, LoadMode mode,
                         std::uint64_t seed, const LoaderOptions& options) {
  Loader loader(options);
  return loader.run_phase(files, mode, seed, on_batch);
}

RunStats serial_epoch(const BatchCallback& on_batch, const std::vector<std::string>& files, LoadMode mode,
                      std::uint64_t seed, const LoaderOptions& options) {
  RunStats stats;
  const auto start = Clock::now();
  for (std::size_t t = 0; t < files.size(); ++t) {
    const RawBatch raw = read_batch_file(files[t]);
    const Batch<float> batch = preprocess_serial(raw, options.mean, mode, options.crop, derive_seed(seed, t));
    if (options.injected_latency.count() > 0) std::this_thread::sleep_for(options.injected_latency);
    const auto t0 = Clock::now();
    on_batch(t, batch);
    IterationRecord rec;
    rec.iteration = static_cast<std::int64_t>(t);
    rec.compute_seconds = seconds_since(t0);
    stats.iterations.push_back(rec);
  }
  stats.wall_seconds = seconds_since(start);
  return stats;
}

}  // namespace parexch
