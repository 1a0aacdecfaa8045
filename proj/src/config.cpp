// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace parexch {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw Error(Errc::kConfig, "invalid value '" + value + "' for key '" + key + "'");
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (value.empty() || *end != '\0' || errno != 0) bad_value(key, value);
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || value[0] == '-' || *end != '\0' || errno != 0) bad_value(key, value);
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || *end != '\0' || errno != 0) bad_value(key, value);
  return v;
}

int to_small_int(const std::string& key, const std::string& value) {
  const auto v = to_int(key, value);
  if (v < -2147483647 || v > 2147483647) bad_value(key, value);
  return static_cast<int>(v);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* precision_name(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw Error(Errc::kConfig, "unknown precision '" + name + "'");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "mode",       "workers",     "batch_size", "scheme",       "strategy",   "schedule", "lr",
      "momentum",   "epochs",      "iterations", "seed",         "alpha",      "tau",      "model",
      "hidden",     "input_dim",   "precision",  "backend",      "out",        "samples",  "val_samples",
      "classes",    "difficulty",  "data_dir",   "crop",         "verify_every", "rank",   "timeout_ms",
  };
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  TrainConfig& t = train;
  if (key == "preset") {
    apply_preset(*this, value);
  } else if (key == "mode") {
    t.mode = parse_train_mode(value);
  } else if (key == "workers") {
    t.workers = to_small_int(key, value);
  } else if (key == "batch_size") {
    t.batch_size = to_small_int(key, value);
  } else if (key == "scheme") {
    t.scheme = parse_scheme(value);
  } else if (key == "strategy") {
    t.strategy = parse_strategy(value);
  } else if (key == "schedule") {
    t.schedule = parse_schedule(value);
  } else if (key == "lr") {
    t.lr = to_double(key, value);
  } else if (key == "momentum") {
    t.momentum = to_double(key, value);
  } else if (key == "epochs") {
    t.epochs = to_small_int(key, value);
  } else if (key == "iterations") {
    t.max_iterations = to_int(key, value);
  } else if (key == "seed") {
    t.seed = to_uint(key, value);
  } else if (key == "alpha") {
    t.easgd.alpha = to_double(key, value);
  } else if (key == "tau") {
    t.easgd.tau = to_small_int(key, value);
  } else if (key == "model") {
    t.model.kind = parse_model(value);
  } else if (key == "hidden") {
    t.model.hidden_units = to_small_int(key, value);
  } else if (key == "input_dim") {
    t.model.input_dim = to_small_int(key, value);
  } else if (key == "precision") {
    precision = parse_precision(value);
  } else if (key == "backend") {
    backend = parse_backend(value);
  } else if (key == "out") {
    out = value;
  } else if (key == "samples") {
    samples = to_uint(key, value);
  } else if (key == "val_samples") {
    val_samples = to_uint(key, value);
  } else if (key == "classes") {
    classes = to_small_int(key, value);
  } else if (key == "difficulty") {
    difficulty = to_double(key, value);
  } else if (key == "data_dir") {
    data_dir = value;
  } else if (key == "crop") {
    crop = static_cast<std::uint32_t>(to_uint(key, value));
  } else if (key == "verify_every") {
    t.verify_every = to_small_int(key, value);
  } else if (key == "rank") {
    rank = to_small_int(key, value);
  } else if (key == "timeout_ms") {
    timeout_ms = to_int(key, value);
  } else {
    throw Error(Errc::kConfig, "unknown key '" + key + "'");
  }
}

void apply_preset(ExperimentConfig& c, const std::string& name) {
  if (name == "alexnet-like") {
    c.train.workers = 8;
    c.train.batch_size = 128;
    c.train.lr = 0.005;
    return;
  }
  throw Error(Errc::kConfig, "unknown preset '" + name + "'");
}

void ExperimentConfig::validate() const {
  TrainConfig t = train;
  t.model.output_dim = classes;
  if (t.model.kind == ModelKind::kMlp && t.model.hidden_units < 1) {
    throw Error(Errc::kConfig, "mlp needs hidden >= 1");
  }
  t.validate();
  if (classes < 2) throw Error(Errc::kConfig, "classes must be >= 2");
  if (data_dir.empty() && samples == 0) throw Error(Errc::kConfig, "samples must be >= 1");
  if (val_samples == 0) throw Error(Errc::kConfig, "val_samples must be >= 1");
  if (difficulty < 0.0) throw Error(Errc::kConfig, "difficulty must be >= 0");
  if (rank < -1 || rank >= t.world_size()) throw Error(Errc::kConfig, "rank outside the world");
  if (rank >= 0 && backend != Backend::kTcp) throw Error(Errc::kConfig, "per-process ranks need the tcp backend");
  if (timeout_ms < 1) throw Error(Errc::kConfig, "timeout_ms must be >= 1");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string l = trim(line);
    if (l.empty() || l[0] == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::kConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(l.substr(0, eq)), l.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  std::ostringstream o;
  o << "mode = " << train_mode_name(t.mode) << '\n'
    << "workers = " << t.workers << '\n'
    << "batch_size = " << t.batch_size << '\n'
    << "scheme = " << scheme_name(t.scheme) << '\n'
    << "strategy = " << strategy_name(t.strategy) << '\n'
    << "schedule = " << schedule_name(t.schedule) << '\n'
    << "lr = " << fmt_double(t.lr) << '\n'
    << "momentum = " << fmt_double(t.momentum) << '\n'
    << "epochs = " << t.epochs << '\n'
    << "iterations = " << t.max_iterations << '\n'
    << "seed = " << t.seed << '\n'
    << "alpha = " << fmt_double(t.easgd.alpha) << '\n'
    << "tau = " << t.easgd.tau << '\n'
    << "model = " << model_name(t.model.kind) << '\n'
    << "hidden = " << t.model.hidden_units << '\n'
    << "input_dim = " << t.model.input_dim << '\n'
    << "precision = " << precision_name(c.precision) << '\n'
    << "backend = " << backend_name(c.backend) << '\n'
    << "out = " << c.out << '\n'
    << "samples = " << c.samples << '\n'
    << "val_samples = " << c.val_samples << '\n'
    << "classes = " << c.classes << '\n'
    << "difficulty = " << fmt_double(c.difficulty) << '\n'
    << "data_dir = " << c.data_dir << '\n'
    << "crop = " << c.crop << '\n'
    << "verify_every = " << t.verify_every << '\n'
    << "rank = " << c.rank << '\n'
    << "timeout_ms = " << c.timeout_ms << '\n';
  return o.str();
}

}  // namespace parexch
