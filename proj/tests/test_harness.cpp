// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "parexch/harness.hpp"

using namespace parexch;
namespace fs = std::filesystem;

namespace {

struct Cmd {
  int status = -1;
  std::string out;
};

Cmd run_cli(const std::string& args) {
  const std::string cmd = std::string(PAREXCH_CLI_PATH) + " " + args + " 2>&1";
  Cmd r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("parexch_h_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config serialization round-trips") {
  ExperimentConfig c;
  c.train.mode = TrainMode::kEasgd;
  c.train.workers = 3;
  c.train.strategy = ExchangeStrategy::kASA16;
  c.train.scheme = CombineScheme::kAWAGD;
  c.train.schedule = ScheduleKind::kPolyDecay;
  c.train.lr = 0.1 / 3.0;
  c.train.easgd = {0.3, 4};
  c.train.model.kind = ModelKind::kMlp;
  c.train.max_iterations = 77;
  c.train.seed = 18446744073709551615ULL;
  c.precision = Precision::kF64;
  c.backend = Backend::kTcp;
  c.difficulty = 1e-300;
  c.out = "some/where";
  c.data_dir = "d";
  c.crop = 5;
  const std::string text = serialize_config(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(back.train.lr == c.train.lr);
  CHECK(serialize_config(back) == text);
  for (const auto& key : config_keys()) CHECK(text.find(key + " = ") != std::string::npos);
  CHECK(parse_config("") == ExperimentConfig{});
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  const auto code = [](const std::string& text) {
    try {
      (void)parse_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::kIo;
  };
  CHECK(code("wrokers = 2\n") == Errc::kConfig);
  CHECK(code("workers = two\n") == Errc::kConfig);
  CHECK(code("workers\n") == Errc::kConfig);
  CHECK(code("seed = -1\n") == Errc::kConfig);
  CHECK(code("strategy = ring\n") == Errc::kConfig);
  CHECK(code("lr = 0.1x\n") == Errc::kConfig);
  const auto c = parse_config("# comment\n\n  workers = 4  \nlr=0.5\n");
  CHECK(c.train.workers == 4);
  CHECK(c.train.lr == 0.5);
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  c.rank = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.backend = Backend::kTcp;
  c.validate();
  c.rank = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ExperimentConfig{};
  c.classes = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ExperimentConfig{};
  c.train.model.kind = ModelKind::kMlp;
  c.train.model.hidden_units = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("command-line flags override the config file") {
  const fs::path cfg = scratch("over.cfg");
  std::ofstream(cfg) << "workers = 2\nstrategy = ar\nlr = 0.5\nmodel = linear\nout = from_file\n";
  const Cmd r = run_cli("run --config " + cfg.string() +
                        " --workers 4 --strategy asa16 --scheme awagd --mode easgd --tau 3 --alpha 0.25"
                        " --batch-size 7 --model mlp --precision f64 --backend tcp --out x --print-config");
  REQUIRE(r.status == 0);
  const ExperimentConfig c = parse_config(r.out);
  CHECK(c.train.workers == 4);
  CHECK(c.train.strategy == ExchangeStrategy::kASA16);
  CHECK(c.train.scheme == CombineScheme::kAWAGD);
  CHECK(c.train.mode == TrainMode::kEasgd);
  CHECK(c.train.easgd.tau == 3);
  CHECK(c.train.easgd.alpha == 0.25);
  CHECK(c.train.batch_size == 7);
  CHECK(c.train.model.kind == ModelKind::kMlp);
  CHECK(c.precision == Precision::kF64);
  CHECK(c.backend == Backend::kTcp);
  CHECK(c.out == "x");
  CHECK(c.train.lr == 0.5);

  CHECK(run_cli("run --config " + cfg.string() + " --strategy ring").status != 0);
  CHECK(run_cli("run --set nonsense=1").status != 0);
}

TEST_CASE("bench rows carry exact payload accounting") {
  const BenchRow asa = bench_exchange(1024, 4, ExchangeStrategy::kASA, 2);
  const BenchRow ar = bench_exchange(1024, 4, ExchangeStrategy::kAR, 2);
  const BenchRow h = bench_exchange(1024, 4, ExchangeStrategy::kASA16, 2);
  CHECK(asa.per_rank_bytes == 6144);
  CHECK(ar.rank0_bytes == 24576);
  CHECK(h.per_rank_bytes == 3072);
  CHECK(asa.mean_seconds > 0.0);
  CHECK(bench_row_csv(asa).rfind("asa,1024,4,2,", 0) == 0);
  CHECK(model_preset("alexnet") == std::size_t{60965224});
  CHECK(model_preset("googlenet") == std::size_t{13378280});
  CHECK(model_preset("vggnet") == std::size_t{138357544});
  CHECK_FALSE(model_preset("resnet"));

  const Cmd r = run_cli("bench --params 64 --workers 2 --reps 1");
  CHECK(r.status == 0);
  CHECK(r.out.find(bench_header()) == 0);
  CHECK(r.out.find("asa16,64,2,1,") != std::string::npos);
}

TEST_CASE("synthetic BSP run writes per-rank stats") {
  ExperimentConfig c;
  c.train.workers = 2;
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.train.lr = 0.1;
  c.samples = 128;
  c.val_samples = 32;
  c.out = scratch("syn").string();
  std::ostringstream log, err;
  REQUIRE(run_experiment(c, log, err) == 0);
  CHECK(err.str().empty());
  CHECK(log.str().find("rank 0: iterations=8 val_loss=") == 0);
  const std::string csv = slurp(c.out + ".rank1.csv");
  CHECK(csv.rfind("iter,epoch,loss,compute_s,exchange_s,bytes_sent\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  const auto j = nlohmann::json::parse(slurp(c.out + ".rank0.csv.summary.json"));
  CHECK(j["iterations"] == 8);
  CHECK(j["val_loss"].get<double>() > 0.0);
}

TEST_CASE("alexnet-like preset is accepted and runs") {
  const ExperimentConfig c0 = parse_config("preset = alexnet-like\n");
  CHECK(c0.train.workers == 8);
  CHECK(c0.train.batch_size == 128);
  CHECK(c0.train.lr == 0.005);
  CHECK_THROWS_AS(parse_config("preset = nope\n"), Error);

  ExperimentConfig c = parse_config("preset = alexnet-like\nsamples = 2048\niterations = 2\n");
  c.val_samples = 64;
  c.out = scratch("preset").string();
  std::ostringstream log, err;
  REQUIRE(run_experiment(c, log, err) == 0);
  CHECK(log.str().find("rank 0: iterations=2 ") == 0);

  const Cmd r = run_cli("run --preset alexnet-like --lr 0.01 --print-config");
  REQUIRE(r.status == 0);
  CHECK(r.out.find("workers = 8\n") != std::string::npos);
  CHECK(r.out.find("lr = 0.01") != std::string::npos);
}

TEST_CASE("f64 EASGD run over tcp threads") {
  ExperimentConfig c;
  c.train.mode = TrainMode::kEasgd;
  c.train.workers = 2;
  c.precision = Precision::kF64;
  c.backend = Backend::kTcp;
  c.samples = 64;
  c.val_samples = 16;
  c.out = scratch("easgd").string();
  const auto stats = run_experiment_stats(c);
  REQUIRE(stats.size() == 3);
  CHECK(stats[2].param_messages_received == stats[0].param_messages_sent + stats[1].param_messages_sent);
}

TEST_CASE("failures are reported with the failing rank") {
  ExperimentConfig c;
  c.train.workers = 2;
  c.train.lr = 1e300;
  c.train.model.kind = ModelKind::kLinear;
  c.out = scratch("fail").string();
  std::ostringstream log, err;
  CHECK(run_experiment(c, log, err) == 1);
  CHECK(err.str().find("error: rank ") == 0);
}

TEST_CASE("make-batches output trains through the file pipeline") {
  const fs::path dir = scratch("batches");
  const Cmd mk = run_cli("make-batches --out " + dir.string() + " --files 4 --val-files 1 --batch-size 8 --size 8 --channels 1 --classes 2");
  REQUIRE(mk.status == 0);
  CHECK(fs::exists(dir / "labels.pxl"));
  const Cmd r = run_cli("run --workers 2 --data-dir " + dir.string() + " --set classes=2 --set crop=6 --lr 0.001 --epochs 3 --out " +
                        (dir / "stats").string());
  INFO(r.out);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("rank 0: iterations=6") != std::string::npos);
  CHECK(fs::exists(dir / "stats.rank1.csv"));
}

TEST_CASE("in-world self checks pass on both backends") {
  for (const auto b : {Backend::kInProc, Backend::kTcp}) {
    run_world(3, b, [](Communicator& comm) {
      const auto c = check_collectives(comm, 5);
      CHECK(c.ok);
      const auto l = check_lockstep(comm, 5, 20);
      CHECK(l.ok);
    });
  }
  CHECK(check_sizes(1) == std::vector<std::size_t>{1, 1, 2, 1024, 100003});
}
