#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "glf/trainer.hpp"

using namespace glf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("glf_trainer_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

NetworkConfig tiny_cfg(double mult = 0.0625) {
  NetworkConfig cfg;
  cfg.width_mult = mult;
  return cfg;
}

PairSet synthetic_pairs(int count, int size, std::uint64_t seed) {
  PairSet pairs;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Frame orig(size, size), recon(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int v = int(rng.below(200)) + 28;
        orig.at(x, y) = std::uint8_t(v);
        recon.at(x, y) =
            std::uint8_t(std::clamp<std::int64_t>(v + rng.below(13) - 6, 0, 255));
      }
    pairs.items.push_back({orig, recon, 37, "syn" + std::to_string(i)});
  }
  return pairs;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Parameter<float> p("p", {1, 1, 2, 2});
  p.value.array().setConstant(0.7f);
  Adam<float> opt({&p}, 1e-3);
  opt.step();
  CHECK((p.value.array() == 0.7f).all());
}

TEST_CASE("adam: first-step magnitude matches the closed form") {
  Parameter<double> p("p", {1, 1, 1, 1});
  p.value.data()[0] = 1.0;
  p.grad.data()[0] = 1.0;
  Adam<double> opt({&p}, 0.001);
  opt.step();
  CHECK(std::abs(1.0 - p.value.data()[0]) == doctest::Approx(0.001).epsilon(1e-6));
}

TEST_CASE("adam: second moments stay non-negative under random gradients") {
  Parameter<float> p("p", {1, 1, 4, 4});
  Adam<float> opt({&p}, 1e-3);
  Rng rng(1);
  for (int step = 0; step < 50; ++step) {
    for (std::int64_t i = 0; i < p.grad.size(); ++i)
      p.grad.data()[i] = float(rng.normal(0.0, 2.0));
    opt.step();
    CHECK(opt.second_moment(0).array().minCoeff() >= 0.0f);
  }
  CHECK(p.value.all_finite());
}

TEST_CASE("adam: non-finite gradient aborts the step and names the parameter") {
  Parameter<float> good("stem.0.conv.weight", {1, 1, 1, 1});
  Parameter<float> bad("hlf.block0.trunk.conv.weight", {1, 1, 1, 1});
  bad.grad.data()[0] = std::numeric_limits<float>::infinity();
  Adam<float> opt({&good, &bad}, 1e-3);
  const float before = bad.value.data()[0];
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("hlf.block0.trunk.conv.weight"),
                       std::runtime_error);
  CHECK(bad.value.data()[0] == before);  // nothing was applied
}

TEST_CASE("init_params: deterministic, zero biases, unit-ish layer outputs") {
  Network<float> a(tiny_cfg()), b(tiny_cfg());
  init_params(a, 42);
  init_params(b, 42);
  auto ta = a.named_tensors();
  auto tb = b.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i)
    CHECK((ta[i].second->array() == tb[i].second->array()).all());

  for (Parameter<float>* p : a.parameters())
    if (p->name.ends_with(".bias")) CHECK((p->value.array() == 0.0f).all());

  // On the unit-variance calibration batch every conv/FC output std lands
  // in [0.5, 2].
  const Tensor<float> calib = unit_calibration_batch<float>(a.config(), 42);
  a.set_mode(Mode::train);
  ForwardTrace<float> trace;
  a.forward(calib, &trace);
  std::vector<std::string> seen;
  for (const auto& [name, out] : trace.layer_outputs) {
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) continue;
    seen.push_back(name);
    const float s = std_of(out.value());
    INFO(name, " std=", s);
    CHECK(s > 0.5f);
    CHECK(s < 2.0f);
  }
}

TEST_CASE("calibrate_head: output std matches target std within 10%") {
  Network<float> net(tiny_cfg());
  init_params(net, 3);
  Rng rng(4);
  Tensor<float> x({2, 1, 32, 32}), t({2, 1, 32, 32});
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = float(rng.uniform());
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = float(rng.normal(0.01, 0.03));
  calibrate_head(net, x, t);
  net.set_mode(Mode::train);
  auto out = net.forward(x);
  const float s_r = std_of(out.r.value());
  const float s_t = std_of(t);
  CHECK(std::abs(s_r - s_t) / s_t < 0.10f);

  // Applying it again barely changes the head (fixed point within 1%).
  const Tensor<float> w1 = net.head_weight().value;
  calibrate_head(net, x, t);
  const float drift = (net.head_weight().value.array() - w1.array()).abs().maxCoeff() /
                      w1.array().abs().maxCoeff();
  CHECK(drift < 0.01f);
}

TEST_CASE("calibrate_head: all-zero target collapses the head") {
  Network<float> net(tiny_cfg());
  init_params(net, 5);
  Rng rng(6);
  Tensor<float> x({2, 1, 32, 32});
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = float(rng.uniform());
  Tensor<float> t({2, 1, 32, 32});
  calibrate_head(net, x, t);
  CHECK((net.head_weight().value.array() == 0.0f).all());
  CHECK(net.head_bias().value.data()[0] == 0.0f);
  auto out = net.forward(x);
  CHECK((out.y.value().array() == x.array()).all());
}

TEST_CASE("checkpoint: save -> load -> eval forward is bit-exact") {
  TempDir dir;
  Network<float> net(tiny_cfg());
  init_params(net, 8);
  const std::string path = dir.file("net.glfc");
  save_checkpoint(net, path);
  Network<float> loaded = load_checkpoint<float>(path);
  CHECK(loaded.parameter_count() == net.parameter_count());

  Rng rng(9);
  Tensor<float> x({1, 1, 32, 32});
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = float(rng.uniform());
  net.set_mode(Mode::eval);
  loaded.set_mode(Mode::eval);
  auto a = net.forward(x);
  auto b = loaded.forward(x);
  CHECK((a.y.value().array() == b.y.value().array()).all());
}

TEST_CASE("checkpoint: corruption is rejected with an offset") {
  TempDir dir;
  Network<float> net(tiny_cfg());
  init_params(net, 10);
  const std::string path = dir.file("net.glfc");
  save_checkpoint(net, path);

  std::string bytes = file_bytes(path);
  std::string bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir.file("bad_magic.glfc"), std::ios::binary) << bad;
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(dir.file("bad_magic.glfc")),
                       doctest::Contains("magic"), IoError);

  std::ofstream(dir.file("trunc.glfc"), std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(dir.file("trunc.glfc")),
                       doctest::Contains("offset"), IoError);

  // Damage one tensor name in place: structural mismatch.
  std::string tampered = bytes;
  const auto pos = tampered.find("stem.0.conv.weight");
  REQUIRE(pos != std::string::npos);
  tampered[pos] = 'z';
  std::ofstream(dir.file("tamper.glfc"), std::ios::binary) << tampered;
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(dir.file("tamper.glfc")),
                       doctest::Contains("unknown tensor"), IoError);
}

TEST_CASE("train: steps=0 equals init + calibration, bit-exact") {
  TempDir dir;
  const PairSet pairs = synthetic_pairs(3, 48, 11);
  TrainConfig cfg;
  cfg.network = tiny_cfg();
  cfg.steps = 0;
  cfg.batch = 2;
  cfg.patch = 32;
  cfg.seed = 123;
  cfg.checkpoint_path = dir.file("zero.glfc");
  Network<float> net(cfg.network);
  train(net, cfg, pairs);

  Network<float> manual(cfg.network);
  init_params(manual, cfg.seed);
  Rng data_rng(cfg.seed * 2 + 1);
  const PatchBatch<float> calib =
      sample_patches<float>(pairs, cfg.patch, cfg.batch, data_rng);
  calibrate_head(manual, calib.x, calib.t);

  auto ta = net.named_tensors();
  auto tb = manual.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    INFO(ta[i].first);
    CHECK((ta[i].second->array() == tb[i].second->array()).all());
  }
}

TEST_CASE("train: same seed produces byte-identical checkpoints") {
  TempDir dir;
  const PairSet pairs = synthetic_pairs(3, 48, 12);
  TrainConfig cfg;
  cfg.network = tiny_cfg();
  cfg.steps = 5;
  cfg.batch = 2;
  cfg.patch = 32;
  cfg.seed = 7;
  cfg.checkpoint_path = dir.file("a.glfc");
  cfg.loss_csv_path = dir.file("a.csv");
  Network<float> net_a(cfg.network);
  const TrainResult ra = train(net_a, cfg, pairs);
  cfg.checkpoint_path = dir.file("b.glfc");
  cfg.loss_csv_path = dir.file("b.csv");
  Network<float> net_b(cfg.network);
  const TrainResult rb = train(net_b, cfg, pairs);
  CHECK_FALSE(ra.aborted);
  CHECK(ra.losses == rb.losses);
  CHECK(file_bytes(dir.file("a.glfc")) == file_bytes(dir.file("b.glfc")));
  CHECK(file_bytes(dir.file("a.csv")) == file_bytes(dir.file("b.csv")));

  std::ifstream csv(dir.file("a.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,loss");
}

TEST_CASE("train: short run reduces the loss on a fixed patch") {
  const PairSet pairs = synthetic_pairs(1, 32, 13);
  TrainConfig cfg;
  cfg.network = tiny_cfg();
  cfg.steps = 60;
  cfg.batch = 1;
  cfg.patch = 32;
  cfg.lr = 2e-3;
  cfg.seed = 1;
  Network<float> net(cfg.network);
  const TrainResult result = train(net, cfg, pairs);
  REQUIRE_FALSE(result.aborted);
  REQUIRE(result.losses.size() == 60);
  CHECK(result.losses.back() < result.losses.front());
}

TEST_CASE("train: exploding learning rate aborts with a last-good checkpoint") {
  TempDir dir;
  const PairSet pairs = synthetic_pairs(2, 48, 14);
  TrainConfig cfg;
  cfg.network = tiny_cfg();
  cfg.steps = 60;
  cfg.batch = 2;
  cfg.patch = 32;
  cfg.lr = 1e18;  // guaranteed blow-up
  cfg.seed = 2;
  cfg.checkpoint_path = dir.file("boom.glfc");
  Network<float> net(cfg.network);
  const TrainResult result = train(net, cfg, pairs);
  CHECK(result.aborted);
  CHECK_FALSE(result.abort_reason.empty());
  CHECK(result.last_good_checkpoint == dir.file("boom.glfc"));
  // The checkpoint must load and hold finite parameters.
  Network<float> restored = load_checkpoint<float>(dir.file("boom.glfc"));
  for (Parameter<float>* p : restored.parameters()) CHECK(p->value.all_finite());
}

TEST_CASE("lr schedule: step decay halves the rate on schedule") {
  const PairSet pairs = synthetic_pairs(1, 32, 15);
  TrainConfig cfg;
  cfg.network = tiny_cfg();
  cfg.steps = 4;
  cfg.batch = 1;
  cfg.patch = 32;
  cfg.lr = 1.0e-3;
  cfg.schedule.step_decay = true;
  cfg.schedule.every = 2;
  cfg.schedule.factor = 0.5;
  Network<float> net(cfg.network);
  const TrainResult result = train(net, cfg, pairs);
  CHECK_FALSE(result.aborted);  // smoke: schedule path executes
  CHECK(result.losses.size() == 4);
}
