#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "glf/frame.hpp"
#include "glf/manifest.hpp"
#include "glf/rng.hpp"

using namespace glf;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Runs the CLI with stdout/stderr captured to files.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "glf_cli_io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out_" + std::to_string(::getpid()) + "_" +
                              std::to_string(counter));
  const fs::path err = dir / ("err_" + std::to_string(::getpid()) + "_" +
                              std::to_string(counter));
  ++counter;
  const std::string cmd = std::string(GLF_CLI_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

struct Workspace {
  fs::path root;
  Workspace() {
    static int counter = 0;
    root = fs::temp_directory_path() /
           ("glf_cli_ws_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string dir(const std::string& name) const {
    fs::create_directories(root / name);
    return (root / name).string();
  }
  std::string file(const std::string& name) const { return (root / name).string(); }
};

void make_inputs(const std::string& dir, int count = 3, int size = 64) {
  for (int i = 0; i < count; ++i) {
    Frame f(size, size);
    Rng rng(std::uint64_t(i) + 100);
    // smooth-ish content: gradient plus noise
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        f.at(x, y) = std::uint8_t(
            std::clamp<std::int64_t>(2 * x + y + rng.below(32), 0, 255));
    save_pgm(f, dir + "/in" + std::to_string(i) + ".pgm");
  }
}

}  // namespace

TEST_CASE("usage errors exit 1 with usage text on stderr") {
  CHECK(run_cli("").exit_code == 1);
  const RunResult unknown = run_cli("prepare --nope 1");
  CHECK(unknown.exit_code == 1);
  CHECK(unknown.err.find("usage error") != std::string::npos);
  const RunResult badsub = run_cli("frobnicate");
  CHECK(badsub.exit_code == 1);
}

TEST_CASE("prepare: manifest, rates, idempotence, validation") {
  Workspace ws;
  make_inputs(ws.dir("in"));
  const std::string out = ws.dir("out");

  const RunResult r =
      run_cli("prepare --input-dir " + ws.dir("in") + " --out-dir " + out + " --qp 37");
  CHECK(r.exit_code == 0);
  const Manifest m = load_manifest(out + "/manifest.json");
  CHECK(m.entries.size() == 3);
  CHECK(fs::exists(out + "/rates.csv"));

  const std::string manifest_before = slurp(out + "/manifest.json");
  const std::string rates_before = slurp(out + "/rates.csv");
  const RunResult again =
      run_cli("prepare --input-dir " + ws.dir("in") + " --out-dir " + out + " --qp 37");
  CHECK(again.exit_code == 0);
  CHECK(slurp(out + "/manifest.json") == manifest_before);
  CHECK(slurp(out + "/rates.csv") == rates_before);

  CHECK(run_cli("prepare --input-dir " + ws.dir("in") + " --out-dir " + out +
                " --qp 60")
            .exit_code == 1);
  CHECK(run_cli("prepare --input-dir " + ws.dir("empty") + " --out-dir " + out +
                " --qp 37")
            .exit_code == 2);
}

TEST_CASE("train / filter / eval / diffmap / bdrate round trip") {
  Workspace ws;
  make_inputs(ws.dir("in"), 3, 64);
  const std::string data = ws.dir("data");
  REQUIRE(run_cli("prepare --input-dir " + ws.dir("in") + " --out-dir " + data +
                  " --qp 37")
              .exit_code == 0);
  const std::string manifest = data + "/manifest.json";

  // steps=0: checkpoint of the calibrated init
  const std::string model0 = ws.file("zero.glfc");
  const RunResult t0 = run_cli("train --manifest " + manifest +
                               " --qp 37 --steps 0 --patch 32 --batch 2 "
                               "--width-mult 0.0625 --out " +
                               model0);
  CHECK(t0.exit_code == 0);
  CHECK(fs::exists(model0));
  CHECK(fs::exists(model0 + ".loss.csv"));

  // a couple of real steps
  const std::string model = ws.file("m.glfc");
  const RunResult t1 = run_cli("train --manifest " + manifest +
                               " --qp 37 --steps 2 --patch 32 --batch 2 "
                               "--width-mult 0.0625 --seed 3 --out " +
                               model);
  CHECK(t1.exit_code == 0);

  // filter a frame whose dims are not multiples of 16
  Frame odd(100, 52);
  Rng rng(9);
  for (auto& p : odd.pixels) p = std::uint8_t(rng.below(256));
  save_pgm(odd, ws.file("odd.pgm"));
  const RunResult f = run_cli("filter --model " + model + " --in " + ws.file("odd.pgm") +
                              " --out " + ws.file("odd_f.pgm"));
  CHECK(f.exit_code == 0);
  const Frame filtered = load_pgm(ws.file("odd_f.pgm"));
  CHECK(filtered.width == 100);
  CHECK(filtered.height == 52);

  // filtering twice gives identical bytes
  REQUIRE(run_cli("filter --model " + model + " --in " + ws.file("odd.pgm") +
                  " --out " + ws.file("odd_f2.pgm"))
              .exit_code == 0);
  CHECK(slurp(ws.file("odd_f.pgm")) == slurp(ws.file("odd_f2.pgm")));

  const RunResult ev = run_cli("eval --model " + model + " --manifest " + manifest);
  CHECK(ev.exit_code == 0);
  CHECK(ev.out.find("mean gain") != std::string::npos);

  const RunResult dm = run_cli("diffmap --model-global " + model0 + " --model-local " +
                               model + " --manifest " + manifest + " --out " +
                               ws.dir("dm"));
  CHECK(dm.exit_code == 0);
  CHECK(fs::exists(ws.dir("dm") + "/report.json"));
  CHECK(dm.out.find("tie") != std::string::npos);

  // bdrate: identical curves print exactly 0.000000
  const std::string csv = ws.file("c.csv");
  {
    std::ofstream c(csv);
    c << "rate_bpp,psnr_db\n0.1,30\n0.2,33\n0.4,36\n0.8,39\n";
  }
  const RunResult bd = run_cli("bdrate --anchor " + csv + " --test " + csv);
  CHECK(bd.exit_code == 0);
  CHECK(bd.out.find("0.000000") == 0);

  // missing model file is a usage error (validated path)
  CHECK(run_cli("filter --model " + ws.file("nope.glfc") + " --in " +
                ws.file("odd.pgm") + " --out " + ws.file("x.pgm"))
            .exit_code == 1);
}

TEST_CASE("gradcheck subcommand reports per-op results") {
  const RunResult conv = run_cli("gradcheck --op conv2d/k1");
  CHECK(conv.exit_code == 0);
  CHECK(conv.out.find("PASS") != std::string::npos);
  CHECK(run_cli("gradcheck --op does_not_exist").exit_code == 2);
}
