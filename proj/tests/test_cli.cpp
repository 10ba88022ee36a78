#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "memorize.hpp"
#include "texsyn/gan.hpp"
#include "texsyn/image.hpp"

namespace fs = std::filesystem;
using namespace texsyn;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "texsyn_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const fs::path out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = std::string("'") + TEXSYN_CLI_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Small network so that CLI training runs take well under a second per step.
fs::path tiny_config(const std::string& name, const std::string& extra = "") {
  const fs::path p = workdir() / name;
  std::ofstream(p) << R"({"resolution": 16, "feature_dim": 16, "hidden_dim": 32, "heads": 2,
    "latent_dim": 8, "overlap": 0, "eval_every": 2, "eval_samples": 2)" + extra + "}";
  return p;
}

fs::path exemplar() {
  const fs::path p = workdir() / "board.png";
  if (!fs::exists(p)) save_png(checkerboard(24, 24, 4), p);
  return p;
}

}  // namespace

TEST_CASE("cli: extract on a constant white image") {
  const fs::path img = workdir() / "white.png";
  save_png(Tensor::full({8, 8, 3}, 1.0), img);

  const fs::path ms = workdir() / "white_ms.json";
  Run r = cli("extract " + q(img) + " --mode musigma --out " + q(ms));
  REQUIRE(r.code == 0);
  const json j = json::parse(slurp(ms));
  CHECK(j["grid"]["rows"] == 2);
  for (const auto& row : j["mean"])
    for (double v : row) CHECK(v == 1.0);
  for (const auto& row : j["variance"])
    for (double v : row) CHECK(v == 0.0);

  const fs::path tx = workdir() / "white_tx.json";
  r = cli("extract " + q(img) + " --mode texton --out " + q(tx));
  REQUIRE(r.code == 0);
  const json t = json::parse(slurp(tx));
  int nonzero = 0;
  double mass = 0.0;
  for (double v : t["histogram"]["color"]) {
    nonzero += v > 0.0;
    mass += v;
  }
  for (double v : t["histogram"]["orientation"]) mass += v;
  CHECK(nonzero == 1);
  CHECK(mass == doctest::Approx(1.0));
  CHECK(t["patches"].size() == 4);
}

TEST_CASE("cli: extract errors leave no output") {
  const fs::path out = workdir() / "never.json";
  Run r = cli("extract " + q(workdir() / "missing.png") + " --mode musigma --out " + q(out));
  CHECK(r.code == 2);
  CHECK(r.err.find("missing.png") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  r = cli("extract " + q(exemplar()) + " --mode fourier --out " + q(out));
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(out));

  r = cli("frobnicate");
  CHECK(r.code == 2);
}

TEST_CASE("cli: invalid config lists every violation") {
  const fs::path cfg = workdir() / "bad.json";
  std::ofstream(cfg) << R"({"overlap": 10, "heads": 5, "colour": 1})";
  const fs::path dir = workdir() / "bad_run";
  const Run r = cli("train " + q(exemplar()) + " --config " + q(cfg) + " --out " + q(dir));
  CHECK(r.code == 2);
  CHECK(r.err.find("overlap must be < patch size") != std::string::npos);
  CHECK(r.err.find("feature_dim must be divisible by heads") != std::string::npos);
  CHECK(r.err.find("unknown key 'colour'") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "checkpoint.bin"));
}

TEST_CASE("cli: zero-step training writes initial weights and an empty log") {
  const fs::path dir = workdir() / "zero";
  const Run r = cli("--seed 3 train " + q(exemplar()) + " --steps 0 --config " +
                    q(tiny_config("tiny0.json")) + " --out " + q(dir));
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "metrics.csv") == gan::metrics_csv_header() + "\n");
  const json m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["seed"] == 3);
  CHECK(m["config"]["steps"] == 0);
  CHECK_FALSE(m["finished"].is_null());

  gan::TrainRunConfig c = gan::TrainRunConfig::from_json(m["config"].dump());
  nn::Rng rng(c.seed);
  const gan::Generator fresh(c, rng);
  const gan::Generator loaded = gan::load_generator(dir / "checkpoint.bin");
  const auto a = fresh.parameters(), b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].second.values(), y = b[i].second.values();
    same = same && std::equal(x.begin(), x.end(), y.begin(), y.end());
  }
  CHECK(same);
}

TEST_CASE("cli: training, synthesis and evaluation are reproducible") {
  const fs::path cfg = tiny_config("tiny.json");
  const fs::path a = workdir() / "run_a", b = workdir() / "run_b";
  for (const fs::path& dir : {a, b}) {
    const Run r = cli("--seed 9 train " + q(exemplar()) + " --steps 4 --config " + q(cfg) +
                      " --descriptor texton --out " + q(dir));
    REQUIRE(r.code == 0);
  }
  const std::string csv = slurp(a / "metrics.csv");
  CHECK(csv == slurp(b / "metrics.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(json::parse(slurp(a / "manifest.json"))["config"]["descriptor"] == "texton");

  // Resuming to a later step reproduces the uninterrupted run.
  const fs::path c = workdir() / "run_c";
  REQUIRE(cli("--seed 9 train " + q(exemplar()) + " --steps 2 --config " + q(cfg) +
              " --descriptor texton --out " + q(c)).code == 0);
  REQUIRE(cli("--seed 9 train " + q(exemplar()) + " --steps 4 --config " + q(cfg) +
              " --descriptor texton --resume --out " + q(c)).code == 0);
  CHECK(slurp(c / "metrics.csv") == csv);
  CHECK(cli("--seed 10 train " + q(exemplar()) + " --steps 6 --config " + q(cfg) +
            " --descriptor texton --resume --out " + q(c)).code == 2);

  const fs::path ckpt = a / "checkpoint.bin";
  const fs::path p8 = workdir() / "s8.png", p8b = workdir() / "s8b.png", p16 = workdir() / "s16.png";
  REQUIRE(cli("--seed 5 synthesize " + q(ckpt) + " --grid 8 8 --out " + q(p8)).code == 0);
  REQUIRE(cli("--seed 5 synthesize " + q(ckpt) + " --grid 8 8 --out " + q(p8b)).code == 0);
  REQUIRE(cli("--seed 5 synthesize " + q(ckpt) + " --grid 16 16 --out " + q(p16)).code == 0);
  CHECK(load_png(p8).shape() == Shape{32, 32, 3});
  CHECK(load_png(p16).shape() == Shape{64, 64, 3});
  CHECK(slurp(p8) == slurp(p8b));
  CHECK(cli("synthesize " + q(ckpt) + " --grid 0 4 --out " + q(workdir() / "x.png")).code == 2);

  const fs::path rep = workdir() / "report.json";
  const Run e1 = cli("--seed 2 evaluate " + q(ckpt) + " " + q(exemplar()) +
                     " --samples 3 --out " + q(rep));
  REQUIRE(e1.code == 0);
  CHECK(e1.out == slurp(rep));
  CHECK(e1.out == cli("--seed 2 evaluate " + q(ckpt) + " " + q(exemplar()) + " --samples 3").out);
  const json report = json::parse(e1.out);
  CHECK(report["samples"] == 3);
  CHECK(report["dfrechet"].get<double>() >= 0.0);

  const Run small = cli("evaluate " + q(ckpt) + " " + q(exemplar()) + " --samples 1");
  CHECK(small.code == 2);
  CHECK(small.err.find("--samples >= 2") != std::string::npos);
  CHECK(cli("evaluate " + q(ckpt) + " " + q(exemplar()) + " --samples 1 --no-dfrechet").code == 0);

  const fs::path attn = workdir() / "attn.csv";
  REQUIRE(cli("attend " + q(ckpt) + " " + q(exemplar()) + " --out " + q(attn)).code == 0);
  std::istringstream lines(slurp(attn));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "head,row,col,weight");
  std::size_t rows = 0;
  double total = 0.0;
  while (std::getline(lines, line)) {
    ++rows;
    total += std::stod(line.substr(line.rfind(',') + 1));
  }
  CHECK(rows == 2 * 16 * 16);       // heads x tokens x tokens
  CHECK(total == doctest::Approx(2 * 16));  // every row sums to one
}

TEST_CASE("cli: memorizing checkpoint evaluates to ssim 1") {
  const auto config = texsyn::testing::memorizer_config();
  nn::Rng rng(1);
  const gan::Generator g(config, rng);
  const Tensor board = checkerboard(32, 32, 4, 0.2, 0.8);
  texsyn::testing::memorize(g, board);
  const fs::path ckpt = workdir() / "memo.bin", img = workdir() / "memo.png";
  gan::save_generator(g, ckpt);
  // The PNG round trip quantizes to 8 bits; reuse the quantized exemplar.
  save_png(board, img);
  texsyn::testing::memorize(g, load_png(img));
  gan::save_generator(g, ckpt);
  const Run r = cli("evaluate " + q(ckpt) + " " + q(img) + " --samples 1 --no-dfrechet");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["ssim"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cli: corrupt checkpoint is a usage error") {
  const fs::path bad = workdir() / "corrupt.bin";
  std::ofstream(bad) << "TXSYNCK1 this is not a checkpoint";
  const Run r = cli("synthesize " + q(bad) + " --out " + q(workdir() / "c.png"));
  CHECK(r.code == 2);
  CHECK(r.err.find("corrupt checkpoint") != std::string::npos);
  CHECK_FALSE(fs::exists(workdir() / "c.png"));
}
