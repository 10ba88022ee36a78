#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "texsyn/attention.hpp"
#include "texsyn/checkpoint.hpp"
#include "texsyn/descriptors.hpp"
#include "texsyn/gan.hpp"
#include "texsyn/image.hpp"
#include "texsyn/kernels.hpp"
#include "texsyn/metrics.hpp"

#ifndef TEXSYN_VERSION
#define TEXSYN_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace texsyn;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string out;
  bool verbose = false;
};

// Thrown for bad invocations that CLI11 cannot catch itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void note(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << "texsyn: " << msg << "\n";
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor load_image(const fs::path& path) {
  try {
    return load_png(path);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
}

std::string require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw UsageError(std::string(what) + " needs --out <path>");
  return g.out;
}

json tensor_rows(const Tensor& t) {
  json rows = json::array();
  const std::size_t cols = t.dim(1);
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    const auto v = t.values().subspan(i * cols, cols);
    rows.push_back(std::vector<double>(v.begin(), v.end()));
  }
  return rows;
}

// ---- extract ----------------------------------------------------------------------

struct ExtractArgs {
  std::string image;
  std::string mode;
  std::size_t patch = 4;
  std::size_t overlap = 0;
};

int run_extract(const Globals& g, const ExtractArgs& a) {
  const std::string out = require_out(g, "extract");
  if (a.mode != "musigma" && a.mode != "texton") {
    throw UsageError("--mode must be musigma or texton (got '" + a.mode + "')");
  }
  const Tensor image = load_image(a.image);
  const PatchGrid grid = make_patch_grid(image.dim(0), image.dim(1), a.patch, a.overlap);

  json j;
  j["image"] = a.image;
  j["mode"] = a.mode;
  j["height"] = image.dim(0);
  j["width"] = image.dim(1);
  j["grid"] = {{"patch", grid.patch}, {"overlap", grid.overlap}, {"rows", grid.rows},
               {"cols", grid.cols}};
  if (a.mode == "musigma") {
    const auto maps = descriptors::image_mu_sigma(image, grid);
    j["mean"] = tensor_rows(maps.mean_map);
    j["variance"] = tensor_rows(maps.var_map);
  } else {
    const auto f = descriptors::mth_features(image);
    j["histogram"] = {{"orientation", f.orientation}, {"color", f.color}};
    j["patches"] = tensor_rows(descriptors::patch_texton_features(image, grid));
  }
  write_file_atomic(out, j.dump(2) + "\n");
  note(g, "wrote " + out);
  return 0;
}

// ---- train --------------------------------------------------------------------------

struct TrainArgs {
  std::string exemplar;
  std::optional<long> steps;
  std::optional<std::string> descriptor;
  bool resume = false;
};

gan::TrainRunConfig train_config(const Globals& g, const TrainArgs& a) {
  gan::TrainRunConfig c;
  if (!g.config.empty()) c = gan::TrainRunConfig::from_json(read_text(g.config));
  if (a.steps) c.steps = *a.steps;
  if (g.seed_given) c.seed = g.seed;
  if (a.descriptor) c.descriptor = gan::parse_descriptor_mode(*a.descriptor);
  c.validate();
  return c;
}

std::string csv_rows(const std::vector<gan::MetricRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += gan::to_csv_line(r) + "\n";
  return s;
}

int run_train(const Globals& g, const TrainArgs& a) {
  const fs::path dir = require_out(g, "train");
  const Tensor exemplar = load_image(a.exemplar);
  fs::create_directories(dir);
  const fs::path ckpt_path = dir / "checkpoint.bin";
  const fs::path csv_path = dir / "metrics.csv";
  const fs::path manifest_path = dir / "manifest.json";

  std::optional<gan::Trainer> trainer;
  std::string previous_log;
  if (a.resume) {
    if (!fs::exists(ckpt_path)) throw UsageError("nothing to resume in '" + dir.string() + "'");
    trainer.emplace(gan::Trainer::resume(ckpt_path, exemplar));
    gan::TrainRunConfig saved = trainer->config();
    gan::TrainRunConfig requested = saved;
    if (!g.config.empty()) requested = gan::TrainRunConfig::from_json(read_text(g.config));
    if (g.seed_given) requested.seed = g.seed;
    if (a.descriptor) requested.descriptor = gan::parse_descriptor_mode(*a.descriptor);
    requested.steps = saved.steps;
    if (requested.to_json() != saved.to_json()) {
      throw UsageError("--resume keeps the checkpoint's config; only --steps may change");
    }
    if (fs::exists(csv_path)) {
      previous_log = read_text(csv_path);
      // Drop rows past the checkpoint, left behind by an interrupted run.
      std::istringstream in(previous_log);
      std::string line, kept;
      std::getline(in, line);
      kept = line + "\n";
      while (std::getline(in, line)) {
        if (!line.empty() && std::stol(line.substr(0, line.find(','))) <= trainer->step())
          kept += line + "\n";
      }
      previous_log = kept;
    }
  } else {
    trainer.emplace(train_config(g, a), exemplar);
  }
  const long target = a.steps ? *a.steps : trainer->config().steps;
  const long remaining = std::max(0L, target - trainer->step());

  gan::TrainRunConfig snapshot = trainer->config();
  snapshot.steps = target;
  json manifest;
  manifest["tool"] = "texsyn";
  manifest["version"] = TEXSYN_VERSION;
  manifest["config"] = json::parse(snapshot.to_json());
  manifest["seed"] = snapshot.seed;
  manifest["exemplar"] = a.exemplar;
  manifest["resumed_from_step"] = trainer->step();
  manifest["kernels"] = std::string(kernels::active().name);
  manifest["started"] = utc_now();
  manifest["finished"] = nullptr;
  manifest["outputs"] = {{"checkpoint", ckpt_path.string()},
                         {"metrics", csv_path.string()},
                         {"manifest", manifest_path.string()}};
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");

  auto write_log = [&] {
    const std::string head =
        previous_log.empty() ? gan::metrics_csv_header() + "\n" : previous_log;
    write_file_atomic(csv_path, head + csv_rows(trainer->log()));
  };

  try {
    trainer->run(remaining, [&](const gan::MetricRow& r) {
      if (g.verbose && (r.ssim || r.step == target)) {
        std::cerr << "texsyn: " << gan::to_csv_line(r) << "\n";
      }
    });
  } catch (const NumericalError& e) {
    write_log();
    std::cerr << "texsyn: numerical failure at step " << e.step() << ": " << e.what() << "\n";
    return kExitNumerical;
  }
  trainer->save(ckpt_path);
  write_log();
  manifest["finished"] = utc_now();
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  note(g, "trained to step " + std::to_string(trainer->step()) + " in " + dir.string());
  return 0;
}

// ---- synthesize -----------------------------------------------------------------------

struct SynthArgs {
  std::string checkpoint;
  std::vector<std::size_t> grid;
};

int run_synthesize(const Globals& g, const SynthArgs& a) {
  const std::string out = require_out(g, "synthesize");
  const gan::Generator gen = gan::load_generator(a.checkpoint);
  std::size_t rows = gen.config().latent_grid(), cols = rows;
  if (!a.grid.empty()) {
    rows = a.grid.at(0);
    cols = a.grid.at(1);
  }
  if (rows == 0 || cols == 0) throw UsageError("--grid extents must be >= 1");
  nn::Rng rng(g.seed);
  const Tensor image = gen.generate(gen.sample_latent(rows, cols, rng));
  save_png(image, out);
  note(g, "wrote " + out + " (" + shape_str(image.shape()) + ")");
  return 0;
}

// ---- evaluate -------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string exemplar;
  std::size_t samples = 16;
  bool no_dfrechet = false;
};

int run_evaluate(const Globals& g, const EvalArgs& a) {
  if (!a.no_dfrechet && a.samples < 2) {
    throw UsageError("descriptor Frechet needs --samples >= 2 (or pass --no-dfrechet)");
  }
  const gan::Generator gen = gan::load_generator(a.checkpoint);
  const Tensor exemplar = load_image(a.exemplar);
  metrics::EvaluateOptions opt;
  opt.samples = a.samples;
  opt.seed = g.seed;
  opt.with_dfrechet = !a.no_dfrechet;
  opt.exemplar_id = a.exemplar;
  const std::string report = metrics::evaluate(gen, exemplar, opt).to_json() + "\n";
  std::cout << report;
  if (!g.out.empty()) write_file_atomic(g.out, report);
  return 0;
}

// ---- attend ----------------------------------------------------------------------------

struct AttendArgs {
  std::string checkpoint;
  std::string image;
  std::string reference;
  std::size_t block = 0;
};

Tensor fit_to(const Tensor& image, std::size_t res, const std::string& name) {
  const Tensor rgb = to_rgb(image);
  if (rgb.dim(0) < res || rgb.dim(1) < res) {
    throw UsageError(name + " " + shape_str(rgb.shape()) + " is smaller than " +
                     std::to_string(res) + "x" + std::to_string(res));
  }
  return crop(rgb, 0, 0, res, res);
}

int run_attend(const Globals& g, const AttendArgs& a) {
  const std::string out = require_out(g, "attend");
  const auto ckpt = checkpoint::read(a.checkpoint);
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (!meta.contains("config")) throw ContractError("corrupt checkpoint: no config");
  const auto config = gan::TrainRunConfig::from_json(meta.at("config").dump());
  nn::Rng rng(config.seed);
  gan::Discriminator disc(config, rng);
  gan::load_parameters(a.checkpoint, "discriminator/", disc.parameters());
  if (a.block >= config.blocks) {
    throw UsageError("--block must be < " + std::to_string(config.blocks));
  }

  const Tensor image = fit_to(load_image(a.image), config.resolution, "image");
  const Tensor reference =
      a.reference.empty() ? image
                          : fit_to(load_image(a.reference), config.resolution, "reference");
  const auto result = disc.forward(image, reference);

  std::string csv = "head,row,col,weight\n";
  char buf[96];
  const auto& heads = result.attention.at(a.block);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::size_t n = heads[h].dim(0);
    const auto w = heads[h].values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.17g\n", h, i, j, w[i * n + j]);
        csv += buf;
      }
  }
  write_file_atomic(out, csv);
  note(g, "wrote " + out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Descriptor-conditioned transformer GAN for texture synthesis"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", TEXSYN_VERSION);

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) {
    g.seed_given = true;
  });
  app.add_option("--config", g.config, "Training config (JSON)");
  app.add_option("--out", g.out, "Output path");
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Write patch descriptors of an image as JSON");
  extract->add_option("image", ex.image, "Input PNG")->required();
  extract->add_option("--mode", ex.mode, "musigma or texton")->required();
  extract->add_option("--patch", ex.patch, "Patch size")->capture_default_str();
  extract->add_option("--overlap", ex.overlap, "Patch overlap")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train on an exemplar; --out is a directory");
  train->add_option("exemplar", tr.exemplar, "Exemplar PNG")->required();
  train->add_option("--steps", tr.steps, "Total iterations");
  train->add_option("--descriptor", tr.descriptor, "musigma, texton or none");
  train->add_flag("--resume", tr.resume, "Continue from the checkpoint in --out");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synthesize", "Sample a texture from a checkpoint");
  synth->add_option("checkpoint", sy.checkpoint, "Checkpoint file")->required();
  synth->add_option("--grid", sy.grid, "Latent grid rows and columns")->expected(2);

  EvalArgs ev;
  auto* eval = app.add_subcommand("evaluate", "Score samples against an exemplar");
  eval->add_option("checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval->add_option("exemplar", ev.exemplar, "Exemplar PNG")->required();
  eval->add_option("--samples", ev.samples, "Number of samples")->capture_default_str();
  eval->add_flag("--no-dfrechet", ev.no_dfrechet, "Skip the descriptor Frechet distance");

  AttendArgs at;
  auto* attend = app.add_subcommand("attend", "Dump discriminator attention weights as CSV");
  attend->add_option("checkpoint", at.checkpoint, "Trainer checkpoint")->required();
  attend->add_option("image", at.image, "Image PNG")->required();
  attend->add_option("--reference", at.reference, "Real reference PNG (musigma mode)");
  attend->add_option("--block", at.block, "Transformer block")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*extract) return run_extract(g, ex);
    if (*train) return run_train(g, tr);
    if (*synth) return run_synthesize(g, sy);
    if (*eval) return run_evaluate(g, ev);
    if (*attend) return run_attend(g, at);
  } catch (const gan::ConfigError& e) {
    std::cerr << "texsyn: invalid config\n";
    for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "texsyn: numerical failure at step " << e.step() << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const UsageError& e) {
    std::cerr << "texsyn: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::logic_error& e) {
    std::cerr << "texsyn: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    std::cerr << "texsyn: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
