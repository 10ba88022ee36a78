#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "texsyn/attention.hpp"
#include "texsyn/nn.hpp"
#include "texsyn/patches.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn::gan {

enum class DescriptorMode { kMuSigma, kTexton, kNone };
enum class GeneratorLossForm { kMinimax, kNonSaturating };
enum class LatentDistribution { kUniform, kNormal };

std::string to_string(DescriptorMode mode);
std::string to_string(GeneratorLossForm form);
std::string to_string(LatentDistribution dist);
DescriptorMode parse_descriptor_mode(const std::string& s);
GeneratorLossForm parse_loss_form(const std::string& s);
LatentDistribution parse_latent_distribution(const std::string& s);

class ConfigError : public ContractError {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct TrainRunConfig {
  std::size_t resolution = 32;
  std::size_t patch = 4;
  std::size_t blocks = 1;
  std::size_t feature_dim = 384;
  std::size_t hidden_dim = 1536;
  std::size_t heads = 4;
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  long steps = 500;
  std::uint64_t seed = 0;
  DescriptorMode descriptor = DescriptorMode::kMuSigma;
  std::size_t overlap = 2;
  GeneratorLossForm generator_loss = GeneratorLossForm::kNonSaturating;
  std::size_t latent_dim = 32;
  LatentDistribution latent = LatentDistribution::kUniform;
  double init_std = 0.02;
  long eval_every = 10;
  std::size_t eval_samples = 16;

  std::size_t latent_grid() const { return resolution / patch; }

  // Every violated constraint, in a stable order. Empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;

  std::string to_json() const;
  // Unknown keys and type errors are reported as violations.
  static TrainRunConfig from_json(const std::string& text);
};

struct SpatialLatent {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t dim = 0;
  Tensor z;  // [rows*cols x dim], row-major over the grid

  static SpatialLatent sample(std::size_t rows, std::size_t cols, std::size_t dim,
                              LatentDistribution dist, nn::Rng& rng);
};

// Pre-norm transformer block: x + attn(norm1(x)), then + ff(norm2(.)).
struct TransformerBlock {
  nn::LayerNorm norm1;
  attention::AttentionBlockParams attn;
  nn::LayerNorm norm2;
  nn::FeedForward ff;

  static TransformerBlock init(const TrainRunConfig& c, nn::Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& params) const;
};

// Per-position latent -> linear -> + position -> transformer blocks with
// dot-product attention -> linear to p*p*3 pixels -> sigmoid, folded into an
// image without overlap. Position rows tile periodically over larger grids.
class Generator {
 public:
  Generator(const TrainRunConfig& config, nn::Rng& rng);

  Tensor generate(const SpatialLatent& z) const;
  SpatialLatent sample_latent(std::size_t rows, std::size_t cols, nn::Rng& rng) const;
  const TrainRunConfig& config() const { return config_; }
  nn::ParamList parameters() const;

 private:
  TrainRunConfig config_;
  nn::Linear input_;
  Tensor position_;
  std::vector<TransformerBlock> blocks_;
  nn::Linear output_;
};

struct DiscriminatorOutput {
  Tensor probabilities;                       // [rows x cols], each in (0, 1)
  std::vector<std::vector<Tensor>> attention;  // [block][head] -> [n x n]
};

// Patch embedding with one logit per patch. The attention input depends on the
// descriptor mode: the projected mean/variance gap against the real reference
// (L2 attention), projected per-patch texton histograms (dot-product
// attention), or the normalized patch tokens themselves (L2 attention).
class Discriminator {
 public:
  Discriminator(const TrainRunConfig& config, nn::Rng& rng);

  DiscriminatorOutput forward(const Tensor& image, const Tensor& real_reference = {}) const;
  Tensor discriminate(const Tensor& image, const Tensor& real_reference = {}) const {
    return forward(image, real_reference).probabilities;
  }
  const PatchGrid& grid() const { return grid_; }
  const TrainRunConfig& config() const { return config_; }
  nn::ParamList parameters() const;

 private:
  TrainRunConfig config_;
  PatchGrid grid_;
  nn::Linear embed_;
  Tensor position_;
  nn::Linear gap_proj_;
  nn::Linear texton_proj_;
  std::vector<TransformerBlock> blocks_;
  nn::LayerNorm norm_;
  nn::Linear head_;
};

// ---- loss -------------------------------------------------------------------------

inline constexpr double kProbabilityEps = 1e-7;

struct SganLoss {
  Tensor value;   // V(D, G)
  Tensor loss_d;  // -V
  Tensor loss_g;
};

// Spatially averaged adversarial objective over equal-shape probability grids.
SganLoss sgan_loss(const Tensor& d_real, const Tensor& d_fake,
                   GeneratorLossForm form = GeneratorLossForm::kNonSaturating);
Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake);
Tensor generator_loss(const Tensor& d_fake, GeneratorLossForm form);

// ---- optimizer ----------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// One bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

class Adam {
 public:
  Adam(nn::ParamList params, AdamConfig config);

  // Updates every parameter from its accumulated gradient (missing gradient
  // counts as zero), then clears the gradients.
  void step();
  const nn::ParamList& params() const { return params_; }
  std::vector<AdamState>& states() { return states_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  nn::ParamList params_;
  AdamConfig config_;
  std::vector<AdamState> states_;
};

// ---- training --------------------------------------------------------------------------

struct MetricRow {
  long step = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  std::optional<double> ssim;
  std::optional<double> dfrechet;
};

std::string metrics_csv_header();
std::string to_csv_line(const MetricRow& row);

class Trainer {
 public:
  Trainer(TrainRunConfig config, const Tensor& exemplar);

  // Runs `steps` more iterations. Throws NumericalError on a non-finite loss.
  void run(long steps, const std::function<void(const MetricRow&)>& on_row = {});

  long step() const { return step_; }
  const TrainRunConfig& config() const { return config_; }
  const Generator& generator() const { return generator_; }
  const Discriminator& discriminator() const { return discriminator_; }
  const std::vector<MetricRow>& log() const { return log_; }

  // Best-of-n SSIM and descriptor Frechet on the fixed evaluation latents.
  std::pair<double, double> evaluate_now() const;

  void save(const std::filesystem::path& path) const;
  static Trainer resume(const std::filesystem::path& path, const Tensor& exemplar);

 private:
  MetricRow iterate();

  TrainRunConfig config_;
  Tensor exemplar_;
  nn::Rng rng_;
  Generator generator_;
  Discriminator discriminator_;
  Adam adam_g_;
  Adam adam_d_;
  long step_ = 0;
  std::vector<MetricRow> log_;
  std::vector<SpatialLatent> eval_latents_;
  std::vector<Tensor> eval_real_;
};

struct TrainResult {
  Generator generator;
  std::vector<MetricRow> log;
};

TrainResult train(const TrainRunConfig& config, const Tensor& exemplar);

// Loads the generator half of a checkpoint written by Trainer::save.
Generator load_generator(const std::filesystem::path& path);

// Overwrites the values of `params` from a checkpoint's tensors with matching
// names under `prefix`; throws ContractError on missing names or shape mismatch.
void load_parameters(const std::filesystem::path& path, const std::string& prefix,
                     const nn::ParamList& params);

// Writes a checkpoint holding only a generator (plus its config).
void save_generator(const Generator& generator, const std::filesystem::path& path);

}  // namespace texsyn::gan
