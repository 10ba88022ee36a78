#include "texsyn/gan.hpp"

#include <cmath>

#include "texsyn/descriptors.hpp"

namespace texsyn::gan {

// ---- latent ---------------------------------------------------------------------

SpatialLatent SpatialLatent::sample(std::size_t rows, std::size_t cols, std::size_t dim,
                                    LatentDistribution dist, nn::Rng& rng) {
  if (rows == 0 || cols == 0 || dim == 0) {
    throw ContractError("latent grid extents must be >= 1");
  }
  std::vector<double> v(rows * cols * dim);
  if (dist == LatentDistribution::kUniform) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& x : v) x = u(rng);
  } else {
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : v) x = n(rng);
  }
  return {rows, cols, dim, Tensor({rows * cols, dim}, std::move(v))};
}

// ---- blocks --------------------------------------------------------------------

TransformerBlock TransformerBlock::init(const TrainRunConfig& c, nn::Rng& rng) {
  TransformerBlock b;
  b.norm1 = nn::LayerNorm::init(c.feature_dim);
  b.attn = attention::AttentionBlockParams::init(c.feature_dim, c.heads, c.init_std, rng);
  b.norm2 = nn::LayerNorm::init(c.feature_dim);
  b.ff = nn::FeedForward::init(c.feature_dim, c.hidden_dim, c.init_std, rng);
  return b;
}

void TransformerBlock::collect(const std::string& prefix, nn::ParamList& params) const {
  norm1.collect(prefix + ".norm1", params);
  attn.collect(prefix + ".attn", params);
  norm2.collect(prefix + ".norm2", params);
  ff.collect(prefix + ".ff", params);
}

// ---- generator -------------------------------------------------------------------

Generator::Generator(const TrainRunConfig& config, nn::Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.feature_dim;
  const std::size_t grid = config_.latent_grid();
  input_ = nn::Linear::init(config_.latent_dim, d, config_.init_std, rng);
  position_ = Tensor::zeros({grid * grid, d}, true);
  for (std::size_t i = 0; i < config_.blocks; ++i)
    blocks_.push_back(TransformerBlock::init(config_, rng));
  output_ = nn::Linear::init(d, config_.patch * config_.patch * 3, config_.init_std, rng);
}

SpatialLatent Generator::sample_latent(std::size_t rows, std::size_t cols,
                                       nn::Rng& rng) const {
  return SpatialLatent::sample(rows, cols, config_.latent_dim, config_.latent, rng);
}

Tensor Generator::generate(const SpatialLatent& z) const {
  if (!z.z.defined() || z.dim != config_.latent_dim || z.rows == 0 || z.cols == 0 ||
      z.z.shape() != Shape{z.rows * z.cols, z.dim}) {
    throw DimensionError("generate: latent must be [" + std::to_string(z.rows) + "*" +
                         std::to_string(z.cols) + " x " + std::to_string(config_.latent_dim) +
                         "], got " + (z.z.defined() ? shape_str(z.z.shape()) : "undefined"));
  }
  const std::size_t d = config_.feature_dim;
  const std::size_t grid = config_.latent_grid();
  const std::size_t n = z.rows * z.cols;
  std::vector<std::size_t> idx(n * d);
  for (std::size_t gy = 0; gy < z.rows; ++gy)
    for (std::size_t gx = 0; gx < z.cols; ++gx) {
      const std::size_t src = (gy % grid) * grid + gx % grid;
      for (std::size_t k = 0; k < d; ++k) idx[(gy * z.cols + gx) * d + k] = src * d + k;
    }
  Tensor x = add(input_(z.z), gather(position_, idx, {n, d}));
  for (const TransformerBlock& b : blocks_) {
    x = add(x, attention::standard_attention(b.norm1(x), b.attn).output);
    x = add(x, b.ff(b.norm2(x)));
  }
  return fold_patches(sigmoid(output_(x)), z.rows, z.cols, config_.patch, 3);
}

nn::ParamList Generator::parameters() const {
  nn::ParamList p;
  input_.collect("input", p);
  p.emplace_back("position", position_);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect("block" + std::to_string(i), p);
  output_.collect("output", p);
  return p;
}

// ---- discriminator ---------------------------------------------------------------

Discriminator::Discriminator(const TrainRunConfig& config, nn::Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.feature_dim;
  const std::size_t p = config_.patch;
  grid_ = make_patch_grid(config_.resolution, config_.resolution, p, config_.overlap);
  embed_ = nn::Linear::init(p * p * 3, d, config_.init_std, rng);
  position_ = Tensor::zeros({grid_.count(), d}, true);
  if (config_.descriptor == DescriptorMode::kMuSigma)
    gap_proj_ = nn::Linear::init(p * p, d, config_.init_std, rng);
  if (config_.descriptor == DescriptorMode::kTexton)
    texton_proj_ = nn::Linear::init(descriptors::kFeatureLength, d, config_.init_std, rng);
  for (std::size_t i = 0; i < config_.blocks; ++i)
    blocks_.push_back(TransformerBlock::init(config_, rng));
  norm_ = nn::LayerNorm::init(d);
  head_ = nn::Linear::init(d, 1, config_.init_std, rng);
}

DiscriminatorOutput Discriminator::forward(const Tensor& image,
                                           const Tensor& real_reference) const {
  const Shape expected{config_.resolution, config_.resolution, 3};
  if (!image.defined() || image.shape() != expected) {
    throw DimensionError("discriminate: expected image " + shape_str(expected) + ", got " +
                         (image.defined() ? shape_str(image.shape()) : "undefined"));
  }
  const auto seq = attention::embed_patches(image, config_.patch, config_.overlap, embed_,
                                            position_);
  Tensor x = seq.tokens;

  Tensor condition;
  switch (config_.descriptor) {
    case DescriptorMode::kMuSigma: {
      if (!real_reference.defined()) {
        throw ContractError("discriminate: musigma mode needs a real reference image");
      }
      if (real_reference.shape() != expected) {
        throw DimensionError("discriminate: real reference " +
                             shape_str(real_reference.shape()) + " does not match " +
                             shape_str(expected));
      }
      const attention::DescriptorPair pair{
          descriptors::image_mu_sigma(real_reference.detach(), grid_),
          descriptors::image_mu_sigma(image, grid_)};
      condition = gap_proj_(attention::descriptor_gap(pair));
      break;
    }
    case DescriptorMode::kTexton:
      condition = descriptors::patch_texton_features(image, grid_);
      break;
    case DescriptorMode::kNone:
      break;
  }

  DiscriminatorOutput out;
  for (const TransformerBlock& b : blocks_) {
    attention::AttentionResult a;
    switch (config_.descriptor) {
      case DescriptorMode::kMuSigma:
        a = attention::l2_attention(condition, b.attn);
        break;
      case DescriptorMode::kTexton:
        a = attention::texton_attention(condition, texton_proj_, b.attn);
        break;
      case DescriptorMode::kNone:
        a = attention::l2_attention(b.norm1(x), b.attn);
        break;
    }
    x = add(x, a.output);
    x = add(x, b.ff(b.norm2(x)));
    out.attention.push_back(std::move(a.weights));
  }
  out.probabilities = reshape(sigmoid(head_(norm_(x))), {grid_.rows, grid_.cols});
  return out;
}

nn::ParamList Discriminator::parameters() const {
  nn::ParamList p;
  embed_.collect("embed", p);
  p.emplace_back("position", position_);
  if (gap_proj_.weight.defined()) gap_proj_.collect("gap_proj", p);
  if (texton_proj_.weight.defined()) texton_proj_.collect("texton_proj", p);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect("block" + std::to_string(i), p);
  norm_.collect("norm", p);
  head_.collect("head", p);
  return p;
}

// ---- loss -----------------------------------------------------------------------

namespace {

Tensor mean_log(const Tensor& p) { return mean_all(log(clamp_min(p, kProbabilityEps))); }

Tensor one_minus(const Tensor& p) { return add_scalar(neg(p), 1.0); }

}  // namespace

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  if (d_real.shape() != d_fake.shape()) {
    throw DimensionError("sgan_loss: grid mismatch " + shape_str(d_real.shape()) + " vs " +
                         shape_str(d_fake.shape()));
  }
  return neg(add(mean_log(one_minus(d_fake)), mean_log(d_real)));
}

Tensor generator_loss(const Tensor& d_fake, GeneratorLossForm form) {
  if (form == GeneratorLossForm::kMinimax) return mean_log(one_minus(d_fake));
  return neg(mean_log(d_fake));
}

SganLoss sgan_loss(const Tensor& d_real, const Tensor& d_fake, GeneratorLossForm form) {
  SganLoss out;
  out.loss_d = discriminator_loss(d_real, d_fake);
  out.value = neg(out.loss_d);
  out.loss_g = generator_loss(d_fake, form);
  return out;
}

// ---- adam -----------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(nn::ParamList params, AdamConfig config)
    : params_(std::move(params)), config_(config), states_(params_.size()) {}

void Adam::step() {
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    std::span<const double> g = p.grad();
    if (g.empty()) {
      zeros.assign(p.size(), 0.0);
      g = zeros;
    }
    adam_step(p.mutable_values(), g, states_[i], config_);
    p.zero_grad();
  }
}

}  // namespace texsyn::gan
