#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "texsyn/checkpoint.hpp"
#include "texsyn/gan.hpp"
#include "texsyn/image.hpp"
#include "texsyn/metrics.hpp"

namespace texsyn::gan {
namespace {

constexpr std::uint64_t kEvalStream = 0x9e3779b97f4a7c15ULL;

Tensor random_crop(const Tensor& exemplar, std::size_t size, nn::Rng& rng) {
  std::uniform_int_distribution<std::size_t> dy(0, exemplar.dim(0) - size);
  std::uniform_int_distribution<std::size_t> dx(0, exemplar.dim(1) - size);
  const std::size_t top = dy(rng);
  const std::size_t left = dx(rng);
  return crop(exemplar, top, left, size, size);
}

// Restores requires_grad on scope exit.
class FrozenParams {
 public:
  explicit FrozenParams(const nn::ParamList& params) : params_(params) {
    nn::set_requires_grad(params_, false);
  }
  ~FrozenParams() { nn::set_requires_grad(params_, true); }

 private:
  const nn::ParamList& params_;
};

void check_finite(double value, const char* name, long step) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite ") + name + " at step " +
                             std::to_string(step),
                         step);
  }
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_params(checkpoint::Checkpoint& ckpt, const std::string& prefix,
                   const nn::ParamList& params) {
  for (const auto& [name, t] : params) {
    const auto v = t.values();
    ckpt.tensors.push_back({prefix + name, t.shape(), {v.begin(), v.end()}});
  }
}

void restore_params(const checkpoint::Checkpoint& ckpt, const std::string& prefix,
                    const nn::ParamList& params) {
  for (auto [name, t] : params) {
    const checkpoint::Entry* e = ckpt.find(prefix + name);
    if (e == nullptr) throw ContractError("checkpoint is missing tensor '" + prefix + name + "'");
    if (e->shape != t.shape()) {
      throw ContractError("checkpoint/config mismatch for '" + prefix + name + "': " +
                          shape_str(e->shape) + " vs " + shape_str(t.shape()));
    }
    auto dst = t.mutable_values();
    std::copy(e->values.begin(), e->values.end(), dst.begin());
  }
}

TrainRunConfig config_from_meta(const nlohmann::json& meta) {
  if (!meta.contains("config")) throw ContractError("corrupt checkpoint: no config");
  return TrainRunConfig::from_json(meta.at("config").dump());
}

}  // namespace

std::string metrics_csv_header() { return "step,loss_d,loss_g,ssim,dfrechet"; }

std::string to_csv_line(const MetricRow& row) {
  std::string s = std::to_string(row.step) + "," + format_real(row.loss_d) + "," +
                  format_real(row.loss_g) + ",";
  if (row.ssim) s += format_real(*row.ssim);
  s += ",";
  if (row.dfrechet) s += format_real(*row.dfrechet);
  return s;
}

Trainer::Trainer(TrainRunConfig config, const Tensor& exemplar)
    : config_((config.validate(), config)),
      exemplar_(to_rgb(exemplar.detach())),
      rng_(config_.seed),
      generator_(config_, rng_),
      discriminator_(config_, rng_),
      adam_g_(generator_.parameters(),
              {config_.lr, config_.beta1, config_.beta2, config_.adam_eps}),
      adam_d_(discriminator_.parameters(),
              {config_.lr, config_.beta1, config_.beta2, config_.adam_eps}) {
  if (exemplar_.dim(0) < config_.resolution || exemplar_.dim(1) < config_.resolution) {
    throw ContractError("exemplar " + shape_str(exemplar_.shape()) +
                        " is smaller than one " + std::to_string(config_.resolution) +
                        "x" + std::to_string(config_.resolution) + " tile");
  }
  if (config_.eval_every > 0) {
    nn::Rng eval_rng(config_.seed ^ kEvalStream);
    const std::size_t grid = config_.latent_grid();
    for (std::size_t i = 0; i < config_.eval_samples; ++i) {
      eval_latents_.push_back(generator_.sample_latent(grid, grid, eval_rng));
      eval_real_.push_back(random_crop(exemplar_, config_.resolution, eval_rng));
    }
  }
}

std::pair<double, double> Trainer::evaluate_now() const {
  std::vector<Tensor> samples;
  double best = -1.0;
  for (const SpatialLatent& z : eval_latents_) {
    samples.push_back(generator_.generate(z));
    best = std::max(best, metrics::best_crop_ssim(samples.back(), exemplar_, config_.patch));
  }
  return {best, metrics::descriptor_frechet(eval_real_, samples)};
}

MetricRow Trainer::iterate() {
  const long step = step_ + 1;
  const std::size_t grid = config_.latent_grid();
  const Tensor real = random_crop(exemplar_, config_.resolution, rng_);
  const SpatialLatent z = generator_.sample_latent(grid, grid, rng_);

  MetricRow row;
  row.step = step;
  {
    const Tensor fake = generator_.generate(z);
    GradTape tape;
    TapeScope scope(tape);
    const Tensor d_real = discriminator_.discriminate(real, real);
    const Tensor d_fake = discriminator_.discriminate(fake, real);
    const Tensor loss = discriminator_loss(d_real, d_fake);
    row.loss_d = loss.item();
    check_finite(row.loss_d, "loss_d", step);
    tape.backward(loss);
  }
  adam_d_.step();
  {
    FrozenParams frozen(adam_d_.params());
    GradTape tape;
    TapeScope scope(tape);
    const Tensor fake = generator_.generate(z);
    const Tensor loss =
        generator_loss(discriminator_.discriminate(fake, real), config_.generator_loss);
    row.loss_g = loss.item();
    check_finite(row.loss_g, "loss_g", step);
    tape.backward(loss);
  }
  adam_g_.step();
  step_ = step;

  if (config_.eval_every > 0 && step % config_.eval_every == 0) {
    const auto [s, f] = evaluate_now();
    row.ssim = s;
    row.dfrechet = f;
  }
  return row;
}

void Trainer::run(long steps, const std::function<void(const MetricRow&)>& on_row) {
  for (long i = 0; i < steps; ++i) {
    log_.push_back(iterate());
    if (on_row) on_row(log_.back());
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  checkpoint::Checkpoint ckpt;
  std::ostringstream rng_state;
  rng_state << rng_;
  nlohmann::json meta;
  meta["kind"] = "trainer";
  meta["config"] = nlohmann::json::parse(config_.to_json());
  meta["step"] = step_;
  meta["rng"] = rng_state.str();
  std::vector<long> adam_steps;
  for (const Adam* adam : {&adam_g_, &adam_d_})
    adam_steps.push_back(adam->states().empty() ? 0 : adam->states()[0].step);
  meta["adam_steps"] = adam_steps;
  ckpt.meta_json = meta.dump();
  append_params(ckpt, "generator/", generator_.parameters());
  append_params(ckpt, "discriminator/", discriminator_.parameters());
  for (const auto& [prefix, adam] :
       {std::pair{std::string("adam_g/"), &adam_g_}, std::pair{std::string("adam_d/"), &adam_d_}}) {
    for (std::size_t i = 0; i < adam->params().size(); ++i) {
      const auto& [name, t] = adam->params()[i];
      const AdamState& st = adam->states()[i];
      if (st.m.empty()) continue;
      ckpt.tensors.push_back({prefix + name + "/m", t.shape(), st.m});
      ckpt.tensors.push_back({prefix + name + "/v", t.shape(), st.v});
    }
  }
  checkpoint::write(path, ckpt);
}

Trainer Trainer::resume(const std::filesystem::path& path, const Tensor& exemplar) {
  const checkpoint::Checkpoint ckpt = checkpoint::read(path);
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "trainer") {
    throw ContractError("checkpoint '" + path.string() + "' holds no trainer state");
  }
  Trainer t(config_from_meta(meta), exemplar);
  restore_params(ckpt, "generator/", t.generator_.parameters());
  restore_params(ckpt, "discriminator/", t.discriminator_.parameters());
  const auto adam_steps = meta.at("adam_steps").get<std::vector<long>>();
  std::size_t which = 0;
  for (auto [prefix, adam] :
       {std::pair{std::string("adam_g/"), &t.adam_g_}, std::pair{std::string("adam_d/"), &t.adam_d_}}) {
    for (std::size_t i = 0; i < adam->params().size(); ++i) {
      const std::string& name = adam->params()[i].first;
      const checkpoint::Entry* m = ckpt.find(prefix + name + "/m");
      const checkpoint::Entry* v = ckpt.find(prefix + name + "/v");
      AdamState& st = adam->states()[i];
      if (m != nullptr && v != nullptr) {
        st.m = m->values;
        st.v = v->values;
        st.step = adam_steps.at(which);
      }
    }
    ++which;
  }
  std::istringstream rng_state(meta.at("rng").get<std::string>());
  rng_state >> t.rng_;
  t.step_ = meta.at("step").get<long>();
  return t;
}

TrainResult train(const TrainRunConfig& config, const Tensor& exemplar) {
  Trainer t(config, exemplar);
  t.run(config.steps);
  return {t.generator(), t.log()};
}

void save_generator(const Generator& generator, const std::filesystem::path& path) {
  checkpoint::Checkpoint ckpt;
  nlohmann::json meta;
  meta["kind"] = "generator";
  meta["config"] = nlohmann::json::parse(generator.config().to_json());
  ckpt.meta_json = meta.dump();
  append_params(ckpt, "generator/", generator.parameters());
  checkpoint::write(path, ckpt);
}

Generator load_generator(const std::filesystem::path& path) {
  const checkpoint::Checkpoint ckpt = checkpoint::read(path);
  TrainRunConfig config;
  try {
    config = config_from_meta(nlohmann::json::parse(ckpt.meta_json));
  } catch (const ConfigError& e) {
    throw ContractError(std::string("corrupt checkpoint: ") + e.what());
  }
  nn::Rng rng(config.seed);
  Generator g(config, rng);
  restore_params(ckpt, "generator/", g.parameters());
  return g;
}

void load_parameters(const std::filesystem::path& path, const std::string& prefix,
                     const nn::ParamList& params) {
  restore_params(checkpoint::read(path), prefix, params);
}

}  // namespace texsyn::gan
