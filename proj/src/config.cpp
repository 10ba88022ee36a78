#include <sstream>

#include "json.hpp"
#include "texsyn/gan.hpp"

namespace texsyn::gan {
namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
  return out;
}

}  // namespace

std::string to_string(DescriptorMode mode) {
  switch (mode) {
    case DescriptorMode::kMuSigma:
      return "musigma";
    case DescriptorMode::kTexton:
      return "texton";
    case DescriptorMode::kNone:
      return "none";
  }
  return "?";
}

std::string to_string(GeneratorLossForm form) {
  return form == GeneratorLossForm::kMinimax ? "minimax" : "nonsaturating";
}

std::string to_string(LatentDistribution dist) {
  return dist == LatentDistribution::kUniform ? "uniform" : "normal";
}

DescriptorMode parse_descriptor_mode(const std::string& s) {
  if (s == "musigma") return DescriptorMode::kMuSigma;
  if (s == "texton") return DescriptorMode::kTexton;
  if (s == "none") return DescriptorMode::kNone;
  throw ContractError("descriptor mode must be one of musigma, texton, none (got '" + s + "')");
}

GeneratorLossForm parse_loss_form(const std::string& s) {
  if (s == "minimax") return GeneratorLossForm::kMinimax;
  if (s == "nonsaturating") return GeneratorLossForm::kNonSaturating;
  throw ContractError("generator_loss must be minimax or nonsaturating (got '" + s + "')");
}

LatentDistribution parse_latent_distribution(const std::string& s) {
  if (s == "uniform") return LatentDistribution::kUniform;
  if (s == "normal") return LatentDistribution::kNormal;
  throw ContractError("latent must be uniform or normal (got '" + s + "')");
}

ConfigError::ConfigError(std::vector<std::string> violations)
    : ContractError("invalid config: " + join(violations)), violations_(std::move(violations)) {}

std::vector<std::string> TrainRunConfig::violations() const {
  std::vector<std::string> v;
  if (resolution == 0) v.emplace_back("resolution must be positive");
  if (patch == 0) v.emplace_back("patch must be positive");
  if (patch > 0 && resolution % patch != 0)
    v.emplace_back("resolution must be divisible by patch size");
  if (blocks == 0) v.emplace_back("blocks must be >= 1");
  if (feature_dim == 0) v.emplace_back("feature_dim must be positive");
  if (hidden_dim == 0) v.emplace_back("hidden_dim must be positive");
  if (heads == 0) v.emplace_back("heads must be positive");
  if (heads > 0 && feature_dim % heads != 0)
    v.emplace_back("feature_dim must be divisible by heads");
  if (!(lr > 0.0)) v.emplace_back("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) v.emplace_back("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) v.emplace_back("beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) v.emplace_back("adam_eps must be positive");
  if (steps < 0) v.emplace_back("steps must be >= 0");
  if (overlap >= patch) v.emplace_back("overlap must be < patch size");
  if (latent_dim == 0) v.emplace_back("latent_dim must be positive");
  if (!(init_std > 0.0)) v.emplace_back("init_std must be positive");
  if (eval_every < 0) v.emplace_back("eval_every must be >= 0");
  if (eval_every > 0 && eval_samples < 2)
    v.emplace_back("eval_samples must be >= 2 when eval_every > 0");
  return v;
}

void TrainRunConfig::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

std::string TrainRunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["resolution"] = resolution;
  j["patch"] = patch;
  j["blocks"] = blocks;
  j["feature_dim"] = feature_dim;
  j["hidden_dim"] = hidden_dim;
  j["heads"] = heads;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["steps"] = steps;
  j["seed"] = seed;
  j["descriptor"] = to_string(descriptor);
  j["overlap"] = overlap;
  j["generator_loss"] = to_string(generator_loss);
  j["latent_dim"] = latent_dim;
  j["latent"] = to_string(latent);
  j["init_std"] = init_std;
  j["eval_every"] = eval_every;
  j["eval_samples"] = eval_samples;
  return j.dump(2);
}

TrainRunConfig TrainRunConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  if (!j.is_object()) throw ConfigError({"config must be a JSON object"});

  TrainRunConfig c;
  std::vector<std::string> v;
  auto size_field = [&](const std::string& key, const nlohmann::json& val, std::size_t& dst) {
    if (!val.is_number_integer() || val.get<long long>() < 0) {
      v.push_back(key + " must be a non-negative integer");
      return;
    }
    dst = val.get<std::size_t>();
  };
  auto long_field = [&](const std::string& key, const nlohmann::json& val, long& dst) {
    if (!val.is_number_integer()) {
      v.push_back(key + " must be an integer");
      return;
    }
    dst = val.get<long>();
  };
  auto real_field = [&](const std::string& key, const nlohmann::json& val, double& dst) {
    if (!val.is_number()) {
      v.push_back(key + " must be a number");
      return;
    }
    dst = val.get<double>();
  };
  auto enum_field = [&](const std::string& key, const nlohmann::json& val, auto parse,
                        auto& dst) {
    if (!val.is_string()) {
      v.push_back(key + " must be a string");
      return;
    }
    try {
      dst = parse(val.get<std::string>());
    } catch (const ContractError& e) {
      v.emplace_back(e.what());
    }
  };

  for (const auto& [key, val] : j.items()) {
    if (key == "resolution") size_field(key, val, c.resolution);
    else if (key == "patch") size_field(key, val, c.patch);
    else if (key == "blocks") size_field(key, val, c.blocks);
    else if (key == "feature_dim") size_field(key, val, c.feature_dim);
    else if (key == "hidden_dim") size_field(key, val, c.hidden_dim);
    else if (key == "heads") size_field(key, val, c.heads);
    else if (key == "lr") real_field(key, val, c.lr);
    else if (key == "beta1") real_field(key, val, c.beta1);
    else if (key == "beta2") real_field(key, val, c.beta2);
    else if (key == "adam_eps") real_field(key, val, c.adam_eps);
    else if (key == "steps") long_field(key, val, c.steps);
    else if (key == "seed") {
      if (!val.is_number_unsigned() && !(val.is_number_integer() && val.get<long long>() >= 0))
        v.emplace_back("seed must be a non-negative integer");
      else
        c.seed = val.get<std::uint64_t>();
    } else if (key == "descriptor") enum_field(key, val, parse_descriptor_mode, c.descriptor);
    else if (key == "overlap") size_field(key, val, c.overlap);
    else if (key == "generator_loss") enum_field(key, val, parse_loss_form, c.generator_loss);
    else if (key == "latent_dim") size_field(key, val, c.latent_dim);
    else if (key == "latent") enum_field(key, val, parse_latent_distribution, c.latent);
    else if (key == "init_std") real_field(key, val, c.init_std);
    else if (key == "eval_every") long_field(key, val, c.eval_every);
    else if (key == "eval_samples") size_field(key, val, c.eval_samples);
    else v.push_back("unknown key '" + key + "'");
  }
  for (auto& s : c.violations()) v.push_back(std::move(s));
  if (!v.empty()) throw ConfigError(std::move(v));
  return c;
}

}  // namespace texsyn::gan
