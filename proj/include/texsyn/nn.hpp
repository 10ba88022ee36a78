#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "texsyn/tensor.hpp"

namespace texsyn::nn {

using Rng = std::mt19937_64;

// Ordered (name, parameter) pairs; the order is the serialization order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

// Normal(0, stddev) truncated at two standard deviations, resampled.
Tensor trunc_normal(Shape shape, double stddev, Rng& rng);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when the layer has no bias

  static Linear init(std::size_t in, std::size_t out, double stddev, Rng& rng,
                     bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm init(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward init(std::size_t dim, std::size_t hidden, double stddev, Rng& rng);
  Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

void set_requires_grad(const ParamList& params, bool on);
void zero_grad(const ParamList& params);
std::size_t count_values(const ParamList& params);

}  // namespace texsyn::nn
