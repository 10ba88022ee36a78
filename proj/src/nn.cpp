#include "texsyn/nn.hpp"

#include <cmath>

namespace texsyn::nn {

Tensor trunc_normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) {
    double s = dist(rng);
    while (std::abs(s) > 2.0) s = dist(rng);
    x = s * stddev;
  }
  return Tensor(std::move(shape), std::move(v), true);
}

Linear Linear::init(std::size_t in, std::size_t out, double stddev, Rng& rng,
                    bool with_bias) {
  Linear l;
  l.weight = trunc_normal({in, out}, stddev, rng);
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

LayerNorm LayerNorm::init(std::size_t dim) {
  return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)};
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

FeedForward FeedForward::init(std::size_t dim, std::size_t hidden, double stddev,
                              Rng& rng) {
  return {Linear::init(dim, hidden, stddev, rng), Linear::init(hidden, dim, stddev, rng)};
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

void set_requires_grad(const ParamList& params, bool on) {
  for (auto [name, t] : params) t.set_requires_grad(on);
}

void zero_grad(const ParamList& params) {
  for (auto [name, t] : params) t.zero_grad();
}

std::size_t count_values(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace texsyn::nn
