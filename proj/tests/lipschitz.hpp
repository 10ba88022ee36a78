#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "gradcheck.hpp"
#include "texsyn/attention.hpp"

namespace texsyn::testing {

// Principal branch of the Lambert W function for x >= 0.
inline double lambert_w0(double x) {
  double w = std::log1p(x);
  for (int i = 0; i < 60; ++i) {
    const double ew = std::exp(w);
    w -= (w * ew - x) / (ew * (w + 1.0));
  }
  return w;
}

// Largest singular value by power iteration on M^T M.
inline double spectral_norm(const Tensor& m) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> v(cols, 1.0 / std::sqrt(static_cast<double>(cols))), u(rows);
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    for (std::size_t i = 0; i < rows; ++i) {
      u[i] = 0.0;
      for (std::size_t j = 0; j < cols; ++j) u[i] += m.value(i * cols + j) * v[j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      v[j] = 0.0;
      for (std::size_t i = 0; i < rows; ++i) v[j] += m.value(i * cols + j) * u[i];
      norm += v[j] * v[j];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

// Upper bound on the 2-norm Lipschitz constant of tied L2 multi-head
// attention over n tokens (Kim, Papamakarios and Mnih, 2021).
inline double l2_attention_lipschitz_bound(const attention::AttentionBlockParams& p,
                                           std::size_t n) {
  double heads = 0.0;
  for (std::size_t h = 0; h < p.heads; ++h)
    heads += std::pow(spectral_norm(p.w_q[h]) * spectral_norm(p.w_v[h]), 2);
  const double nn = static_cast<double>(n);
  const double phi_inv = lambert_w0(nn / std::exp(1.0)) + 1.0;
  return std::sqrt(nn) / std::sqrt(static_cast<double>(p.head_dim())) * (4.0 * phi_inv + 1.0) *
         std::sqrt(heads) * spectral_norm(p.out.weight);
}

struct LipschitzProbe {
  double bound = 0.0;
  double max_ratio = 0.0;
  double max_ratio_small_scale = 0.0;  // inputs in the lowest third of scales
  double max_ratio_large_scale = 0.0;  // inputs in the highest third
  std::size_t perturbations = 0;
};

// Random inputs whose scale sweeps 0.1 .. 100 log-uniformly, each with a
// random perturbation; records ||dZ|| / ||dG||.
inline LipschitzProbe probe_l2_attention(std::size_t perturbations, std::uint64_t seed,
                                         std::size_t n = 6, std::size_t dim = 8,
                                         std::size_t heads = 2) {
  std::mt19937_64 rng(seed);
  auto params = attention::AttentionBlockParams::init(dim, heads, 0.3, rng);
  for (Tensor& w : params.w_v) {
    const double s = spectral_norm(w);
    for (double& x : w.mutable_values()) x /= s;
  }
  {
    const double s = spectral_norm(params.out.weight);
    for (double& x : params.out.weight.mutable_values()) x /= s;
  }
  LipschitzProbe probe;
  probe.bound = l2_attention_lipschitz_bound(params, n);
  probe.perturbations = perturbations;
  std::uniform_real_distribution<double> log_scale(std::log(0.1), std::log(100.0));
  std::uniform_real_distribution<double> log_eps(std::log(1e-4), std::log(1.0));
  for (std::size_t i = 0; i < perturbations; ++i) {
    const double ls = log_scale(rng);
    const double scale = std::exp(ls);
    const Tensor g = random_tensor({n, dim}, rng, -scale, scale);
    Tensor dg = random_tensor({n, dim}, rng, -1.0, 1.0);
    double dn = 0.0;
    for (double x : dg.values()) dn += x * x;
    const double eps = std::exp(log_eps(rng)) * scale / std::sqrt(dn);
    dg = texsyn::scale(dg, eps);
    const Tensor z0 = attention::l2_attention(g, params).output;
    const Tensor z1 = attention::l2_attention(add(g, dg), params).output;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < z0.size(); ++k) num += std::pow(z1.value(k) - z0.value(k), 2);
    for (double x : dg.values()) den += x * x;
    const double ratio = std::sqrt(num / den);
    probe.max_ratio = std::max(probe.max_ratio, ratio);
    const double third = (std::log(100.0) - std::log(0.1)) / 3.0;
    if (ls < std::log(0.1) + third) probe.max_ratio_small_scale = std::max(probe.max_ratio_small_scale, ratio);
    if (ls > std::log(100.0) - third) probe.max_ratio_large_scale = std::max(probe.max_ratio_large_scale, ratio);
  }
  return probe;
}

}  // namespace texsyn::testing
