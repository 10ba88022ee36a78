#include "texsyn/attention.hpp"

#include <cmath>

namespace texsyn::attention {
namespace {

void require_tokens(const Tensor& x, const AttentionBlockParams& params, const char* op) {
  if (!x.defined() || x.rank() != 2 || x.dim(1) != params.dim) {
    throw DimensionError(std::string(op) + ": expected [n x " + std::to_string(params.dim) +
                         "] tokens, got " +
                         (x.defined() ? shape_str(x.shape()) : "undefined"));
  }
  if (params.w_q.size() != params.heads || params.w_v.size() != params.heads) {
    throw ContractError(std::string(op) + ": parameter set has wrong head count");
  }
}

AttentionResult combine(std::vector<Tensor> heads, std::vector<Tensor> weights,
                        const AttentionBlockParams& params) {
  const Tensor merged = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return {params.out(merged), std::move(weights)};
}

}  // namespace

AttentionBlockParams AttentionBlockParams::init(std::size_t dim, std::size_t heads,
                                                double stddev, nn::Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ContractError("attention: dim " + std::to_string(dim) +
                        " not divisible by heads " + std::to_string(heads));
  }
  AttentionBlockParams p;
  p.dim = dim;
  p.heads = heads;
  const std::size_t dh = dim / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.w_q.push_back(nn::trunc_normal({dim, dh}, stddev, rng));
    p.w_k.push_back(nn::trunc_normal({dim, dh}, stddev, rng));
    p.w_v.push_back(nn::trunc_normal({dim, dh}, stddev, rng));
  }
  p.out = nn::Linear::init(dim, dim, stddev, rng);
  return p;
}

void AttentionBlockParams::collect(const std::string& prefix,
                                   nn::ParamList& params) const {
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    params.emplace_back(hp + ".w_q", w_q[h]);
    params.emplace_back(hp + ".w_k", w_k[h]);
    params.emplace_back(hp + ".w_v", w_v[h]);
  }
  out.collect(prefix + ".out", params);
}

AttentionResult standard_attention(const Tensor& x, const AttentionBlockParams& params) {
  require_tokens(x, params, "standard_attention");
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.head_dim()));
  std::vector<Tensor> heads, weights;
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Tensor q = matmul(x, params.w_q[h]);
    const Tensor k = matmul(x, params.w_k[h]);
    const Tensor v = matmul(x, params.w_v[h]);
    const Tensor attn = softmax_rows(scale(matmul(q, transpose(k)), inv_scale));
    heads.push_back(matmul(attn, v));
    weights.push_back(attn);
  }
  return combine(std::move(heads), std::move(weights), params);
}

AttentionResult l2_attention(const Tensor& g, const AttentionBlockParams& params,
                             const L2Options& options) {
  require_tokens(g, params, "l2_attention");
  const double sign = options.negative ? -1.0 : 1.0;
  const double factor = sign / std::sqrt(static_cast<double>(params.head_dim()));
  std::vector<Tensor> heads, weights;
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Tensor q = matmul(g, params.w_q[h]);
    const Tensor k = options.tied ? q : matmul(g, params.w_k[h]);
    const Tensor v = matmul(g, params.w_v[h]);
    const Tensor attn = softmax_rows(scale(sq_dist(q, k), factor));
    heads.push_back(matmul(attn, v));
    weights.push_back(attn);
  }
  return combine(std::move(heads), std::move(weights), params);
}

AttentionResult texton_attention(const Tensor& features, const nn::Linear& feature_proj,
                                 const AttentionBlockParams& params) {
  if (!features.defined() || features.rank() != 2 ||
      features.dim(1) != static_cast<std::size_t>(descriptors::kFeatureLength)) {
    throw DimensionError("texton_attention: expected [n x 82] features, got " +
                         (features.defined() ? shape_str(features.shape()) : "undefined"));
  }
  return standard_attention(feature_proj(features), params);
}

PatchSequence embed_patches(const Tensor& image, std::size_t patch, std::size_t overlap,
                            const nn::Linear& proj, const Tensor& position) {
  if (!image.defined() || image.rank() != 3) {
    throw DimensionError("embed_patches: expected [H x W x C] image");
  }
  const PatchGrid grid = make_patch_grid(image.dim(0), image.dim(1), patch, overlap);
  const std::size_t row_len = patch * patch * image.dim(2);
  if (proj.in_features() != row_len) {
    throw DimensionError("embed_patches: projection expects " +
                         std::to_string(proj.in_features()) + " inputs, patch has " +
                         std::to_string(row_len));
  }
  Tensor tokens = proj(extract_patches(image, grid));
  if (position.defined()) {
    if (position.rank() != 2 || position.dim(0) != grid.count() ||
        position.dim(1) != tokens.dim(1)) {
      throw DimensionError("embed_patches: position table " + shape_str(position.shape()) +
                           " does not match " + shape_str(tokens.shape()));
    }
    tokens = add(tokens, position);
  }
  return {tokens, grid};
}

Tensor descriptor_gap(const DescriptorPair& pair) {
  const auto& r = pair.real;
  const auto& g = pair.generated;
  if (r.mean_map.shape() != g.mean_map.shape() || r.var_map.shape() != g.var_map.shape() ||
      r.mean_map.shape() != r.var_map.shape()) {
    throw DimensionError("descriptor_gap: misaligned patch grids " +
                         shape_str(r.mean_map.shape()) + " vs " +
                         shape_str(g.mean_map.shape()));
  }
  const Tensor mean_term = square(sub(g.mean_map, r.mean_map));
  const Tensor var_term = sub(g.var_map, r.var_map);
  return sqrt(clamp_min(add(mean_term, var_term), 0.0));
}

}  // namespace texsyn::attention
