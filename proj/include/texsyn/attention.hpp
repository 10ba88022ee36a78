#pragma once

#include <vector>

#include "texsyn/descriptors.hpp"
#include "texsyn/nn.hpp"
#include "texsyn/patches.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn::attention {

// Multi-head projection weights. Each head owns W_Q, W_K, W_V of shape
// [dim x head_dim]; head outputs are concatenated and passed through `out`.
struct AttentionBlockParams {
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::vector<Tensor> w_q;
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  nn::Linear out;

  std::size_t head_dim() const { return dim / heads; }

  static AttentionBlockParams init(std::size_t dim, std::size_t heads, double stddev,
                                   nn::Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& params) const;
};

struct AttentionResult {
  Tensor output;                 // [n x dim]
  std::vector<Tensor> weights;   // per head, [n x n] softmax rows
};

// softmax(Q K^T / sqrt(d_h)) V per head.
AttentionResult standard_attention(const Tensor& x, const AttentionBlockParams& params);

struct L2Options {
  bool tied = true;      // K uses W_Q
  bool negative = true;  // score = -||Q_i - K_j||^2; false keeps the printed sign
};

// Scores from squared Euclidean distance between queries and keys, divided by
// sqrt(d_h).
AttentionResult l2_attention(const Tensor& g, const AttentionBlockParams& params,
                             const L2Options& options = {});

// Texton features [n x 82] are projected to `dim` and attended with
// dot-product scores.
AttentionResult texton_attention(const Tensor& features, const nn::Linear& feature_proj,
                                 const AttentionBlockParams& params);

// ---- patch embedding ---------------------------------------------------------

struct PatchSequence {
  Tensor tokens;  // [n x d]
  PatchGrid grid;
};

// Projects every p x p x C patch to `proj.out_features()` and adds one learned
// position row per grid cell when `position` is defined ([n x d]).
PatchSequence embed_patches(const Tensor& image, std::size_t patch, std::size_t overlap,
                            const nn::Linear& proj, const Tensor& position = {});

// ---- descriptor conditioning -----------------------------------------------------

struct DescriptorPair {
  descriptors::MuSigmaMaps real;
  descriptors::MuSigmaMaps generated;
};

// sqrt(max((mu_gen - mu_real)^2 + (var_gen - var_real), 0)) per map entry.
// Output has the maps' shape ([n x M*N] for batched maps).
Tensor descriptor_gap(const DescriptorPair& pair);

}  // namespace texsyn::attention
