#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "texsyn/patches.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn::descriptors {

// ---- mean / variance patch maps --------------------------------------------
//
// For an M x N patch the mean map is the outer product of the M row means and
// the N column means; the variance map is the outer product of the per-row and
// per-column mean squared deviations. A constant patch of value c therefore
// has mean map c^2 (intensity^2 units) and variance map 0.

struct MuSigmaMaps {
  Tensor mean_map;  // [M x N], or [n x M*N] for a batch of patches
  Tensor var_map;
};

Tensor mu_map(const Tensor& patch);
Tensor sigma2_map(const Tensor& patch);

// patches [n x M x N] -> maps [n x M*N]. Differentiable.
MuSigmaMaps mu_sigma_batch(const Tensor& patches);

// Channel-averaged maps for every patch of `image` [H x W x C].
MuSigmaMaps image_mu_sigma(const Tensor& image, const PatchGrid& grid);

// ---- edge orientation --------------------------------------------------------

inline constexpr int kOrientationBins = 18;
inline constexpr int kColorBins = 64;
inline constexpr int kFeatureLength = kOrientationBins + kColorBins;
inline constexpr int kNoEdge = -1;

// Largest Sobel magnitude attainable on [0, 1] input: |(4, 4)|.
inline constexpr double kMaxSobelMagnitude = 5.656854249492380195;

struct OrientationMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> bins;  // kNoEdge below threshold, else 0..17
  Tensor magnitude;       // [H x W], normalized to [0, 1]
};

// theta = atan2(Gy, Gx) folded into [0, 180) degrees, 10-degree bins. Borders
// use edge replication. Requires H, W >= 3.
OrientationMap sobel_orientation(const Tensor& gray, double threshold = 0.05);

// ---- color quantization and textons --------------------------------------------

// 4 levels per channel: 16 * (r / 64) + 4 * (g / 64) + b / 64.
int quantize_color(int r, int g, int b);

enum TextonType : std::uint8_t {
  kT1 = 1 << 0,  // top pair      (a == b)
  kT2 = 1 << 1,  // left pair     (a == c)
  kT3 = 1 << 2,  // main diagonal (a == d)
  kT4 = 1 << 3,  // anti-diagonal (b == c)
};
inline constexpr std::uint8_t kAllTextons = kT1 | kT2 | kT3 | kT4;

// Texton types fired by one 2 x 2 window [[a, b], [c, d]].
std::uint8_t window_textons(int a, int b, int c, int d);

struct TextonWindow {
  std::size_t y = 0;  // top-left pixel
  std::size_t x = 0;
  std::uint8_t types = 0;
};

// Non-overlapping stride-2 windows covering the map; odd extents are padded by
// edge replication (the padded window reads the last row/column twice).
struct TextonMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<TextonWindow> windows;
};

TextonMap detect_textons(std::span<const int> quantized, std::size_t height,
                         std::size_t width);

enum class TextonCounting {
  kPerType,    // each firing type adds its pixel pair
  kPerWindow,  // union of the firing pairs, each pixel once
};

struct MthOptions {
  double edge_threshold = 0.05;
  TextonCounting counting = TextonCounting::kPerType;
  std::uint8_t enabled_types = kAllTextons;
  bool normalize = true;
};

struct TextonFeatures {
  std::array<double, kOrientationBins> orientation{};
  std::array<double, kColorBins> color{};

  std::array<double, kFeatureLength> combined() const;
  double mass() const;
};

// Multi-texton histogram of an [H x W x C] image.
TextonFeatures mth_features(const Tensor& image, const MthOptions& options = {});

// One normalized 82-vector per patch: [n x 82]. Not differentiable.
Tensor patch_texton_features(const Tensor& image, const PatchGrid& grid,
                             const MthOptions& options = {});

}  // namespace texsyn::descriptors
