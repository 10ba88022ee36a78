#include "texsyn/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "texsyn/image.hpp"

namespace texsyn::descriptors {
namespace {

void require_patch(const Tensor& patch, const char* op) {
  if (!patch.defined() || patch.rank() != 2 || patch.dim(0) == 0 || patch.dim(1) == 0) {
    throw DimensionError(std::string(op) + ": expected a non-empty [M x N] patch, got " +
                         (patch.defined() ? shape_str(patch.shape()) : "undefined"));
  }
}

Tensor as_batch(const Tensor& patch) {
  return reshape(patch, {1, patch.dim(0), patch.dim(1)});
}

// Sobel on any extent >= 1 with edge replication.
OrientationMap sobel_unchecked(std::span<const double> gray, std::size_t h,
                               std::size_t w, double threshold) {
  OrientationMap out;
  out.height = h;
  out.width = w;
  out.bins.assign(h * w, kNoEdge);
  std::vector<double> mag(h * w, 0.0);
  auto at = [&](long y, long x) {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return gray[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  constexpr double kRadToDeg = 180.0 / std::numbers::pi;
  for (long y = 0; y < static_cast<long>(h); ++y) {
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const double gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
      mag[i] = std::hypot(gx, gy) / kMaxSobelMagnitude;
      if (mag[i] < threshold || mag[i] == 0.0) continue;
      double theta = std::fmod(std::atan2(gy, gx) * kRadToDeg, 180.0);
      if (theta < 0.0) theta += 180.0;
      // Absorb rounding so that exact multiples of 10 degrees land in their bin.
      int bin = static_cast<int>(std::floor(theta / 10.0 + 1e-9));
      if (bin >= kOrientationBins) bin -= kOrientationBins;
      out.bins[i] = bin;
    }
  }
  out.magnitude = Tensor({h, w}, std::move(mag));
  return out;
}

struct PixelPair {
  int first;  // 0 = a, 1 = b, 2 = c, 3 = d
  int second;
};

constexpr std::array<PixelPair, 4> kPairs{{{0, 1}, {0, 2}, {0, 3}, {1, 2}}};

}  // namespace

// ---- mean / variance --------------------------------------------------------

MuSigmaMaps mu_sigma_batch(const Tensor& patches) {
  if (!patches.defined() || patches.rank() != 3 || patches.size() == 0) {
    throw DimensionError("mu_sigma_batch: expected non-empty [n x M x N], got " +
                         (patches.defined() ? shape_str(patches.shape()) : "undefined"));
  }
  const Tensor row_mean = mean(patches, 2);
  const Tensor col_mean = mean(patches, 1);
  const Tensor row_var = reduce(patches, 2, ReduceOp::kVariance);
  const Tensor col_var = reduce(patches, 1, ReduceOp::kVariance);
  return {outer_rows(row_mean, col_mean), outer_rows(row_var, col_var)};
}

Tensor mu_map(const Tensor& patch) {
  require_patch(patch, "mu_map");
  return reshape(mu_sigma_batch(as_batch(patch)).mean_map, patch.shape());
}

Tensor sigma2_map(const Tensor& patch) {
  require_patch(patch, "sigma2_map");
  return reshape(mu_sigma_batch(as_batch(patch)).var_map, patch.shape());
}

MuSigmaMaps image_mu_sigma(const Tensor& image, const PatchGrid& grid) {
  return mu_sigma_batch(extract_planes(channel_mean(image), grid));
}

// ---- orientation ------------------------------------------------------------

OrientationMap sobel_orientation(const Tensor& gray, double threshold) {
  if (!gray.defined() || gray.rank() != 2 || gray.dim(0) < 3 || gray.dim(1) < 3) {
    throw DimensionError("sobel_orientation: need a [H x W] image with H, W >= 3, got " +
                         (gray.defined() ? shape_str(gray.shape()) : "undefined"));
  }
  return sobel_unchecked(gray.values(), gray.dim(0), gray.dim(1), threshold);
}

// ---- quantization / textons ---------------------------------------------------

int quantize_color(int r, int g, int b) {
  for (int c : {r, g, b}) {
    if (c < 0 || c > 255) {
      throw DomainError("quantize_color: component " + std::to_string(c) +
                        " outside [0, 255]");
    }
  }
  return 16 * (r / 64) + 4 * (g / 64) + b / 64;
}

std::uint8_t window_textons(int a, int b, int c, int d) {
  std::uint8_t t = 0;
  if (a == b) t |= kT1;
  if (a == c) t |= kT2;
  if (a == d) t |= kT3;
  if (b == c) t |= kT4;
  return t;
}

TextonMap detect_textons(std::span<const int> quantized, std::size_t height,
                         std::size_t width) {
  if (quantized.size() != height * width) {
    throw DimensionError("detect_textons: " + std::to_string(quantized.size()) +
                         " values for a " + std::to_string(height) + "x" +
                         std::to_string(width) + " map");
  }
  TextonMap map;
  map.height = height;
  map.width = width;
  for (std::size_t y = 0; y < height; y += 2) {
    const std::size_t y1 = std::min(y + 1, height - 1);
    for (std::size_t x = 0; x < width; x += 2) {
      const std::size_t x1 = std::min(x + 1, width - 1);
      map.windows.push_back({y, x,
                             window_textons(quantized[y * width + x],
                                            quantized[y * width + x1],
                                            quantized[y1 * width + x],
                                            quantized[y1 * width + x1])});
    }
  }
  return map;
}

std::array<double, kFeatureLength> TextonFeatures::combined() const {
  std::array<double, kFeatureLength> out{};
  std::copy(orientation.begin(), orientation.end(), out.begin());
  std::copy(color.begin(), color.end(), out.begin() + kOrientationBins);
  return out;
}

double TextonFeatures::mass() const {
  double s = 0.0;
  for (double v : orientation) s += v;
  for (double v : color) s += v;
  return s;
}

TextonFeatures mth_features(const Tensor& image, const MthOptions& options) {
  if (!image.defined() || image.rank() != 3 || image.dim(0) == 0 || image.dim(1) == 0) {
    throw DimensionError("mth_features: expected [H x W x C], got " +
                         (image.defined() ? shape_str(image.shape()) : "undefined"));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  std::vector<int> quantized(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const Rgb8 px = rgb8_at(image, y, x);
      quantized[y * w + x] = quantize_color(px.r, px.g, px.b);
    }
  const Tensor gray = channel_mean(image.detach());
  const OrientationMap orient = sobel_unchecked(gray.values(), h, w, options.edge_threshold);
  const TextonMap textons = detect_textons(quantized, h, w);

  TextonFeatures f;
  auto count_pixel = [&](std::size_t y, std::size_t x) {
    const std::size_t i = y * w + x;
    f.color[static_cast<std::size_t>(quantized[i])] += 1.0;
    if (orient.bins[i] != kNoEdge) f.orientation[static_cast<std::size_t>(orient.bins[i])] += 1.0;
  };
  for (const TextonWindow& win : textons.windows) {
    const std::uint8_t fired = win.types & options.enabled_types;
    if (fired == 0) continue;
    const std::array<std::size_t, 4> ys{win.y, win.y, std::min(win.y + 1, h - 1),
                                        std::min(win.y + 1, h - 1)};
    const std::array<std::size_t, 4> xs{win.x, std::min(win.x + 1, w - 1), win.x,
                                        std::min(win.x + 1, w - 1)};
    std::array<bool, 4> member{};
    for (std::size_t t = 0; t < kPairs.size(); ++t) {
      if ((fired & (1u << t)) == 0) continue;
      for (int corner : {kPairs[t].first, kPairs[t].second}) {
        if (options.counting == TextonCounting::kPerType) {
          count_pixel(ys[corner], xs[corner]);
        } else {
          member[corner] = true;
        }
      }
    }
    if (options.counting == TextonCounting::kPerWindow) {
      for (std::size_t corner = 0; corner < 4; ++corner)
        if (member[corner]) count_pixel(ys[corner], xs[corner]);
    }
  }
  if (options.normalize) {
    const double total = f.mass();
    if (total > 0.0) {
      for (double& v : f.orientation) v /= total;
      for (double& v : f.color) v /= total;
    }
  }
  return f;
}

Tensor patch_texton_features(const Tensor& image, const PatchGrid& grid,
                             const MthOptions& options) {
  const std::size_t c = image.dim(2);
  const Tensor patches = extract_patches(image.detach(), grid);
  const auto pv = patches.values();
  const std::size_t row_len = grid.patch * grid.patch * c;
  std::vector<double> out;
  out.reserve(grid.count() * kFeatureLength);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const Tensor patch({grid.patch, grid.patch, c},
                       std::vector<double>(pv.begin() + i * row_len,
                                           pv.begin() + (i + 1) * row_len));
    const auto feat = mth_features(patch, options).combined();
    out.insert(out.end(), feat.begin(), feat.end());
  }
  return Tensor({grid.count(), static_cast<std::size_t>(kFeatureLength)}, std::move(out));
}

}  // namespace texsyn::descriptors
