#include "texsyn/patches.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace texsyn {

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch,
                          std::size_t overlap) {
  if (patch == 0) throw ContractError("patch size must be positive");
  if (overlap >= patch) {
    throw ContractError("overlap must be < patch size (overlap " +
                        std::to_string(overlap) + ", patch " + std::to_string(patch) +
                        ")");
  }
  if (height < patch || width < patch) {
    throw DimensionError("image " + std::to_string(height) + "x" +
                         std::to_string(width) + " is smaller than one " +
                         std::to_string(patch) + "x" + std::to_string(patch) + " patch");
  }
  PatchGrid grid;
  grid.patch = patch;
  grid.overlap = overlap;
  const std::size_t s = grid.stride();
  grid.rows = (height - patch + s - 1) / s + 1;
  grid.cols = (width - patch + s - 1) / s + 1;
  return grid;
}

Tensor extract_patches(const Tensor& image, const PatchGrid& grid) {
  if (image.rank() != 3) {
    throw DimensionError("extract_patches: expected [H x W x C], got " +
                         shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const std::size_t p = grid.patch, s = grid.stride();
  const std::size_t row_len = p * p * c;
  std::vector<std::size_t> idx;
  idx.reserve(grid.count() * row_len);
  for (std::size_t gy = 0; gy < grid.rows; ++gy)
    for (std::size_t gx = 0; gx < grid.cols; ++gx)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) {
          const std::size_t sy = std::min(gy * s + y, h - 1);
          const std::size_t sx = std::min(gx * s + x, w - 1);
          for (std::size_t k = 0; k < c; ++k) idx.push_back((sy * w + sx) * c + k);
        }
  return gather(image, idx, {grid.count(), row_len});
}

Tensor extract_planes(const Tensor& plane, const PatchGrid& grid) {
  if (plane.rank() != 2) {
    throw DimensionError("extract_planes: expected [H x W], got " +
                         shape_str(plane.shape()));
  }
  const Tensor as_image = reshape(plane, {plane.dim(0), plane.dim(1), 1});
  return reshape(extract_patches(as_image, grid),
                 {grid.count(), grid.patch, grid.patch});
}

Tensor fold_patches(const Tensor& tokens, std::size_t rows, std::size_t cols,
                    std::size_t patch, std::size_t channels) {
  const std::size_t row_len = patch * patch * channels;
  if (tokens.rank() != 2 || tokens.dim(0) != rows * cols ||
      tokens.dim(1) != row_len) {
    throw DimensionError("fold_patches: expected [" + std::to_string(rows * cols) +
                         "x" + std::to_string(row_len) + "], got " +
                         shape_str(tokens.shape()));
  }
  const std::size_t h = rows * patch, w = cols * patch;
  std::vector<std::size_t> idx(h * w * channels);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < channels; ++k) {
        const std::size_t token = (y / patch) * cols + x / patch;
        const std::size_t within = ((y % patch) * patch + x % patch) * channels + k;
        idx[(y * w + x) * channels + k] = token * row_len + within;
      }
  return gather(tokens, idx, {h, w, channels});
}

}  // namespace texsyn
