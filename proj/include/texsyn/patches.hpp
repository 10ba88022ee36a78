#pragma once

#include <cstddef>

#include "texsyn/tensor.hpp"

namespace texsyn {

// Layout of square patches over an image. Adjacent patches overlap by
// `overlap` pixels, so the stride is patch - overlap. When the stride does not
// tile the image exactly, the last row/column of patches reads past the edge
// and those pixels are filled by edge replication.
struct PatchGrid {
  std::size_t patch = 4;
  std::size_t overlap = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t stride() const { return patch - overlap; }
  std::size_t count() const { return rows * cols; }
};

// Throws ContractError when overlap >= patch or the image is smaller than one
// patch.
PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch,
                          std::size_t overlap);

// [H x W x C] -> [n x (p * p * C)], each row a patch in (y, x, channel) order.
Tensor extract_patches(const Tensor& image, const PatchGrid& grid);

// [H x W] -> [n x p x p].
Tensor extract_planes(const Tensor& plane, const PatchGrid& grid);

// Inverse of extract_patches for non-overlapping grids:
// [rows*cols x (p * p * C)] -> [rows*p x cols*p x C].
Tensor fold_patches(const Tensor& tokens, std::size_t rows, std::size_t cols,
                    std::size_t patch, std::size_t channels);

}  // namespace texsyn
