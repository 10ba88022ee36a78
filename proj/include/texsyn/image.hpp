#pragma once

#include <filesystem>
#include <string>

#include "texsyn/tensor.hpp"

namespace texsyn {

// Images are tensors of shape [H x W x C] with values in [0, 1], C in {1, 3}.

Tensor load_png(const std::filesystem::path& path);

// Quantizes to 8 bits and writes through a temporary file and rename.
void save_png(const Tensor& image, const std::filesystem::path& path);

// Writes `contents` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Channel mean, [H x W x C] -> [H x W]. Differentiable.
Tensor channel_mean(const Tensor& image);

// Rec. 601 luma for 3-channel input; passthrough for 1 channel. [H x W].
Tensor luminance(const Tensor& image);

Tensor crop(const Tensor& image, std::size_t top, std::size_t left,
            std::size_t height, std::size_t width);

Tensor to_rgb(const Tensor& image);

// Two-color checkerboard with square cells of `cell` pixels.
Tensor checkerboard(std::size_t height, std::size_t width, std::size_t cell,
                    double dark = 0.0, double light = 1.0);

// Integer RGB levels 0..255 of pixel (y, x).
struct Rgb8 {
  int r, g, b;
};
Rgb8 rgb8_at(const Tensor& image, std::size_t y, std::size_t x);

}  // namespace texsyn
