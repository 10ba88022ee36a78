#include "texsyn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <system_error>
#include <vector>

namespace texsyn {
namespace {

void require_image(const Tensor& image, const char* op) {
  if (!image.defined() || image.rank() != 3 ||
      (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw DimensionError(std::string(op) + ": expected [H x W x 1|3], got " +
                         (image.defined() ? shape_str(image.shape()) : "undefined"));
  }
}

int to_byte(double v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor load_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("cannot read PNG '" + path.string() + "': " +
                             img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG '" + path.string() + "': " + msg);
  }
  const std::size_t c = gray ? 1 : 3;
  std::vector<double> values(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) values[i] = buffer[i] / 255.0;
  return Tensor({img.height, img.width, c}, std::move(values));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

void save_png(const Tensor& image, const std::filesystem::path& path) {
  require_image(image, "save_png");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::vector<png_byte> buffer(h * w * c);
  const auto v = image.values();
  for (std::size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = static_cast<png_byte>(to_byte(v[i]));

  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + img.message);
  }
  std::string encoded(size, '\0');
  if (!png_image_write_to_memory(&img, encoded.data(), &size, 0, buffer.data(), 0,
                                 nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + img.message);
  }
  encoded.resize(size);
  write_file_atomic(path, encoded);
}

Tensor channel_mean(const Tensor& image) {
  require_image(image, "channel_mean");
  return mean(image, 2);
}

Tensor luminance(const Tensor& image) {
  require_image(image, "luminance");
  if (image.dim(2) == 1) return reshape(image, {image.dim(0), image.dim(1)});
  const Tensor weights({3}, {0.299, 0.587, 0.114});
  return sum(mul(image, weights), 2);
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left,
            std::size_t height, std::size_t width) {
  require_image(image, "crop");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (top + height > h || left + width > w) {
    throw DimensionError("crop: window " + std::to_string(height) + "x" +
                         std::to_string(width) + " at (" + std::to_string(top) +
                         "," + std::to_string(left) + ") exceeds " +
                         shape_str(image.shape()));
  }
  std::vector<std::size_t> idx;
  idx.reserve(height * width * c);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t k = 0; k < c; ++k)
        idx.push_back(((top + y) * w + left + x) * c + k);
  return gather(image, idx, {height, width, c});
}

Tensor to_rgb(const Tensor& image) {
  require_image(image, "to_rgb");
  if (image.dim(2) == 3) return image;
  const std::size_t n = image.dim(0) * image.dim(1);
  std::vector<std::size_t> idx(n * 3);
  for (std::size_t i = 0; i < n * 3; ++i) idx[i] = i / 3;
  return gather(image, idx, {image.dim(0), image.dim(1), 3});
}

Tensor checkerboard(std::size_t height, std::size_t width, std::size_t cell,
                    double dark, double light) {
  if (cell == 0) throw ContractError("checkerboard: cell size must be positive");
  std::vector<double> v(height * width * 3);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double value = ((y / cell + x / cell) % 2 == 0) ? dark : light;
      for (std::size_t k = 0; k < 3; ++k) v[(y * width + x) * 3 + k] = value;
    }
  return Tensor({height, width, 3}, std::move(v));
}

Rgb8 rgb8_at(const Tensor& image, std::size_t y, std::size_t x) {
  const std::size_t w = image.dim(1), c = image.dim(2);
  const auto v = image.values();
  const std::size_t base = (y * w + x) * c;
  if (c == 1) {
    const int g = to_byte(v[base]);
    return {g, g, g};
  }
  return {to_byte(v[base]), to_byte(v[base + 1]), to_byte(v[base + 2])};
}

}  // namespace texsyn
