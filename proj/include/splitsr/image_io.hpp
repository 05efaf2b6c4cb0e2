#pragma once

#include <png.h>

#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "splitsr/tensor.hpp"

namespace splitsr {

class ImageError : public std::runtime_error {
public:
  ImageError(std::string path, const std::string& what) : std::runtime_error(what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

// Images are (1,3,H,W) float tensors holding 8-bit values in [0, 255].

namespace detail {

inline TensorF from_rgb8(const std::vector<unsigned char>& px, std::size_t h, std::size_t w) {
  TensorF t({1, 3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    float* out = t.plane(0, c);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = static_cast<float>(px[i * 3 + c]);
  }
  return t;
}

inline std::vector<unsigned char> to_rgb8(const TensorF& img) {
  if (img.n() != 1 || img.c() != 3) throw DimensionError("C", "image tensor must be (1,3,H,W), got " + img.shape().str());
  const std::size_t hw = img.h() * img.w();
  std::vector<unsigned char> px(hw * 3);
  for (std::size_t c = 0; c < 3; ++c) {
    const float* in = img.plane(0, c);
    for (std::size_t i = 0; i < hw; ++i) px[i * 3 + c] = static_cast<unsigned char>(std::clamp(std::lround(in[i]), 0L, 255L));
  }
  return px;
}

// Only 8-bit sources are accepted; gray and palette images expand to RGB and
// alpha is dropped.
inline TensorF finish_read(png_image& img, const std::string& what) {
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw ImageError(what, what + ": 16-bit PNGs are not supported");
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageError(what, what + ": " + msg);
  }
  return from_rgb8(px, img.height, img.width);
}

inline png_image header() {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  return img;
}

}  // namespace detail

inline TensorF read_png(const std::string& path) {
  auto img = detail::header();
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw ImageError(path, path + ": " + img.message);
  return detail::finish_read(img, path);
}

inline TensorF decode_png(std::span<const unsigned char> bytes) {
  auto img = detail::header();
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw ImageError("<memory>", std::string("png decode: ") + img.message);
  return detail::finish_read(img, "<memory>");
}

inline std::vector<unsigned char> encode_png(const TensorF& rgb) {
  const auto px = detail::to_rgb8(rgb);
  auto img = detail::header();
  img.width = static_cast<png_uint_32>(rgb.w());
  img.height = static_cast<png_uint_32>(rgb.h());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, px.data(), 0, nullptr))
    throw ImageError("<memory>", std::string("png encode: ") + img.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, px.data(), 0, nullptr))
    throw ImageError("<memory>", std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

inline void write_png(const std::string& path, const TensorF& rgb) {
  const auto px = detail::to_rgb8(rgb);
  auto img = detail::header();
  img.width = static_cast<png_uint_32>(rgb.w());
  img.height = static_cast<png_uint_32>(rgb.h());
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr))
    throw ImageError(path, path + ": " + img.message);
}

// Rounds to the nearest 8-bit level, as writing and re-reading a PNG would.
inline TensorF quantize(const TensorF& img) {
  TensorF q(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) q.data()[i] = std::clamp(std::round(img.data()[i]), 0.0f, 255.0f);
  return q;
}

}  // namespace splitsr
