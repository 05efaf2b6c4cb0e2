#pragma once

#include <filesystem>
#include <functional>
#include <limits>

#include <json.hpp>

#include "splitsr/image_io.hpp"
#include "splitsr/ops.hpp"

namespace splitsr {

// BT.601 studio-swing luma of an RGB image in [0,255], as (1,1,H,W) doubles.
inline TensorD rgb_to_y(const TensorF& rgb) {
  if (rgb.c() != 3) throw DimensionError("C", "rgb_to_y expects 3 channels, got " + std::to_string(rgb.c()));
  TensorD y({rgb.n(), 1, rgb.h(), rgb.w()});
  for (std::size_t n = 0; n < rgb.n(); ++n) {
    const float *r = rgb.plane(n, 0), *g = rgb.plane(n, 1), *b = rgb.plane(n, 2);
    double* out = y.plane(n, 0);
    for (std::size_t i = 0; i < rgb.h() * rgb.w(); ++i)
      out[i] = 16.0 + (65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i]) / 255.0;
  }
  return y;
}

inline void check_same(const TensorD& a, const TensorD& b, const char* who) {
  if (!(a.shape() == b.shape()))
    throw DimensionError("shape", std::string(who) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  if (a.c() != 1) throw DimensionError("C", std::string(who) + ": expects a single channel");
}

// +infinity when the inputs are identical.
inline double psnr(const TensorD& a, const TensorD& b) {
  check_same(a, b, "psnr");
  long double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = a.data()[i] - b.data()[i];
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(se / static_cast<long double>(a.size()));
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Mean SSIM over all fully-inside 11×11 Gaussian windows (σ = 1.5).
// Images smaller than the window use a single window clipped to the image.
inline double ssim(const TensorD& a, const TensorD& b) {
  check_same(a, b, "ssim");
  constexpr int R = 5;
  constexpr double C1 = (0.01 * 255) * (0.01 * 255), C2 = (0.03 * 255) * (0.03 * 255);
  const std::size_t h = a.h(), w = a.w();
  const std::size_t kh = std::min<std::size_t>(2 * R + 1, h), kw = std::min<std::size_t>(2 * R + 1, w);
  auto gauss = [](std::size_t k) {
    std::vector<double> g(k);
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = static_cast<double>(i) - static_cast<double>(k - 1) / 2.0;
      s += g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    }
    for (auto& v : g) v /= s;
    return g;
  };
  const auto gy = gauss(kh), gx = gauss(kw);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  long double total = 0;
  for (std::size_t n = 0; n < a.n(); ++n) {
    const double *pa = a.plane(n, 0), *pb = b.plane(n, 0);
    // Separable filtering of the five moment images.
    std::vector<double> row(5 * h * ow);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double m[5] = {0, 0, 0, 0, 0};
        for (std::size_t k = 0; k < kw; ++k) {
          const double x = pa[i * w + j + k], y = pb[i * w + j + k], g = gx[k];
          m[0] += g * x;
          m[1] += g * y;
          m[2] += g * x * x;
          m[3] += g * y * y;
          m[4] += g * x * y;
        }
        for (int q = 0; q < 5; ++q) row[(q * h + i) * ow + j] = m[q];
      }
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double m[5] = {0, 0, 0, 0, 0};
        for (std::size_t k = 0; k < kh; ++k)
          for (int q = 0; q < 5; ++q) m[q] += gy[k] * row[(q * h + i + k) * ow + j];
        const double mx = m[0], my = m[1];
        const double vx = m[2] - mx * mx, vy = m[3] - my * my, cxy = m[4] - mx * my;
        total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      }
  }
  return static_cast<double>(total / static_cast<long double>(a.n() * oh * ow));
}

inline TensorF crop_border(const TensorF& img, std::size_t shave) {
  if (shave == 0) return img;
  if (2 * shave >= img.h() || 2 * shave >= img.w())
    throw DimensionError("H", "shave " + std::to_string(shave) + " leaves nothing of " + img.shape().str());
  TensorF out({img.n(), img.c(), img.h() - 2 * shave, img.w() - 2 * shave});
  for (std::size_t n = 0; n < img.n(); ++n)
    for (std::size_t c = 0; c < img.c(); ++c)
      for (std::size_t i = 0; i < out.h(); ++i)
        for (std::size_t j = 0; j < out.w(); ++j) out(n, c, i, j) = img(n, c, i + shave, j + shave);
  return out;
}

struct ImagePair {
  std::string id;
  TensorF hr;
  TensorF lr;
};

struct FileError {
  std::string file;
  std::string message;
};

struct Dataset {
  std::string id;
  std::size_t scale = 0;
  std::vector<ImagePair> pairs;
  std::vector<FileError> errors;
};

inline TensorF crop_to_multiple(const TensorF& img, std::size_t scale) {
  const std::size_t h = img.h() - img.h() % scale, w = img.w() - img.w() % scale;
  if (h == 0 || w == 0) throw DimensionError("H", "image smaller than the scale factor");
  if (h == img.h() && w == img.w()) return img;
  TensorF out({img.n(), img.c(), h, w});
  for (std::size_t c = 0; c < img.c(); ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out(0, c, i, j) = img(0, c, i, j);
  return out;
}

// Default degradation: bicubic 1/scale, rounded to 8 bits.
inline TensorF bicubic_degrade(const TensorF& hr, std::size_t scale) {
  return quantize(bicubic_resize(hr, 1.0 / static_cast<double>(scale)));
}

// HR images are the *.png files directly under `dir`, sorted by name. A file
// lr_x<scale>/<name> next to them is used as the LR input when present.
inline Dataset load_dataset(const std::filesystem::path& dir, std::size_t scale,
                            const std::function<TensorF(const TensorF&, std::size_t)>& degrade = bicubic_degrade) {
  namespace fs = std::filesystem;
  if (scale == 0) throw std::invalid_argument("scale must be >= 1");
  if (!fs::is_directory(dir)) throw std::invalid_argument("dataset directory '" + dir.string() + "' does not exist");
  Dataset ds;
  ds.id = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
  ds.scale = scale;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const fs::path lr_dir = dir / ("lr_x" + std::to_string(scale));
  for (const auto& f : files) {
    try {
      ImagePair p;
      p.id = f.stem().string();
      p.hr = crop_to_multiple(read_png(f.string()), scale);
      const auto paired = lr_dir / f.filename();
      if (fs::exists(paired)) {
        p.lr = read_png(paired.string());
        if (p.lr.h() * scale != p.hr.h() || p.lr.w() * scale != p.hr.w())
          throw DimensionError("H", "paired LR " + p.lr.shape().str() + " does not match HR " + p.hr.shape().str());
      } else {
        p.lr = degrade(p.hr, scale);
      }
      ds.pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      ds.errors.push_back({f.filename().string(), e.what()});
    }
  }
  return ds;
}

struct ImageScore {
  std::string id;
  double psnr = 0;
  double ssim = 0;
};

struct EvalReport {
  std::string dataset;
  std::string method;
  std::size_t scale = 0;
  std::size_t shave = 0;
  std::vector<ImageScore> images;
  double mean_psnr = 0;
  double mean_ssim = 0;

  nlohmann::json to_json() const {
    auto num = [](double v) -> nlohmann::json {
      if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
      return v;
    };
    nlohmann::json j{{"dataset", dataset}, {"method", method},         {"scale", scale},
                     {"shave", shave},     {"mean_psnr", num(mean_psnr)}, {"mean_ssim", num(mean_ssim)}};
    j["images"] = nlohmann::json::array();
    for (const auto& s : images) j["images"].push_back({{"id", s.id}, {"psnr", num(s.psnr)}, {"ssim", num(s.ssim)}});
    return j;
  }
};

using Upscaler = std::function<TensorF(const TensorF& lr, std::size_t scale)>;

inline TensorF bilinear_upscale(const TensorF& lr, std::size_t scale) {
  return bilinear_resize(lr, static_cast<double>(scale));
}

// Upscales every LR image, rounds to 8 bits, shaves `shave` pixels off each
// border and scores on luma. Images are scored independently and averaged in
// dataset order.
inline EvalReport evaluate(const Upscaler& method, const std::string& method_id, const Dataset& ds, std::size_t shave) {
  if (ds.pairs.empty()) throw std::invalid_argument("evaluate: dataset '" + ds.id + "' is empty");
  EvalReport r;
  r.dataset = ds.id;
  r.method = method_id;
  r.scale = ds.scale;
  r.shave = shave;
  r.images.resize(ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    const auto sr = quantize(method(p.lr, ds.scale));
    if (!(sr.shape() == p.hr.shape()))
      throw DimensionError("H", "method output " + sr.shape().str() + " does not match HR " + p.hr.shape().str());
    const auto a = rgb_to_y(crop_border(sr, shave)), b = rgb_to_y(crop_border(p.hr, shave));
    r.images[i] = {p.id, psnr(a, b), ssim(a, b)};
  }
  for (const auto& s : r.images) {
    r.mean_psnr += s.psnr;
    r.mean_ssim += s.ssim;
  }
  r.mean_psnr /= static_cast<double>(r.images.size());
  r.mean_ssim /= static_cast<double>(r.images.size());
  return r;
}

}  // namespace splitsr
