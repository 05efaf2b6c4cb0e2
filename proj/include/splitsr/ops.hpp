#pragma once

#include <functional>
#include <optional>
#include <string_view>

#include "splitsr/tensor.hpp"

namespace splitsr {

// Convolution parameters. kernel has shape (C_out, C_in/groups, k_h, k_w);
// an empty bias means "no bias".
template <typename T>
struct ConvWeights {
  Tensor<T> kernel;
  std::vector<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t c_out() const { return kernel.n(); }
  std::size_t c_in() const { return kernel.c() * groups; }
  std::size_t kh() const { return kernel.h(); }
  std::size_t kw() const { return kernel.w(); }
  bool has_bias() const { return !bias.empty(); }
  std::size_t param_count() const { return kernel.size() + bias.size(); }

  // Square kernel with padding k/2, zero-initialised.
  static ConvWeights make(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t groups = 1,
                          bool with_bias = true) {
    if (groups == 0 || c_in % groups != 0 || c_out % groups != 0)
      throw DimensionError("groups", "groups=" + std::to_string(groups) + " must divide C_in=" +
                                         std::to_string(c_in) + " and C_out=" + std::to_string(c_out));
    ConvWeights w;
    w.kernel = Tensor<T>({c_out, c_in / groups, k, k});
    if (with_bias) w.bias.assign(c_out, T(0));
    w.padding = k / 2;
    w.groups = groups;
    return w;
  }

  template <typename U>
  ConvWeights<U> cast() const {
    ConvWeights<U> o;
    o.kernel = kernel.template cast<U>();
    o.bias.assign(bias.begin(), bias.end());
    o.stride = stride;
    o.padding = padding;
    o.groups = groups;
    return o;
  }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  std::vector<T> bias;
};

namespace detail {

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride,
                                const char* axis) {
  if (in + 2 * pad < k)
    throw DimensionError(axis, std::string("conv2d: padded ") + axis + " extent " +
                                   std::to_string(in + 2 * pad) + " smaller than kernel " +
                                   std::to_string(k));
  return (in + 2 * pad - k) / stride + 1;
}

// Range of output columns [lo, hi) whose input column o*stride + k - pad lies in [0, in).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                       std::size_t pad, std::size_t stride) {
  const long s = static_cast<long>(stride);
  const long off = static_cast<long>(k) - static_cast<long>(pad);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi_incl = (static_cast<long>(in) - 1 - off);
  long hi = hi_incl < 0 ? 0 : hi_incl / s + 1;
  lo = std::min<long>(lo, static_cast<long>(out));
  hi = std::clamp<long>(hi, lo, static_cast<long>(out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void check_conv(const Tensor<T>& x, const ConvWeights<T>& w) {
  if (w.groups == 0 || w.c_out() % w.groups != 0)
    throw DimensionError("groups", "conv2d: groups must divide C_out");
  if (x.c() != w.c_in())
    throw DimensionError("C", "conv2d: input has " + std::to_string(x.c()) + " channels, weights expect " +
                                  std::to_string(w.c_in()));
  if (w.stride == 0) throw DimensionError("stride", "conv2d: stride must be >= 1");
  if (w.has_bias() && w.bias.size() != w.c_out())
    throw DimensionError("bias", "conv2d: bias length " + std::to_string(w.bias.size()) + " != C_out " +
                                     std::to_string(w.c_out()));
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvWeights<T>& w) {
  detail::check_conv(x, w);
  const std::size_t oh = detail::conv_out_dim(x.h(), w.kh(), w.padding, w.stride, "H");
  const std::size_t ow = detail::conv_out_dim(x.w(), w.kw(), w.padding, w.stride, "W");
  Tensor<T> y({x.n(), w.c_out(), oh, ow});
  const std::size_t cin_g = w.kernel.c(), cout_g = w.c_out() / w.groups;
  const std::size_t s = w.stride, p = w.padding;
  const std::size_t work = cin_g * w.kh() * w.kw() * oh * ow;

  detail::parallel_for(x.n() * w.c_out(), work, [&](std::size_t job) {
    const std::size_t n = job / w.c_out(), oc = job % w.c_out();
    const std::size_t g = oc / cout_g;
    T* out = y.plane(n, oc);
    std::fill(out, out + oh * ow, w.has_bias() ? w.bias[oc] : T(0));
    for (std::size_t icg = 0; icg < cin_g; ++icg) {
      const T* in = x.plane(n, g * cin_g + icg);
      for (std::size_t ky = 0; ky < w.kh(); ++ky) {
        const auto [ylo, yhi] = detail::valid_range(oh, x.h(), ky, p, s);
        for (std::size_t kx = 0; kx < w.kw(); ++kx) {
          const T wv = w.kernel(oc, icg, ky, kx);
          const auto [xlo, xhi] = detail::valid_range(ow, x.w(), kx, p, s);
          if (xlo >= xhi) continue;
          const std::size_t len = xhi - xlo;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const T* in_row = in + (oy * s + ky - p) * x.w() + (xlo * s + kx - p);
            T* out_row = out + oy * ow + xlo;
            if (s == 1) {
              for (std::size_t i = 0; i < len; ++i) out_row[i] += wv * in_row[i];
            } else {
              for (std::size_t i = 0; i < len; ++i) out_row[i] += wv * in_row[i * s];
            }
          }
        }
      }
    }
  });
  return y;
}

// Vector-Jacobian product of conv2d with respect to input, kernel and bias.
template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& x, const ConvWeights<T>& w, const Tensor<T>& dy,
                        bool need_input = true) {
  detail::check_conv(x, w);
  const std::size_t oh = detail::conv_out_dim(x.h(), w.kh(), w.padding, w.stride, "H");
  const std::size_t ow = detail::conv_out_dim(x.w(), w.kw(), w.padding, w.stride, "W");
  if (dy.shape() != Shape{x.n(), w.c_out(), oh, ow})
    throw DimensionError("cotangent", "conv2d_vjp: cotangent shape " + dy.shape().str());
  const std::size_t cin_g = w.kernel.c(), cout_g = w.c_out() / w.groups;
  const std::size_t s = w.stride, p = w.padding;

  ConvGrads<T> g;
  g.kernel = Tensor<T>(w.kernel.shape());
  if (w.has_bias()) g.bias.assign(w.c_out(), T(0));

  if (need_input) {
    g.input = Tensor<T>(x.shape());
    const std::size_t work = cout_g * w.kh() * w.kw() * oh * ow;
    detail::parallel_for(x.n() * x.c(), work, [&](std::size_t job) {
      const std::size_t n = job / x.c(), ic = job % x.c();
      const std::size_t grp = ic / cin_g, icg = ic % cin_g;
      T* din = g.input.plane(n, ic);
      for (std::size_t ocg = 0; ocg < cout_g; ++ocg) {
        const std::size_t oc = grp * cout_g + ocg;
        const T* d = dy.plane(n, oc);
        for (std::size_t ky = 0; ky < w.kh(); ++ky) {
          const auto [ylo, yhi] = detail::valid_range(oh, x.h(), ky, p, s);
          for (std::size_t kx = 0; kx < w.kw(); ++kx) {
            const T wv = w.kernel(oc, icg, ky, kx);
            const auto [xlo, xhi] = detail::valid_range(ow, x.w(), kx, p, s);
            for (std::size_t oy = ylo; oy < yhi && xlo < xhi; ++oy) {
              T* in_row = din + (oy * s + ky - p) * x.w() + (xlo * s + kx - p);
              const T* d_row = d + oy * ow + xlo;
              for (std::size_t i = 0; i < xhi - xlo; ++i) in_row[i * s] += wv * d_row[i];
            }
          }
        }
      }
    });
  }

  const std::size_t work = x.n() * cin_g * w.kh() * w.kw() * oh * ow;
  detail::parallel_for(w.c_out(), work, [&](std::size_t oc) {
    const std::size_t grp = oc / cout_g;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* d = dy.plane(n, oc);
      if (w.has_bias()) {
        T acc = 0;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += d[i];
        g.bias[oc] += acc;
      }
      for (std::size_t icg = 0; icg < cin_g; ++icg) {
        const T* in = x.plane(n, grp * cin_g + icg);
        for (std::size_t ky = 0; ky < w.kh(); ++ky) {
          const auto [ylo, yhi] = detail::valid_range(oh, x.h(), ky, p, s);
          for (std::size_t kx = 0; kx < w.kw(); ++kx) {
            const auto [xlo, xhi] = detail::valid_range(ow, x.w(), kx, p, s);
            T acc = 0;
            for (std::size_t oy = ylo; oy < yhi && xlo < xhi; ++oy) {
              const T* in_row = in + (oy * s + ky - p) * x.w() + (xlo * s + kx - p);
              const T* d_row = d + oy * ow + xlo;
              for (std::size_t i = 0; i < xhi - xlo; ++i) acc += d_row[i] * in_row[i * s];
            }
            g.kernel(oc, icg, ky, kx) += acc;
          }
        }
      }
    }
  });
  return g;
}

// Depth-to-space: out(n, c, h*r+a, w*r+b) = in(n, c*r*r + a*r + b, h, w).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  if (r == 0 || x.c() % (r * r) != 0)
    throw DimensionError("C", "pixel_shuffle: channels " + std::to_string(x.c()) + " not divisible by r^2=" +
                                  std::to_string(r * r));
  const std::size_t co = x.c() / (r * r);
  Tensor<T> y({x.n(), co, x.h() * r, x.w() * r});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < co; ++c)
      for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < r; ++b) {
          const T* in = x.plane(n, c * r * r + a * r + b);
          for (std::size_t h = 0; h < x.h(); ++h)
            for (std::size_t w = 0; w < x.w(); ++w) y(n, c, h * r + a, w * r + b) = in[h * x.w() + w];
        }
  return y;
}

// Adjoint (and inverse) of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& y, std::size_t r) {
  if (r == 0 || y.h() % r != 0 || y.w() % r != 0)
    throw DimensionError("H", "pixel_unshuffle: spatial dims not divisible by r");
  const std::size_t h = y.h() / r, w = y.w() / r;
  Tensor<T> x({y.n(), y.c() * r * r, h, w});
  for (std::size_t n = 0; n < y.n(); ++n)
    for (std::size_t c = 0; c < y.c(); ++c)
      for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < r; ++b) {
          T* out = x.plane(n, c * r * r + a * r + b);
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * w + j] = y(n, c, i * r + a, j * r + b);
        }
  return x;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.c())
    throw DimensionError("C", "slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                  ") exceeds " + std::to_string(x.c()) + " channels");
  Tensor<T> y({x.n(), count, x.h(), x.w()});
  const std::size_t plane = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n)
    if (count > 0) std::copy_n(x.plane(n, begin), count * plane, y.plane(n, 0));
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_split(const Tensor<T>& x, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("channel_split: alpha " + std::to_string(alpha) + " outside (0, 1]");
  const std::size_t k = split_count(alpha, x.c());
  if (k < 1) throw DimensionError("C", "channel_split: round(alpha*C) must be >= 1");
  return {slice_channels(x, 0, k), slice_channels(x, k, x.c() - k)};
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n()) throw DimensionError("N", "concat_channels: batch mismatch");
  if (a.h() != b.h()) throw DimensionError("H", "concat_channels: height mismatch");
  if (a.w() != b.w()) throw DimensionError("W", "concat_channels: width mismatch");
  Tensor<T> y({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t plane = a.h() * a.w();
  for (std::size_t n = 0; n < a.n(); ++n) {
    if (a.c() > 0) std::copy_n(a.plane(n, 0), a.c() * plane, y.plane(n, 0));
    if (b.c() > 0) std::copy_n(b.plane(n, 0), b.c() * plane, y.plane(n, a.c()));
  }
  return y;
}

// out channel j takes input channel indices[j]; adjoint is a scatter-add.
template <typename T>
Tensor<T> gather_channels(const Tensor<T>& x, std::span<const std::size_t> indices) {
  Tensor<T> y({x.n(), indices.size(), x.h(), x.w()});
  const std::size_t plane = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t j = 0; j < indices.size(); ++j) {
      if (indices[j] >= x.c()) throw DimensionError("C", "gather_channels: index out of range");
      std::copy_n(x.plane(n, indices[j]), plane, y.plane(n, j));
    }
  return y;
}

template <typename T>
Tensor<T> scatter_add_channels(const Tensor<T>& dy, std::span<const std::size_t> indices, std::size_t channels) {
  Tensor<T> dx({dy.n(), channels, dy.h(), dy.w()});
  const std::size_t plane = dy.h() * dy.w();
  for (std::size_t n = 0; n < dy.n(); ++n)
    for (std::size_t j = 0; j < indices.size(); ++j) {
      const T* src = dy.plane(n, j);
      T* dst = dx.plane(n, indices[j]);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  return dx;
}

// Source channel for each output slot of a g-group channel shuffle. Input
// channel c lands at (c mod g) * (C/g) + c/g.
inline std::vector<std::size_t> shuffle_permutation(std::size_t channels, std::size_t g) {
  if (g == 0 || channels % g != 0)
    throw DimensionError("C", "channel_shuffle: channels " + std::to_string(channels) + " not divisible by g=" +
                                  std::to_string(g));
  std::vector<std::size_t> src(channels);
  const std::size_t per = channels / g;
  for (std::size_t c = 0; c < channels; ++c) src[(c % g) * per + c / g] = c;
  return src;
}

template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, std::size_t g) {
  const auto src = shuffle_permutation(x.c(), g);
  return gather_channels<T>(x, src);
}

template <typename T>
Tensor<T> channel_shuffle_vjp(const Tensor<T>& dy, std::size_t g) {
  const auto src = shuffle_permutation(dy.c(), g);
  return scatter_add_channels<T>(dy, src, dy.c());
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data()) v = std::max(v, T(0));
  return y;
}

// Derivative at 0 taken as 0.
template <typename T>
Tensor<T> relu_vjp(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x.data()[i] > T(0))) dx.data()[i] = T(0);
  return dx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw DimensionError("shape", "add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += b.data()[i];
  return y;
}

template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("shape", "l1_loss: " + pred.shape().str() + " vs " + target.shape().str());
  long double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.data()[i] - target.data()[i]);
  return static_cast<T>(acc / static_cast<long double>(pred.size()));
}

// d(loss)/d(pred) scaled by the upstream scalar cotangent; sign(0) = 0.
template <typename T>
Tensor<T> l1_loss_vjp(const Tensor<T>& pred, const Tensor<T>& target, T cotangent = T(1)) {
  Tensor<T> g(pred.shape());
  const T scale = cotangent / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred.data()[i] - target.data()[i];
    g.data()[i] = d > 0 ? scale : (d < 0 ? -scale : T(0));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Resampling. Output index i on an axis maps to source coordinate
//   (i + out_origin + 0.5) / scale - 0.5 - src_origin
// i.e. half-pixel centres, no corner alignment. Taps outside the source are
// clamped to the edge. The origins let a tile be resampled in the global
// coordinate frame of the image it was cut from.

struct AxisGrid {
  std::size_t out = 0;
  double scale = 1.0;
  double out_origin = 0.0;
  double src_origin = 0.0;
};

enum class ResizeKernel { Bilinear, Bicubic };

namespace detail {

inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct AxisTaps {
  std::size_t width = 0;
  std::vector<std::size_t> index;  // out * width
  std::vector<double> weight;      // out * width
};

// Bicubic widens its kernel by 1/scale when shrinking (antialiasing);
// bilinear never does.
inline AxisTaps make_taps(std::size_t in, const AxisGrid& g, ResizeKernel kernel) {
  AxisTaps taps;
  const bool bicubic = kernel == ResizeKernel::Bicubic;
  const double stretch = (bicubic && g.scale < 1.0) ? g.scale : 1.0;
  const double support = (bicubic ? 2.0 : 1.0) / stretch;
  taps.width = static_cast<std::size_t>(std::ceil(2.0 * support)) + 1;
  taps.index.resize(g.out * taps.width);
  taps.weight.resize(g.out * taps.width);
  const long last = static_cast<long>(in) - 1;
  for (std::size_t i = 0; i < g.out; ++i) {
    const double s = (static_cast<double>(i) + g.out_origin + 0.5) / g.scale - 0.5 - g.src_origin;
    const long first = static_cast<long>(std::floor(s - support)) + 1;
    double total = 0.0;
    for (std::size_t k = 0; k < taps.width; ++k) {
      const long src = first + static_cast<long>(k);
      const double d = (s - static_cast<double>(src)) * stretch;
      double wv = bicubic ? cubic_weight(d) : std::max(0.0, 1.0 - std::abs(d));
      wv *= stretch;
      taps.index[i * taps.width + k] = static_cast<std::size_t>(std::clamp<long>(src, 0, last));
      taps.weight[i * taps.width + k] = wv;
      total += wv;
    }
    if (bicubic && total != 0.0)
      for (std::size_t k = 0; k < taps.width; ++k) taps.weight[i * taps.width + k] /= total;
  }
  return taps;
}

}  // namespace detail

template <typename T>
Tensor<T> resample(const Tensor<T>& x, const AxisGrid& gy, const AxisGrid& gx, ResizeKernel kernel) {
  if (!(gy.scale > 0.0) || !(gx.scale > 0.0)) throw std::invalid_argument("resample: scale must be > 0");
  if (gy.out == 0 || gx.out == 0) throw DimensionError("H", "resample: empty output");
  const auto ty = detail::make_taps(x.h(), gy, kernel);
  const auto tx = detail::make_taps(x.w(), gx, kernel);
  Tensor<T> y({x.n(), x.c(), gy.out, gx.out});
  std::vector<double> rows(x.h() * gx.out);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* in = x.plane(n, c);
      for (std::size_t r = 0; r < x.h(); ++r)
        for (std::size_t j = 0; j < gx.out; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < tx.width; ++k)
            acc += tx.weight[j * tx.width + k] * static_cast<double>(in[r * x.w() + tx.index[j * tx.width + k]]);
          rows[r * gx.out + j] = acc;
        }
      T* out = y.plane(n, c);
      for (std::size_t i = 0; i < gy.out; ++i)
        for (std::size_t j = 0; j < gx.out; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < ty.width; ++k)
            acc += ty.weight[i * ty.width + k] * rows[ty.index[i * ty.width + k] * gx.out + j];
          out[i * gx.out + j] = static_cast<T>(acc);
        }
    }
  return y;
}

inline std::size_t scaled_extent(std::size_t n, double scale) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale));
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("bilinear_resize: scale must be > 0");
  return resample(x, AxisGrid{scaled_extent(x.h(), scale), scale}, AxisGrid{scaled_extent(x.w(), scale), scale},
                  ResizeKernel::Bilinear);
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be > 0");
  return resample(x, AxisGrid{scaled_extent(x.h(), scale), scale}, AxisGrid{scaled_extent(x.w(), scale), scale},
                  ResizeKernel::Bicubic);
}

// ---------------------------------------------------------------------------
// Uniform vjp entry point over the fixed op set.

enum class OpKind {
  Conv2d,
  PixelShuffle,
  ChannelSplit,
  ConcatChannels,
  ChannelShuffle,
  Relu,
  Add,
  L1Loss,
  GatherChannels,
  BilinearResize,
  BicubicResize,
};

inline std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::PixelShuffle: return "pixel_shuffle";
    case OpKind::ChannelSplit: return "channel_split";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::ChannelShuffle: return "channel_shuffle";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::L1Loss: return "l1_loss";
    case OpKind::GatherChannels: return "gather_channels";
    case OpKind::BilinearResize: return "bilinear_resize";
    case OpKind::BicubicResize: return "bicubic_resize";
  }
  return "unknown";
}

class UnsupportedOpError : public std::logic_error {
public:
  explicit UnsupportedOpError(OpKind k)
      : std::logic_error("vjp not defined for op '" + std::string(op_name(k)) + "'"), kind_(k) {}
  OpKind kind() const noexcept { return kind_; }

private:
  OpKind kind_;
};

struct OpAttrs {
  std::size_t stride = 1, padding = 0, groups = 1;
  std::size_t factor = 1;  // pixel-shuffle r or channel-shuffle g
  double alpha = 1.0;      // channel_split ratio
  std::vector<std::size_t> indices;
};

// inputs / cotangents by op:
//   Conv2d          {x, kernel, bias as (1,C_out,1,1) or absent} / {dy}  -> {dx, dkernel[, dbias]}
//   ChannelSplit    {x} / {d_first, d_second}                            -> {dx}
//   ConcatChannels  {a, b} / {dy}                                        -> {da, db}
//   Add             {a, b} / {dy}                                        -> {da, db}
//   L1Loss          {pred, target} / {scalar (1,1,1,1)}                  -> {dpred, dtarget}
//   others          {x} / {dy}                                           -> {dx}
template <typename T>
std::vector<Tensor<T>> vjp(OpKind kind, const OpAttrs& attrs, std::span<const Tensor<T>> inputs,
                           std::span<const Tensor<T>> cot) {
  auto need = [&](std::size_t ni, std::size_t nc) {
    if (inputs.size() < ni || cot.size() < nc)
      throw std::invalid_argument("vjp(" + std::string(op_name(kind)) + "): wrong number of operands");
  };
  switch (kind) {
    case OpKind::Conv2d: {
      need(2, 1);
      ConvWeights<T> w;
      w.kernel = inputs[1];
      w.stride = attrs.stride;
      w.padding = attrs.padding;
      w.groups = attrs.groups;
      if (inputs.size() > 2) w.bias.assign(inputs[2].data().begin(), inputs[2].data().end());
      auto g = conv2d_vjp(inputs[0], w, cot[0]);
      std::vector<Tensor<T>> out{std::move(g.input), std::move(g.kernel)};
      if (w.has_bias()) out.emplace_back(Shape{1, g.bias.size(), 1, 1}, std::move(g.bias));
      return out;
    }
    case OpKind::PixelShuffle:
      need(1, 1);
      return {pixel_unshuffle(cot[0], attrs.factor)};
    case OpKind::ChannelSplit: {
      need(1, 2);
      return {concat_channels(cot[0], cot[1])};
    }
    case OpKind::ConcatChannels:
      need(2, 1);
      return {slice_channels(cot[0], 0, inputs[0].c()), slice_channels(cot[0], inputs[0].c(), inputs[1].c())};
    case OpKind::ChannelShuffle:
      need(1, 1);
      return {channel_shuffle_vjp(cot[0], attrs.factor)};
    case OpKind::Relu:
      need(1, 1);
      return {relu_vjp(inputs[0], cot[0])};
    case OpKind::Add:
      need(2, 1);
      return {cot[0], cot[0]};
    case OpKind::L1Loss: {
      need(2, 1);
      auto d = l1_loss_vjp(inputs[0], inputs[1], cot[0].data()[0]);
      Tensor<T> dt = d;
      for (auto& v : dt.data()) v = -v;
      return {std::move(d), std::move(dt)};
    }
    case OpKind::GatherChannels:
      need(1, 1);
      return {scatter_add_channels<T>(cot[0], attrs.indices, inputs[0].c())};
    case OpKind::BilinearResize:
    case OpKind::BicubicResize:
      break;
  }
  throw UnsupportedOpError(kind);
}

}  // namespace splitsr
