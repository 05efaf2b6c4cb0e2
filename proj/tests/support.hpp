#pragma once

// Test-only oracles: brute-force kernels and central finite differences.
// Nothing here calls the optimised implementation paths it is used to check.

#include <cmath>
#include <functional>
#include <random>

#include "splitsr/ops.hpp"

namespace splitsr::test {

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

template <typename T>
ConvWeights<T> random_conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups, std::size_t stride,
                           std::size_t pad, bool bias, std::mt19937_64& rng) {
  auto w = ConvWeights<T>::make(cin, cout, k, groups, bias);
  w.stride = stride;
  w.padding = pad;
  w.kernel = random_tensor<T>(w.kernel.shape(), rng);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& b : w.bias) b = static_cast<T>(d(rng));
  return w;
}

// Direct evaluation of the convolution sum, one output element at a time.
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const ConvWeights<T>& w) {
  const long k_h = static_cast<long>(w.kh()), k_w = static_cast<long>(w.kw());
  const long p = static_cast<long>(w.padding), s = static_cast<long>(w.stride);
  const long oh = (static_cast<long>(x.h()) + 2 * p - k_h) / s + 1;
  const long ow = (static_cast<long>(x.w()) + 2 * p - k_w) / s + 1;
  Tensor<T> y({x.n(), w.c_out(), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  const std::size_t cin_g = w.kernel.c(), cout_g = w.c_out() / w.groups;
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t oc = 0; oc < w.c_out(); ++oc)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          T acc = w.has_bias() ? w.bias[oc] : T(0);
          for (std::size_t icg = 0; icg < cin_g; ++icg)
            for (long a = 0; a < k_h; ++a)
              for (long b = 0; b < k_w; ++b) {
                const long yy = i * s + a - p, xx = j * s + b - p;
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(x.h()) || xx >= static_cast<long>(x.w())) continue;
                acc += w.kernel(oc, icg, a, b) *
                       x(n, (oc / cout_g) * cin_g + icg, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
              }
          y(n, oc, i, j) = acc;
        }
  return y;
}

// Per-pixel bilinear sample with half-pixel centres and clamped coordinates.
inline double bilinear_at(const TensorD& x, std::size_t n, std::size_t c, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(x.h() - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(x.w() - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, x.h() - 1), x1 = std::min(x0 + 1, x.w() - 1);
  const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * x(n, c, y0, x0) + fx * x(n, c, y0, x1)) +
         fy * ((1 - fx) * x(n, c, y1, x0) + fx * x(n, c, y1, x1));
}

inline TensorD naive_bilinear(const TensorD& x, double scale) {
  const auto oh = static_cast<std::size_t>(std::llround(x.h() * scale));
  const auto ow = static_cast<std::size_t>(std::llround(x.w() * scale));
  TensorD y({x.n(), x.c(), oh, ow});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
          y(n, c, i, j) = bilinear_at(x, n, c, (i + 0.5) / scale - 0.5, (j + 0.5) / scale - 0.5);
  return y;
}

// Central-difference gradient of a scalar function of one tensor.
inline TensorD numeric_grad(const std::function<double(const TensorD&)>& f, const TensorD& x, double h = 1e-6) {
  TensorD g(x.shape());
  TensorD probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = probe.data()[i];
    probe.data()[i] = v + h;
    const double fp = f(probe);
    probe.data()[i] = v - h;
    const double fm = f(probe);
    probe.data()[i] = v;
    g.data()[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

struct GradCheck {
  double worst = 0;      // largest relative error where |reference| >= floor
  double worst_abs = 0;  // largest absolute error where |reference| < floor
  bool ok(double rel_tol, double abs_tol = 1e-4) const { return worst < rel_tol && worst_abs < abs_tol; }
};

// Elementwise relative error; entries whose reference magnitude is below
// `floor` are compared absolutely instead.
inline GradCheck compare_grads(const TensorD& analytic, const TensorD& reference, double floor = 1e-8) {
  GradCheck r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i], n = reference.data()[i];
    if (std::abs(n) < floor) r.worst_abs = std::max(r.worst_abs, std::abs(a - n));
    else r.worst = std::max(r.worst, std::abs(a - n) / std::abs(n));
  }
  return r;
}

inline double unit_uniform_test(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0, 1)(rng); }

inline TensorD bias_tensor(const std::vector<double>& b) { return TensorD({1, b.size(), 1, 1}, b); }

}  // namespace splitsr::test
