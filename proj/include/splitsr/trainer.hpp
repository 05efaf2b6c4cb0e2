#pragma once

#include <cstdio>
#include <ostream>

#include "splitsr/eval.hpp"
#include "splitsr/exec.hpp"
#include "splitsr/network.hpp"

namespace splitsr {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::size_t batch_size = 16;
  std::size_t hr_patch = 96;
  std::size_t steps = 2000;
  std::size_t decay_every = 0;  // 0 = steps / 3
  std::uint64_t seed = 1;

  std::size_t decay_period() const { return decay_every ? decay_every : std::max<std::size_t>(1, steps / 3); }
  // Halved once per completed decay period.
  double lr_at(std::size_t step) const { return learning_rate * std::ldexp(1.0, -static_cast<int>(step / decay_period())); }

  void validate(std::size_t scale) const {
    if (!(learning_rate > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || !(epsilon > 0))
      throw std::invalid_argument("optimizer hyperparameters out of range");
    if (batch_size == 0 || hr_patch == 0) throw std::invalid_argument("batch_size and hr_patch must be positive");
    if (hr_patch % scale != 0)
      throw std::invalid_argument("hr_patch " + std::to_string(hr_patch) + " is not divisible by scale " +
                                  std::to_string(scale));
  }
};

// ---------------------------------------------------------------------------
// Synthetic data: blurred colour noise plus a few blurred hard edges.

namespace detail {

inline void gaussian_blur(TensorF& img, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * r + 1);
  double s = 0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-i * i / (2 * sigma * sigma));
  for (auto& v : k) v /= s;
  const long h = static_cast<long>(img.h()), w = static_cast<long>(img.w());
  std::vector<double> tmp(img.h() * img.w());
  for (std::size_t c = 0; c < img.c(); ++c) {
    float* p = img.plane(0, c);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * p[y * w + std::clamp(x + i, 0L, w - 1)];
        tmp[y * w + x] = acc;
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[std::clamp(y + i, 0L, h - 1) * w + x];
        p[y * w + x] = static_cast<float>(acc);
      }
  }
}

}  // namespace detail

inline TensorF synthetic_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); };
  TensorF img({1, 3, h, w});
  // Texture: white noise blurred to a random bandwidth, one shared luminance
  // field plus weaker per-channel colour.
  TensorF lum({1, 1, h, w});
  for (auto& v : lum.data()) v = static_cast<float>(u(-1, 1));
  detail::gaussian_blur(lum, u(0.8, 2.0));
  TensorF chroma({1, 3, h, w});
  for (auto& v : chroma.data()) v = static_cast<float>(u(-1, 1));
  detail::gaussian_blur(chroma, 3.0);
  const double base[3] = {u(60, 190), u(60, 190), u(60, 190)};
  const double amp = u(150, 300);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i)
      img.plane(0, c)[i] = static_cast<float>(base[c] + amp * lum.data()[i] + 0.5 * amp * chroma.plane(0, c)[i]);
  // Edges: half-planes with a colour offset.
  TensorF edges({1, 3, h, w});
  const int count = 2 + static_cast<int>(rng() % 4);
  for (int e = 0; e < count; ++e) {
    const double th = u(0, 2 * std::numbers::pi), cx = u(0, static_cast<double>(w)), cy = u(0, static_cast<double>(h));
    const double d[3] = {u(-80, 80), u(-80, 80), u(-80, 80)};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if ((static_cast<double>(x) - cx) * std::cos(th) + (static_cast<double>(y) - cy) * std::sin(th) > 0)
          for (std::size_t c = 0; c < 3; ++c) edges(0, c, y, x) += static_cast<float>(d[c]);
  }
  detail::gaussian_blur(edges, 0.7);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] += edges.data()[i];
  return quantize(img);
}

// `count` HR images of size×size with bicubic-degraded LR partners.
inline Dataset synthetic_dataset(std::size_t count, std::size_t size, std::size_t scale, std::uint64_t seed) {
  if (size % scale != 0) throw std::invalid_argument("synthetic image size must be divisible by scale");
  Dataset ds;
  ds.id = "synthetic-" + std::to_string(seed);
  ds.scale = scale;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    ImagePair p;
    p.id = "syn" + std::to_string(i);
    p.hr = synthetic_image(size, size, rng);
    p.lr = bicubic_degrade(p.hr, scale);
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Patch sampling with flip/rotation augmentation.

struct PatchDraw {
  std::size_t image = 0;
  std::size_t ly = 0, lx = 0;  // LR patch origin
  bool flip = false;           // horizontal, applied before rotation
  unsigned rot = 0;            // quarter turns counter-clockwise
};

// Square (1,C,S,S) patch of `src` at (y0,x0), flipped then rotated.
inline void copy_patch(const TensorF& src, std::size_t y0, std::size_t x0, std::size_t s, bool flip, unsigned rot,
                       TensorF& dst, std::size_t n) {
  if (y0 + s > src.h() || x0 + s > src.w()) throw DimensionError("H", "patch outside image");
  for (std::size_t c = 0; c < src.c(); ++c)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        // Destination (i,j) reads the source position that lands there.
        std::size_t a = i, b = j;
        for (unsigned r = 0; r < rot; ++r) {
          const std::size_t na = b, nb = s - 1 - a;
          a = na;
          b = nb;
        }
        if (flip) b = s - 1 - b;
        dst(n, c, i, j) = src(0, c, y0 + a, x0 + b);
      }
}

inline std::vector<PatchDraw> draw_batch(const Dataset& ds, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (ds.pairs.empty()) throw std::invalid_argument("training dataset is empty");
  const std::size_t lp = cfg.hr_patch / ds.scale;
  std::vector<PatchDraw> draws(cfg.batch_size);
  for (auto& d : draws) {
    d.image = static_cast<std::size_t>(rng() % ds.pairs.size());
    const auto& lr = ds.pairs[d.image].lr;
    if (lr.h() < lp || lr.w() < lp)
      throw DimensionError("H", "image '" + ds.pairs[d.image].id + "' is smaller than the training patch");
    d.ly = static_cast<std::size_t>(rng() % (lr.h() - lp + 1));
    d.lx = static_cast<std::size_t>(rng() % (lr.w() - lp + 1));
    d.flip = (rng() & 1) != 0;
    d.rot = static_cast<unsigned>(rng() % 4);
  }
  return draws;
}

struct Batch {
  TensorF lr;
  TensorF hr;
};

inline Batch assemble_batch(const Dataset& ds, const TrainConfig& cfg, const std::vector<PatchDraw>& draws) {
  const std::size_t s = ds.scale, lp = cfg.hr_patch / s;
  Batch b{TensorF({draws.size(), 3, lp, lp}), TensorF({draws.size(), 3, cfg.hr_patch, cfg.hr_patch})};
  for (std::size_t n = 0; n < draws.size(); ++n) {
    const auto& d = draws[n];
    const auto& p = ds.pairs[d.image];
    copy_patch(p.lr, d.ly, d.lx, lp, d.flip, d.rot, b.lr, n);
    copy_patch(p.hr, d.ly * s, d.lx * s, cfg.hr_patch, d.flip, d.rot, b.hr, n);
  }
  return b;
}

inline Batch sample_batch(const Dataset& ds, const TrainConfig& cfg, std::mt19937_64& rng) {
  cfg.validate(ds.scale);
  return assemble_batch(ds, cfg, draw_batch(ds, cfg, rng));
}

// ---------------------------------------------------------------------------
// Adam.

struct Moments {
  TensorF m_kernel, v_kernel;
  std::vector<float> m_bias, v_bias;
};

struct OptimizerState {
  std::vector<Moments> moments;  // one per conv, in for_each_conv order
  std::size_t step = 0;
};

inline OptimizerState make_optimizer_state(const Network<float>& net) {
  OptimizerState st;
  net.for_each_conv([&](const std::string&, const ConvWeights<float>& w) {
    st.moments.push_back({TensorF(w.kernel.shape()), TensorF(w.kernel.shape()), std::vector<float>(w.bias.size()),
                          std::vector<float>(w.bias.size())});
  });
  return st;
}

// One bias-corrected Adam update at learning rate `lr`.
inline void adam_update(std::span<float> w, std::span<const float> g, std::span<float> m, std::span<float> v, double lr,
                        const TrainConfig& cfg, std::size_t t) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    w[i] = static_cast<float>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon));
  }
}

// Applies one optimizer step given per-conv gradients in for_each_conv order.
inline void adam_step(Network<float>& net, const std::vector<ConvGrads<float>>& grads, OptimizerState& st,
                      const TrainConfig& cfg) {
  if (grads.size() != st.moments.size()) throw std::invalid_argument("adam_step: gradient count mismatch");
  const double lr = cfg.lr_at(st.step);
  const std::size_t t = ++st.step;
  std::size_t i = 0;
  net.for_each_conv([&](const std::string&, ConvWeights<float>& w) {
    auto& mo = st.moments[i];
    const auto& g = grads[i++];
    adam_update(w.kernel.data(), g.kernel.data(), mo.m_kernel.data(), mo.v_kernel.data(), lr, cfg, t);
    adam_update(w.bias, g.bias, mo.m_bias, mo.v_bias, lr, cfg, t);
  });
}

// ---------------------------------------------------------------------------
// Training loop.

class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(std::size_t step, const std::string& what) : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

struct TracePoint {
  std::size_t step = 0;
  double lr = 0;
  double loss = 0;
};

struct LossTrace {
  std::vector<TracePoint> points;

  void write_csv(std::ostream& os) const {
    os << "step,lr,loss\n";
    char buf[96];
    for (const auto& p : points) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", p.step, p.lr, p.loss);
      os << buf;
    }
  }
  // Means over consecutive windows of `window` steps (a trailing partial
  // window is dropped).
  std::vector<double> window_means(std::size_t window) const {
    std::vector<double> out;
    for (std::size_t i = 0; i + window <= points.size(); i += window) {
      double s = 0;
      for (std::size_t k = i; k < i + window; ++k) s += points[k].loss;
      out.push_back(s / static_cast<double>(window));
    }
    return out;
  }
};

// Loss and per-conv gradients for one batch.
inline std::pair<double, std::vector<ConvGrads<float>>> loss_and_grads(const Network<float>& net, const Batch& b) {
  Tape<float> tape;
  auto x = tape.input(b.lr, false);
  auto loss = tape.l1_loss(net.run(tape, x), tape.constant(b.hr));
  tape.backward(loss);
  std::vector<ConvGrads<float>> grads;
  net.for_each_conv([&](const std::string&, const ConvWeights<float>& w) { grads.push_back(tape.param_grad(w)); });
  return {static_cast<double>(tape.value(loss).data()[0]), std::move(grads)};
}

using TrainObserver = std::function<void(const TracePoint&)>;

// Runs `cfg.steps` Adam steps. All sampling randomness comes from one stream
// seeded with cfg.seed, drawn in step order.
inline LossTrace train(Network<float>& net, const Dataset& ds, const TrainConfig& cfg, const TrainObserver& observe = {}) {
  if (ds.scale != net.config().scale)
    throw std::invalid_argument("dataset scale " + std::to_string(ds.scale) + " does not match network scale " +
                                std::to_string(net.config().scale));
  cfg.validate(ds.scale);
  std::mt19937_64 rng(cfg.seed);
  auto st = make_optimizer_state(net);
  LossTrace trace;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = assemble_batch(ds, cfg, draw_batch(ds, cfg, rng));
    auto [loss, grads] = loss_and_grads(net, batch);
    if (!std::isfinite(loss))
      throw TrainingDiverged(step, "training diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")");
    const TracePoint p{step, cfg.lr_at(st.step), loss};
    adam_step(net, grads, st, cfg);
    trace.points.push_back(p);
    if (observe) observe(p);
  }
  return trace;
}

// Copies head and body weights from a trained ×2 model into a ×4 model of
// otherwise identical configuration. The upsampler and output conv keep their
// initial values.
inline void transfer_pretrained(const Network<float>& x2, Network<float>& x4) {
  auto a = x2.config(), b = x4.config();
  a.scale = b.scale;
  if (!(a == b)) throw std::invalid_argument("pretrain transfer needs matching configs apart from scale");
  std::map<std::string, const ConvWeights<float>*> src;
  x2.for_each_conv([&](const std::string& n, const ConvWeights<float>& w) { src[n] = &w; });
  x4.for_each_conv([&](const std::string& n, ConvWeights<float>& w) {
    if (n == "head" || n.starts_with("body.") || n == "fe_tail") w = *src.at(n);
  });
}

inline Upscaler network_upscaler(const Network<float>& net) {
  return [&net](const TensorF& lr, std::size_t scale) {
    if (scale != net.config().scale) throw std::invalid_argument("network scale mismatch");
    return net.forward(lr);
  };
}

}  // namespace splitsr
