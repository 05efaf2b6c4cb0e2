#pragma once

#include <set>

#include "splitsr/network.hpp"

namespace splitsr {

// Closed-form computation-reduction ratios of the lightweight blocks.

inline double reduction_shuffle(double alpha1, double kernel, double channels) {
  return 1.0 / (2.0 * kernel * kernel) + alpha1 / channels;
}

inline double reduction_idle(double alpha1, double beta, double kernel, double channels) {
  return 2.0 * beta * alpha1 * alpha1 / (kernel * kernel) + alpha1 * beta / channels;
}

inline double reduction_ghost(double alpha2, double kernel, double maps) {
  return alpha2 / (kernel * kernel) + (1.0 - alpha2) / maps;
}

inline double reduction_split(double alpha) { return alpha * alpha; }

// Analytical ratio for a block kind at a given width (standard = 1).
inline double analytical_reduction(BlockKind kind, double alpha, double beta, double kernel, double channels) {
  switch (kind) {
    case BlockKind::StandardResidual: return 1.0;
    case BlockKind::SplitSR: return reduction_split(alpha);
    case BlockKind::Shuffle: return reduction_shuffle(alpha, kernel, channels);
    case BlockKind::Idle: return reduction_idle(alpha, beta, kernel, channels);
    case BlockKind::Ghost: return reduction_ghost(alpha, kernel, channels);
  }
  return 1.0;
}

struct StageCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;  // multiply-accumulates, one forward pass
  std::vector<StageCost> per_stage;
  std::map<std::string, double> reductions;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["params"] = params;
    j["macs"] = macs;
    j["mac_unit"] = "multiply-accumulate";
    j["per_stage"] = nlohmann::json::array();
    for (const auto& s : per_stage) j["per_stage"].push_back({{"name", s.name}, {"params", s.params}, {"macs", s.macs}});
    j["reductions"] = nlohmann::json::object();
    for (const auto& [k, v] : reductions) j["reductions"][k] = v;
    return j;
  }
};

// Shape-only executor that tallies parameters and MACs per stage. Every
// convolution is counted as C_out · C_in/groups · k_h · k_w · H_out · W_out
// (per batch item); additions, activations and resizes are free. Weights are
// counted once even when reused.
class CostCounter {
public:
  using Value = Shape;

  void stage(std::string_view name) {
    if (stages_.empty() || stages_.back().name != name) stages_.push_back({std::string(name), 0, 0});
  }

  template <typename T>
  Value conv(const Value& x, const ConvWeights<T>& w) {
    if (x.c != w.c_in()) throw DimensionError("C", "cost: conv expects " + std::to_string(w.c_in()) + " channels");
    const std::size_t oh = detail::conv_out_dim(x.h, w.kh(), w.padding, w.stride, "H");
    const std::size_t ow = detail::conv_out_dim(x.w, w.kw(), w.padding, w.stride, "W");
    if (stages_.empty()) stage("network");
    auto& st = stages_.back();
    if (seen_.insert(&w).second) st.params += w.param_count();
    st.macs += static_cast<std::uint64_t>(x.n) * w.c_out() * w.kernel.c() * w.kh() * w.kw() * oh * ow;
    return {x.n, w.c_out(), oh, ow};
  }
  Value relu(const Value& x) { return x; }
  Value add(const Value& a, const Value& b) {
    if (!(a == b)) throw DimensionError("shape", "cost: add shape mismatch " + a.str() + " vs " + b.str());
    return a;
  }
  std::pair<Value, Value> split(const Value& x, double alpha) {
    const std::size_t k = split_count(alpha, x.c);
    if (k < 1 || k > x.c) throw DimensionError("C", "cost: invalid split");
    return {{x.n, k, x.h, x.w}, {x.n, x.c - k, x.h, x.w}};
  }
  Value concat(const Value& a, const Value& b) { return {a.n, a.c + b.c, a.h, a.w}; }
  Value shuffle(const Value& x, std::size_t g) {
    shuffle_permutation(x.c, g);
    return x;
  }
  Value pixel_shuffle(const Value& x, std::size_t r) {
    if (x.c % (r * r) != 0) throw DimensionError("C", "cost: pixel_shuffle divisibility");
    return {x.n, x.c / (r * r), x.h * r, x.w * r};
  }
  Value gather(const Value& x, std::span<const std::size_t> idx) { return {x.n, idx.size(), x.h, x.w}; }
  template <typename T>
  Value constant(const Tensor<T>& t) {
    return t.shape();
  }
  std::size_t channels(const Value& x) const { return x.c; }
  Shape shape(const Value& x) const { return x; }

  CostReport report() const {
    CostReport r;
    r.per_stage = stages_;
    for (const auto& s : stages_) {
      r.params += s.params;
      r.macs += s.macs;
    }
    return r;
  }

private:
  std::vector<StageCost> stages_;
  std::set<const void*> seen_;
};

template <typename T>
CostReport count(const Network<T>& net, std::size_t height, std::size_t width) {
  if (net.body().empty()) return {};  // default-constructed, nothing allocated
  CostCounter cc;
  net.run(cc, Shape{1, 3, height, width});
  CostReport r = cc.report();
  const auto& c = net.config();
  const double f = static_cast<double>(c.feature_maps);
  r.reductions["splitsr"] = reduction_split(c.alpha);
  r.reductions["shuffle"] = reduction_shuffle(c.alpha, 3.0, f);
  r.reductions["idle"] = reduction_idle(c.alpha, c.beta, 3.0, f);
  r.reductions["ghost"] = reduction_ghost(c.alpha, 3.0, f);
  return r;
}

template <typename T>
CostReport count(const BlockParams<T>& block, std::size_t height, std::size_t width) {
  CostCounter cc;
  cc.stage(to_string(block.kind));
  run_block(cc, Shape{1, block.channels, height, width}, block);
  CostReport r = cc.report();
  r.reductions[std::string(to_string(block.kind))] = analytical_reduction(
      block.kind, block.alpha, block.beta, static_cast<double>(block.kernel_size), static_cast<double>(block.channels));
  return r;
}

inline CostReport count_config(const NetworkConfig& cfg, std::size_t height, std::size_t width) {
  return count(Network<float>(cfg), height, width);
}

// Number of standard k×k C→C convolutions a block stands in for when forming
// a counted reduction ratio. The SplitSR and standard residual blocks replace
// a two-conv residual body; the Shuffle, Idle and Ghost formulas are stated
// against a single standard convolution.
inline std::size_t reference_conv_count(BlockKind kind) {
  switch (kind) {
    case BlockKind::StandardResidual:
    case BlockKind::SplitSR: return 2;
    case BlockKind::Shuffle:
    case BlockKind::Idle:
    case BlockKind::Ghost: return 1;
  }
  return 1;
}

struct CountedRatio {
  double macs = 0;    // bias-free, matches the closed forms' unit
  double params = 0;  // includes biases and other lower-order terms
};

// Counted cost of one block relative to the standard convolutions it
// replaces, at width `channels` on an h×w map.
inline CountedRatio counted_reduction(BlockKind kind, std::size_t channels, double alpha, double beta = 1.0,
                                      std::size_t kernel = 3, std::size_t h = 32, std::size_t w = 32) {
  const auto block = make_block<float>(kind, channels, alpha, beta, kernel);
  const auto cost = count(block, h, w);
  const double refs = static_cast<double>(reference_conv_count(kind));
  const double k2c2 = static_cast<double>(kernel * kernel * channels * channels);
  CountedRatio r;
  r.macs = static_cast<double>(cost.macs) / (refs * k2c2 * static_cast<double>(h * w));
  r.params = static_cast<double>(cost.params) / (refs * (k2c2 + static_cast<double>(channels)));
  return r;
}

}  // namespace splitsr
