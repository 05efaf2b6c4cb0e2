#pragma once

#include "splitsr/blocks.hpp"

namespace splitsr {

// Symbolic executor: each channel carries the set of original input channels
// it depends on, and every convolution records which original channels
// reached it. Runs the real block code, so block wiring is checked as written.
class ChannelTaint {
public:
  using Taint = std::vector<bool>;
  struct Value {
    std::vector<Taint> channels;
    Shape shape;
  };

  explicit ChannelTaint(std::size_t inputs) : convolved_(inputs, false) {}

  Value input(std::size_t c, std::size_t h = 4, std::size_t w = 4) const {
    Value v{{}, {1, c, h, w}};
    for (std::size_t i = 0; i < c; ++i) {
      Taint t(convolved_.size(), false);
      if (i < t.size()) t[i] = true;
      v.channels.push_back(std::move(t));
    }
    return v;
  }

  void stage(std::string_view) {}

  template <typename T>
  Value conv(const Value& x, const ConvWeights<T>& w) {
    if (x.channels.size() != w.c_in()) throw DimensionError("C", "taint: conv channel mismatch");
    const std::size_t cin_g = w.kernel.c(), cout_g = w.c_out() / w.groups;
    Value y{{}, {x.shape.n, w.c_out(), x.shape.h, x.shape.w}};
    for (const auto& t : x.channels) merge(convolved_, t);
    for (std::size_t oc = 0; oc < w.c_out(); ++oc) {
      Taint t(convolved_.size(), false);
      const std::size_t g = oc / cout_g;
      for (std::size_t i = 0; i < cin_g; ++i) merge(t, x.channels[g * cin_g + i]);
      y.channels.push_back(std::move(t));
    }
    return y;
  }
  Value relu(const Value& x) { return x; }
  Value add(const Value& a, const Value& b) {
    Value y = a;
    for (std::size_t i = 0; i < y.channels.size(); ++i) merge(y.channels[i], b.channels.at(i));
    return y;
  }
  std::pair<Value, Value> split(const Value& x, double alpha) {
    const std::size_t k = split_count(alpha, x.channels.size());
    Value a{{x.channels.begin(), x.channels.begin() + static_cast<std::ptrdiff_t>(k)}, x.shape};
    Value b{{x.channels.begin() + static_cast<std::ptrdiff_t>(k), x.channels.end()}, x.shape};
    a.shape.c = k;
    b.shape.c = x.channels.size() - k;
    return {a, b};
  }
  Value concat(const Value& a, const Value& b) {
    Value y = a;
    y.channels.insert(y.channels.end(), b.channels.begin(), b.channels.end());
    y.shape.c = y.channels.size();
    return y;
  }
  Value shuffle(const Value& x, std::size_t g) {
    const auto src = shuffle_permutation(x.channels.size(), g);
    return gather(x, src);
  }
  Value pixel_shuffle(const Value& x, std::size_t r) {
    Value y{{}, {x.shape.n, x.channels.size() / (r * r), x.shape.h * r, x.shape.w * r}};
    for (std::size_t c = 0; c < y.shape.c; ++c) {
      Taint t(convolved_.size(), false);
      for (std::size_t k = 0; k < r * r; ++k) merge(t, x.channels[c * r * r + k]);
      y.channels.push_back(std::move(t));
    }
    return y;
  }
  Value gather(const Value& x, std::span<const std::size_t> idx) {
    Value y{{}, x.shape};
    for (std::size_t i : idx) y.channels.push_back(x.channels.at(i));
    y.shape.c = idx.size();
    return y;
  }
  template <typename T>
  Value constant(const Tensor<T>& t) {
    return {std::vector<Taint>(t.c(), Taint(convolved_.size(), false)), t.shape()};
  }
  std::size_t channels(const Value& x) const { return x.channels.size(); }
  Shape shape(const Value& x) const { return x.shape; }

  // Original input channels that have passed through at least one conv.
  const Taint& convolved() const { return convolved_; }
  std::size_t convolved_count() const {
    return static_cast<std::size_t>(std::count(convolved_.begin(), convolved_.end(), true));
  }

private:
  static void merge(Taint& dst, const Taint& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] || src[i];
  }
  Taint convolved_;
};

// How many of `channels` input channels have entered a convolution after
// `blocks` consecutive copies of `block`.
template <typename T>
std::size_t channels_covered(const BlockParams<T>& block, std::size_t blocks) {
  ChannelTaint ex(block.channels);
  auto v = ex.input(block.channels);
  for (std::size_t i = 0; i < blocks; ++i) v = run_block(ex, v, block);
  return ex.convolved_count();
}

}  // namespace splitsr
