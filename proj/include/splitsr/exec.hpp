#pragma once

#include <map>
#include <optional>

#include "splitsr/ops.hpp"

// Executors. Blocks and networks are written once against a small executor
// interface (conv, relu, add, split, concat, shuffle, pixel_shuffle, gather)
// and run under:
//   Eval  - plain forward evaluation on tensors,
//   Tape  - forward evaluation that records ops for reverse-mode vjp,
// plus the shape-only executors in cost.hpp and coverage.hpp.

namespace splitsr {

template <typename T>
class Eval {
public:
  using Value = Tensor<T>;
  using scalar_type = T;

  void stage(std::string_view) {}
  Value conv(const Value& x, const ConvWeights<T>& w) { return conv2d(x, w); }
  Value relu(const Value& x) { return splitsr::relu(x); }
  Value add(const Value& a, const Value& b) { return splitsr::add(a, b); }
  std::pair<Value, Value> split(const Value& x, double alpha) { return channel_split(x, alpha); }
  Value concat(const Value& a, const Value& b) { return concat_channels(a, b); }
  Value shuffle(const Value& x, std::size_t g) { return channel_shuffle(x, g); }
  Value pixel_shuffle(const Value& x, std::size_t r) { return splitsr::pixel_shuffle(x, r); }
  Value gather(const Value& x, std::span<const std::size_t> idx) { return gather_channels(x, idx); }
  Value constant(const Tensor<T>& t) { return t; }
  std::size_t channels(const Value& x) const { return x.c(); }
  Shape shape(const Value& x) const { return x.shape(); }
};

// Records a forward pass; backward() walks it in reverse using the op vjps.
template <typename T>
class Tape {
public:
  using Value = std::size_t;
  using scalar_type = T;

  Value input(Tensor<T> t, bool requires_grad = false) { return push_value(std::move(t), requires_grad); }
  Value constant(const Tensor<T>& t) { return push_value(t, false); }

  const Tensor<T>& value(Value v) const { return values_.at(v); }
  Shape shape(Value v) const { return values_.at(v).shape(); }
  std::size_t channels(Value v) const { return values_.at(v).c(); }

  void stage(std::string_view) {}

  Value conv(Value x, const ConvWeights<T>& w) {
    Value y = push_value(conv2d(values_[x], w), true);
    Record r{OpKind::Conv2d, {}, {x}, {y}};
    r.weights = &w;
    params_.try_emplace(&w);
    ops_.push_back(std::move(r));
    return y;
  }
  Value relu(Value x) { return unary(OpKind::Relu, {}, x, splitsr::relu(values_[x])); }
  Value add(Value a, Value b) {
    Value y = push_value(splitsr::add(values_[a], values_[b]), requires_[a] || requires_[b]);
    ops_.push_back({OpKind::Add, {}, {a, b}, {y}});
    return y;
  }
  std::pair<Value, Value> split(Value x, double alpha) {
    auto [a, b] = channel_split(values_[x], alpha);
    Value ya = push_value(std::move(a), requires_[x]);
    Value yb = push_value(std::move(b), requires_[x]);
    OpAttrs at;
    at.alpha = alpha;
    ops_.push_back({OpKind::ChannelSplit, at, {x}, {ya, yb}});
    return {ya, yb};
  }
  Value concat(Value a, Value b) {
    Value y = push_value(concat_channels(values_[a], values_[b]), requires_[a] || requires_[b]);
    ops_.push_back({OpKind::ConcatChannels, {}, {a, b}, {y}});
    return y;
  }
  Value shuffle(Value x, std::size_t g) {
    OpAttrs at;
    at.factor = g;
    return unary(OpKind::ChannelShuffle, at, x, channel_shuffle(values_[x], g));
  }
  Value pixel_shuffle(Value x, std::size_t r) {
    OpAttrs at;
    at.factor = r;
    return unary(OpKind::PixelShuffle, at, x, splitsr::pixel_shuffle(values_[x], r));
  }
  Value gather(Value x, std::span<const std::size_t> idx) {
    OpAttrs at;
    at.indices.assign(idx.begin(), idx.end());
    return unary(OpKind::GatherChannels, std::move(at), x, gather_channels(values_[x], idx));
  }
  Value l1_loss(Value pred, Value target) {
    const T loss = splitsr::l1_loss(values_[pred], values_[target]);
    Value y = push_value(Tensor<T>({1, 1, 1, 1}, loss), requires_[pred] || requires_[target]);
    ops_.push_back({OpKind::L1Loss, {}, {pred, target}, {y}});
    return y;
  }

  // Reverse sweep from a (1,1,1,1) root seeded with 1.
  void backward(Value root) {
    if (values_.at(root).size() != 1) throw std::invalid_argument("Tape::backward: root must be a scalar");
    grads_.assign(values_.size(), std::nullopt);
    grads_[root] = Tensor<T>({1, 1, 1, 1}, T(1));
    for (auto& [w, g] : params_) g.reset();
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      const Record& r = *it;
      bool any = false;
      for (Value o : r.outputs) any = any || grads_[o].has_value();
      if (!any) continue;
      std::vector<Tensor<T>> cot;
      for (Value o : r.outputs) cot.push_back(grads_[o] ? *grads_[o] : Tensor<T>(values_[o].shape()));

      if (r.kind == OpKind::Conv2d) {
        const Value x = r.inputs[0];
        auto g = conv2d_vjp(values_[x], *r.weights, cot[0], requires_[x]);
        accumulate_param(r.weights, g);
        if (requires_[x]) accumulate(x, std::move(g.input));
        continue;
      }
      std::vector<Tensor<T>> ins;
      ins.reserve(r.inputs.size());
      for (Value i : r.inputs) ins.push_back(values_[i]);
      auto d = vjp<T>(r.kind, r.attrs, ins, cot);
      for (std::size_t k = 0; k < r.inputs.size(); ++k)
        if (requires_[r.inputs[k]]) accumulate(r.inputs[k], std::move(d[k]));
    }
  }

  // Gradient of an input/intermediate value; zeros if it was not reached.
  Tensor<T> grad(Value v) const {
    if (v < grads_.size() && grads_[v]) return *grads_[v];
    return Tensor<T>(values_.at(v).shape());
  }

  // Kernel and bias gradient for a weight set used in the recorded pass.
  ConvGrads<T> param_grad(const ConvWeights<T>& w) const {
    auto it = params_.find(&w);
    if (it == params_.end() || !it->second) {
      ConvGrads<T> z;
      z.kernel = Tensor<T>(w.kernel.shape());
      z.bias.assign(w.bias.size(), T(0));
      return z;
    }
    return *it->second;
  }

private:
  struct Record {
    OpKind kind;
    OpAttrs attrs;
    std::vector<Value> inputs;
    std::vector<Value> outputs;
    const ConvWeights<T>* weights = nullptr;
  };

  Value push_value(Tensor<T> t, bool requires_grad) {
    values_.push_back(std::move(t));
    requires_.push_back(requires_grad);
    return values_.size() - 1;
  }
  Value unary(OpKind k, OpAttrs at, Value x, Tensor<T> y) {
    Value out = push_value(std::move(y), requires_[x]);
    ops_.push_back({k, std::move(at), {x}, {out}});
    return out;
  }
  void accumulate(Value v, Tensor<T> g) {
    if (!grads_[v]) {
      grads_[v] = std::move(g);
      return;
    }
    auto& acc = *grads_[v];
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += g.data()[i];
  }
  void accumulate_param(const ConvWeights<T>* w, const ConvGrads<T>& g) {
    auto& slot = params_[w];
    if (!slot) {
      slot = ConvGrads<T>{{}, g.kernel, g.bias};
      return;
    }
    auto& acc = *slot;
    for (std::size_t i = 0; i < acc.kernel.size(); ++i) acc.kernel.data()[i] += g.kernel.data()[i];
    for (std::size_t i = 0; i < acc.bias.size(); ++i) acc.bias[i] += g.bias[i];
  }

  std::vector<Tensor<T>> values_;
  std::vector<bool> requires_;
  std::vector<std::optional<Tensor<T>>> grads_;
  std::vector<Record> ops_;
  std::map<const ConvWeights<T>*, std::optional<ConvGrads<T>>> params_;
};

}  // namespace splitsr
