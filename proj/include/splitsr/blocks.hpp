#pragma once

#include <numeric>

#include "splitsr/exec.hpp"

namespace splitsr {

enum class BlockKind { StandardResidual, SplitSR, Shuffle, Idle, Ghost };

inline std::string_view to_string(BlockKind k) {
  switch (k) {
    case BlockKind::StandardResidual: return "standard";
    case BlockKind::SplitSR: return "splitsr";
    case BlockKind::Shuffle: return "shuffle";
    case BlockKind::Idle: return "idle";
    case BlockKind::Ghost: return "ghost";
  }
  return "unknown";
}

inline BlockKind parse_block_kind(std::string_view s) {
  for (auto k : {BlockKind::StandardResidual, BlockKind::SplitSR, BlockKind::Shuffle, BlockKind::Idle,
                 BlockKind::Ghost})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown block kind '" + std::string(s) + "'");
}

// One residual block. `alpha` is the split ratio for SplitSR, Shuffle and
// Idle, and the intrinsic-map (squeeze) ratio for Ghost. `beta` is the Idle
// expansion ratio.
//
// Weight layout per kind, in execution order:
//   StandardResidual  [k×k C→C, k×k C→C]
//   SplitSR           [k×k a→a, k×k a→a]               a = round(alpha·C)
//   Shuffle           [1×1 a→a, k×k depthwise a, 1×1 a→a]
//   Idle              [1×1 a→e, k×k depthwise e, 1×1 e→a]   e = round(beta·a)
//   Ghost             [1×1 C→m, k×k depthwise (C−m)]  m = round(alpha·C); no
//                     second conv when m = C
template <typename T>
struct BlockParams {
  BlockKind kind = BlockKind::StandardResidual;
  std::size_t channels = 0;
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t kernel_size = 3;
  std::vector<ConvWeights<T>> weights;

  std::size_t param_count() const {
    return std::accumulate(weights.begin(), weights.end(), std::size_t{0},
                           [](std::size_t acc, const ConvWeights<T>& w) { return acc + w.param_count(); });
  }

  template <typename U>
  BlockParams<U> cast() const {
    BlockParams<U> o{kind, channels, alpha, beta, kernel_size, {}};
    for (const auto& w : weights) o.weights.push_back(w.template cast<U>());
    return o;
  }
};

namespace detail {

inline void check_ratio(double r, const char* what) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in (0, 1]");
}

inline std::size_t active_channels(double alpha, std::size_t c) {
  check_ratio(alpha, "alpha");
  const std::size_t a = split_count(alpha, c);
  if (a < 1) throw DimensionError("C", "round(alpha*C) must be >= 1");
  return a;
}

}  // namespace detail

// Zero-initialised block with the weight shapes listed above.
template <typename T>
BlockParams<T> make_block(BlockKind kind, std::size_t channels, double alpha = 1.0, double beta = 1.0,
                          std::size_t kernel_size = 3) {
  if (kernel_size % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (channels == 0) throw DimensionError("C", "block needs at least one channel");
  BlockParams<T> p{kind, channels, alpha, beta, kernel_size, {}};
  const std::size_t k = kernel_size;
  using W = ConvWeights<T>;
  switch (kind) {
    case BlockKind::StandardResidual:
      p.alpha = 1.0;
      p.weights = {W::make(channels, channels, k), W::make(channels, channels, k)};
      break;
    case BlockKind::SplitSR: {
      const std::size_t a = detail::active_channels(alpha, channels);
      p.weights = {W::make(a, a, k), W::make(a, a, k)};
      break;
    }
    case BlockKind::Shuffle: {
      if (channels % 2 != 0) throw DimensionError("C", "shuffle block needs an even channel count");
      const std::size_t a = detail::active_channels(alpha, channels);
      p.weights = {W::make(a, a, 1), W::make(a, a, k, a), W::make(a, a, 1)};
      break;
    }
    case BlockKind::Idle: {
      if (!(beta >= 1.0)) throw std::invalid_argument("idle block expansion beta must be >= 1");
      const std::size_t a = detail::active_channels(alpha, channels);
      const std::size_t e = split_count(beta, a);
      p.weights = {W::make(a, e, 1), W::make(e, e, k, e), W::make(e, a, 1)};
      break;
    }
    case BlockKind::Ghost: {
      const std::size_t m = detail::active_channels(alpha, channels);
      p.weights = {W::make(channels, m, 1)};
      if (channels > m) p.weights.push_back(W::make(channels - m, channels - m, k, channels - m));
      break;
    }
  }
  return p;
}

// Source intrinsic map for each ghost map (cyclic reuse when ghosts outnumber
// intrinsics).
inline std::vector<std::size_t> ghost_sources(std::size_t intrinsic, std::size_t ghosts) {
  std::vector<std::size_t> idx(ghosts);
  for (std::size_t j = 0; j < ghosts; ++j) idx[j] = j % intrinsic;
  return idx;
}

// Executes one block under any executor. Output shape equals input shape.
template <typename Exec, typename T>
typename Exec::Value run_block(Exec& ex, const typename Exec::Value& x, const BlockParams<T>& p) {
  if (ex.channels(x) != p.channels)
    throw DimensionError("C", "block built for " + std::to_string(p.channels) + " channels got " +
                                  std::to_string(ex.channels(x)));
  const auto& w = p.weights;
  switch (p.kind) {
    case BlockKind::StandardResidual: {
      auto h = ex.conv(ex.relu(ex.conv(x, w[0])), w[1]);
      return ex.add(x, h);
    }
    case BlockKind::SplitSR: {
      auto [active, idle] = ex.split(x, p.alpha);
      auto h = ex.conv(ex.relu(ex.conv(active, w[0])), w[1]);
      auto processed = ex.add(active, h);
      // Processed channels go last so the next block works on fresh ones.
      return ex.concat(idle, processed);
    }
    case BlockKind::Shuffle: {
      auto [active, idle] = ex.split(x, p.alpha);
      auto h = ex.relu(ex.conv(ex.conv(ex.relu(ex.conv(active, w[0])), w[1]), w[2]));
      return ex.shuffle(ex.concat(h, idle), 2);
    }
    case BlockKind::Idle: {
      auto [active, idle] = ex.split(x, p.alpha);
      auto h = ex.conv(ex.relu(ex.conv(ex.relu(ex.conv(active, w[0])), w[1])), w[2]);
      return ex.concat(h, idle);
    }
    case BlockKind::Ghost: {
      auto intrinsic = ex.conv(x, w[0]);
      if (w.size() < 2) return intrinsic;
      const auto src = ghost_sources(ex.channels(intrinsic), p.channels - ex.channels(intrinsic));
      auto ghost = ex.conv(ex.gather(intrinsic, src), w[1]);
      return ex.concat(intrinsic, ghost);
    }
  }
  throw std::logic_error("unhandled block kind");
}

template <typename T>
Tensor<T> forward_block(const Tensor<T>& x, const BlockParams<T>& p) {
  Eval<T> ex;
  return run_block(ex, x, p);
}

template <typename T>
Tensor<T> standard_residual_block(const Tensor<T>& x, const BlockParams<T>& p) {
  if (p.kind != BlockKind::StandardResidual) throw std::invalid_argument("expected a standard residual block");
  return forward_block(x, p);
}

template <typename T>
Tensor<T> split_sr_block(const Tensor<T>& x, const BlockParams<T>& p) {
  if (p.kind != BlockKind::SplitSR) throw std::invalid_argument("expected a SplitSR block");
  return forward_block(x, p);
}

template <typename T>
Tensor<T> shuffle_block(const Tensor<T>& x, const BlockParams<T>& p) {
  if (p.kind != BlockKind::Shuffle) throw std::invalid_argument("expected a shuffle block");
  return forward_block(x, p);
}

template <typename T>
Tensor<T> idle_block(const Tensor<T>& x, const BlockParams<T>& p) {
  if (p.kind != BlockKind::Idle) throw std::invalid_argument("expected an idle block");
  return forward_block(x, p);
}

template <typename T>
Tensor<T> ghost_block(const Tensor<T>& x, const BlockParams<T>& p) {
  if (p.kind != BlockKind::Ghost) throw std::invalid_argument("expected a ghost block");
  return forward_block(x, p);
}

}  // namespace splitsr
