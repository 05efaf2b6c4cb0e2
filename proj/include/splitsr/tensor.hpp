#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace splitsr {

// Error raised when two operands disagree on an axis. `axis` names the axis
// ("N", "C", "H", "W", or an op-specific name like "groups").
class DimensionError : public std::invalid_argument {
public:
  DimensionError(std::string axis, const std::string& what)
      : std::invalid_argument(what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

private:
  std::string axis_;
};

struct Shape {
  std::size_t n = 1, c = 1, h = 1, w = 1;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

// Dense (N,C,H,W) row-major array. N, H and W are at least 1; C may be 0 for
// the idle branch of a full-width channel split.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(validate(s)), data_(s.numel(), fill) {}
  Tensor(Shape s, std::vector<T> data) : shape_(validate(s)), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw DimensionError("data", "tensor data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(n, c, h, w)];
  }

  T* plane(std::size_t n, std::size_t c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(std::size_t n, std::size_t c) const { return data_.data() + index(n, c, 0, 0); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  static Shape validate(Shape s) {
    if (s.n == 0) throw DimensionError("N", "batch dimension must be >= 1");
    if (s.h == 0) throw DimensionError("H", "height must be >= 1");
    if (s.w == 0) throw DimensionError("W", "width must be >= 1");
    return s;
  }

  Shape shape_{1, 0, 1, 1};  // empty until assigned
  std::vector<T> data_ = std::vector<T>(1, T(0));
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("shape", "max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// round(alpha * c) with halves rounded up.
inline std::size_t split_count(double alpha, std::size_t c) {
  return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(c) + 0.5));
}

namespace detail {

inline unsigned worker_count() {
  static const unsigned n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// Static partition of [0, count) across threads. Each index is visited by
// exactly one thread, so results do not depend on the thread count.
template <typename F>
void parallel_for(std::size_t count, std::size_t work_per_item, F&& f) {
  const unsigned threads = worker_count();
  const std::size_t total = count * std::max<std::size_t>(work_per_item, 1);
  if (threads <= 1 || count < 2 || total < (1u << 16)) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  const std::size_t used = std::min<std::size_t>(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(used - 1);
  auto run = [&](std::size_t t) {
    const std::size_t lo = count * t / used, hi = count * (t + 1) / used;
    for (std::size_t i = lo; i < hi; ++i) f(i);
  };
  for (std::size_t t = 1; t < used; ++t) pool.emplace_back(run, t);
  run(0);
  for (auto& th : pool) th.join();
}

}  // namespace detail
}  // namespace splitsr
