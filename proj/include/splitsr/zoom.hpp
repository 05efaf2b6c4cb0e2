#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <thread>
#include <unordered_map>

#include "splitsr/network.hpp"

namespace splitsr {

inline constexpr double kMinZoom = 1.0;
inline constexpr double kMaxZoom = 5.0;
inline constexpr std::size_t kTileSize = 256;

inline double clamp_zoom(double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("zoom must be a finite number");
  return std::clamp(z, kMinZoom, kMaxZoom);
}

enum class Strategy { BilinearOnly, ModelThenDownsample, ModelThenBilinear };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::BilinearOnly: return "bilinear_only";
    case Strategy::ModelThenDownsample: return "model_then_downsample";
    case Strategy::ModelThenBilinear: return "model_then_bilinear";
  }
  return "?";
}

struct RouteStrategy {
  Strategy kind = Strategy::BilinearOnly;
  double zoom = 1.0;
  friend bool operator==(const RouteStrategy&, const RouteStrategy&) = default;
};

// Below 2 plain bilinear; 2 to 4 inclusive the ×4 model then downsampling;
// above 4 the model then bilinear upsampling.
inline RouteStrategy route(double zoom) {
  if (zoom < 2.0) return {Strategy::BilinearOnly, zoom};
  if (zoom <= 4.0) return {Strategy::ModelThenDownsample, zoom};
  return {Strategy::ModelThenBilinear, zoom};
}

struct TileRect {
  std::size_t index = 0, col = 0, row = 0;
  std::size_t x = 0, y = 0, w = 0, h = 0;  // source pixels
  friend bool operator==(const TileRect&, const TileRect&) = default;
};

struct TileGrid {
  std::size_t cols = 0, rows = 0;
  std::vector<TileRect> tiles;  // row-major
};

inline TileGrid tile(std::size_t height, std::size_t width, std::size_t size = kTileSize) {
  if (height == 0 || width == 0 || size == 0) throw std::invalid_argument("tile: empty image or tile size");
  TileGrid g;
  g.cols = (width + size - 1) / size;
  g.rows = (height + size - 1) / size;
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      TileRect t;
      t.index = r * g.cols + c;
      t.col = c;
      t.row = r;
      t.x = c * size;
      t.y = r * size;
      t.w = std::min(size, width - t.x);
      t.h = std::min(size, height - t.y);
      g.tiles.push_back(t);
    }
  return g;
}

inline double tile_distance(const TileRect& t, double fx, double fy) {
  const double cx = static_cast<double>(t.x) + static_cast<double>(t.w) / 2.0;
  const double cy = static_cast<double>(t.y) + static_cast<double>(t.h) / 2.0;
  return std::hypot(cx - fx, cy - fy);
}

// Priority of every tile (distance of its centre to the focus) and the
// processing order, ties broken by row-major index.
struct Priorities {
  std::vector<double> distance;
  std::vector<std::size_t> order;
};

inline Priorities prioritize(const std::vector<TileRect>& tiles, double fx, double fy) {
  Priorities p;
  for (const auto& t : tiles) p.distance.push_back(tile_distance(t, fx, fy));
  p.order.resize(tiles.size());
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](std::size_t a, std::size_t b) { return p.distance[a] < p.distance[b]; });
  return p;
}

// Output rectangle of a source tile at a zoom level. Adjacent tiles share
// edges exactly, and the union is round(H·z) × round(W·z).
struct OutRect {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

inline OutRect scaled_rect(const TileRect& t, double zoom) {
  auto s = [&](std::size_t v) { return static_cast<std::size_t>(std::llround(static_cast<double>(v) * zoom)); };
  return {s(t.x), s(t.y), s(t.x + t.w), s(t.y + t.h)};
}

// ---------------------------------------------------------------------------
// Tile kernels. Both resample in the global output frame, so a composed image
// is independent of the tiling for the bilinear path.

namespace detail {

inline TensorF crop(const TensorF& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  TensorF out({1, img.c(), h, w});
  for (std::size_t c = 0; c < img.c(); ++c)
    for (std::size_t i = 0; i < h; ++i) std::copy_n(img.plane(0, c) + (y + i) * img.w() + x, w, out.plane(0, c) + i * w);
  return out;
}

}  // namespace detail

// Bilinear resampling of one tile. Reads a 2-pixel margin around the tile,
// which covers every tap for zoom >= 1.
inline TensorF bilinear_tile(const TensorF& image, const TileRect& t, double zoom) {
  const auto r = scaled_rect(t, zoom);
  const std::size_t m = 2;
  const std::size_t cy = t.y >= m ? t.y - m : 0, cx = t.x >= m ? t.x - m : 0;
  const std::size_t ey = std::min(image.h(), t.y + t.h + m), ex = std::min(image.w(), t.x + t.w + m);
  const auto src = detail::crop(image, cy, cx, ey - cy, ex - cx);
  return resample(src, AxisGrid{r.y1 - r.y0, zoom, static_cast<double>(r.y0), static_cast<double>(cy)},
                  AxisGrid{r.x1 - r.x0, zoom, static_cast<double>(r.x0), static_cast<double>(cx)}, ResizeKernel::Bilinear);
}

// Model output for the tile alone (no context from neighbours).
inline TensorF model_tile(const Network<float>& net, const TensorF& image, const TileRect& t) {
  return net.forward(detail::crop(image, t.y, t.x, t.h, t.w));
}

// Resamples a model tile (at the model's scale) to the target zoom.
inline TensorF resample_model_tile(const TensorF& model_out, std::size_t model_scale, const TileRect& t, double zoom) {
  const auto r = scaled_rect(t, zoom);
  const double ms = static_cast<double>(model_scale);
  if (std::abs(zoom - ms) < 1e-12 && r.x1 - r.x0 == model_out.w() && r.y1 - r.y0 == model_out.h()) return model_out;
  return resample(model_out,
                  AxisGrid{r.y1 - r.y0, zoom / ms, static_cast<double>(r.y0), ms * static_cast<double>(t.y)},
                  AxisGrid{r.x1 - r.x0, zoom / ms, static_cast<double>(r.x0), ms * static_cast<double>(t.x)},
                  ResizeKernel::Bilinear);
}

// ---------------------------------------------------------------------------
// Scheduler.

class UnknownImage : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class UnknownRequest : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class Method { SplitSR, Bilinear };

inline std::string_view to_string(Method m) { return m == Method::SplitSR ? "splitsr" : "bilinear"; }
inline Method parse_method(std::string_view s) {
  if (s == "splitsr") return Method::SplitSR;
  if (s == "bilinear") return Method::Bilinear;
  throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

inline RouteStrategy strategy_for(Method m, double zoom) {
  return m == Method::Bilinear ? RouteStrategy{Strategy::BilinearOnly, zoom} : route(zoom);
}

enum class JobState { Pending, Running, Done, Cancelled };

struct TileKey {
  std::string image;
  std::size_t tile = 0;
  RouteStrategy strategy;
  friend bool operator==(const TileKey&, const TileKey&) = default;
};

struct TileKeyHash {
  std::size_t operator()(const TileKey& k) const {
    std::size_t h = std::hash<std::string>{}(k.image);
    h = h * 1000003u ^ k.tile;
    h = h * 1000003u ^ static_cast<std::size_t>(k.strategy.kind);
    h = h * 1000003u ^ std::hash<double>{}(k.strategy.zoom);
    return h;
  }
};

struct PatchJob {
  std::uint64_t id = 0;
  TileKey key;
  TileRect rect;
  double priority = 0;        // distance to the focus of `request`
  std::uint64_t request = 0;  // newest request that wants this job
  JobState state = JobState::Pending;
};

struct TileCompletion {
  std::size_t tile = 0;
  std::uint64_t sequence = 0;  // global completion counter
  double latency_ms = 0;       // from request submission
  bool cached = false;
};

struct Progress {
  std::uint64_t request = 0;
  std::string image;
  double zoom = 1;
  Method method = Method::SplitSR;
  std::size_t total = 0;
  std::size_t done = 0;
  std::size_t cancelled = 0;
  std::vector<TileCompletion> completions;  // in completion order
};

struct Composite {
  TensorF image;
  std::vector<std::size_t> holes;  // tiles with no result yet
};

struct ZoomRequestInfo {
  std::uint64_t id = 0;
  double zoom = 1;  // after clamping
};

// Serialized command interface over tile jobs for any number of images.
// Computation happens outside the lock, either on pool threads (start) or
// inline through run_one for deterministic simulation.
class ZoomScheduler {
public:
  using Clock = std::chrono::steady_clock;

  explicit ZoomScheduler(std::shared_ptr<const Network<float>> model = nullptr, std::size_t tile_size = kTileSize)
      : model_(std::move(model)), tile_size_(tile_size) {
    if (model_ && model_->config().scale < 2) throw std::invalid_argument("model scale must be >= 2");
  }
  ~ZoomScheduler() { stop(); }
  ZoomScheduler(const ZoomScheduler&) = delete;
  ZoomScheduler& operator=(const ZoomScheduler&) = delete;

  void add_image(const std::string& id, TensorF image) {
    if (image.n() != 1 || image.c() != 3) throw DimensionError("C", "images must be (1,3,H,W)");
    std::lock_guard lk(mu_);
    auto& e = images_[id];
    e.pixels = std::make_shared<const TensorF>(std::move(image));
    e.grid = tile(e.pixels->h(), e.pixels->w(), tile_size_);
  }

  struct ImageInfo {
    std::string id;
    std::size_t width = 0, height = 0, cols = 0, rows = 0;
  };
  std::vector<ImageInfo> images() const {
    std::lock_guard lk(mu_);
    std::vector<ImageInfo> v;
    for (const auto& [id, e] : images_) v.push_back({id, e.pixels->w(), e.pixels->h(), e.grid.cols, e.grid.rows});
    return v;
  }
  const TileGrid& grid(const std::string& image) const {
    std::lock_guard lk(mu_);
    return entry(image).grid;
  }
  std::shared_ptr<const TensorF> pixels(const std::string& image) const {
    std::lock_guard lk(mu_);
    return entry(image).pixels;
  }
  bool has_model() const { return model_ != nullptr; }

  // Queues every tile of `image` for the given focus and zoom. Pending jobs of
  // older requests on the same image are re-keyed to this request when they
  // compute the same result, and cancelled otherwise.
  ZoomRequestInfo submit(const std::string& image, double focus_x, double focus_y, double zoom,
                         Method method = Method::SplitSR) {
    zoom = clamp_zoom(zoom);
    if (!std::isfinite(focus_x) || !std::isfinite(focus_y)) throw std::invalid_argument("focus must be finite");
    std::unique_lock lk(mu_);
    const auto& e = entry(image);
    require_model(method, zoom);
    const auto strategy = strategy_for(method, zoom);
    const std::uint64_t rid = ++next_request_;
    auto& req = requests_[rid];
    req.progress.request = rid;
    req.progress.image = image;
    req.progress.zoom = zoom;
    req.progress.method = method;
    req.progress.total = e.grid.tiles.size();
    req.submitted = Clock::now();

    std::unordered_map<TileKey, bool, TileKeyHash> wanted;
    for (const auto& t : e.grid.tiles) wanted[{image, t.index, strategy}] = true;
    for (auto& [jid, job] : jobs_)
      if (job.state == JobState::Pending && job.key.image == image && !wanted.count(job.key)) cancel(job);

    for (const auto& t : e.grid.tiles) {
      TileKey key{image, t.index, strategy};
      const double d = tile_distance(t, focus_x, focus_y);
      if (results_.count(key)) {
        record(req, t.index, true);
        continue;
      }
      waiting_[key].push_back(rid);
      if (auto it = active_.find(key); it != active_.end()) {
        auto& job = jobs_.at(it->second);
        job.request = rid;
        job.priority = d;
        continue;
      }
      PatchJob job;
      job.id = ++next_job_;
      job.key = key;
      job.rect = t;
      job.priority = d;
      job.request = rid;
      active_[key] = job.id;
      jobs_.emplace(job.id, std::move(job));
    }
    cv_.notify_all();
    return {rid, zoom};
  }

  // Next job in priority order (newest request, then distance, then tile
  // index), marked Running.
  std::optional<PatchJob> acquire() {
    std::lock_guard lk(mu_);
    return acquire_locked();
  }

  // Computes a job's result without touching scheduler state.
  TensorF compute(const PatchJob& job) {
    std::shared_ptr<const TensorF> px;
    {
      std::lock_guard lk(mu_);
      px = entry(job.key.image).pixels;
    }
    return compute_tile(*px, job.key, job.rect);
  }

  void complete(std::uint64_t job_id, TensorF result) {
    std::lock_guard lk(mu_);
    auto& job = jobs_.at(job_id);
    if (job.state != JobState::Running) throw std::logic_error("complete: job is not running");
    job.state = JobState::Done;
    ++computed_;
    results_.emplace(job.key, std::make_shared<const TensorF>(std::move(result)));
    active_.erase(job.key);
    if (auto it = waiting_.find(job.key); it != waiting_.end()) {
      for (auto rid : it->second) record(requests_.at(rid), job.key.tile, false);
      waiting_.erase(it);
    }
    cv_.notify_all();
  }

  // Runs the next job inline. Returns it, or nothing when the queue is empty.
  std::optional<PatchJob> run_one() {
    auto job = acquire();
    if (!job) return std::nullopt;
    complete(job->id, compute(*job));
    return job;
  }

  std::size_t run_all() {
    std::size_t n = 0;
    while (run_one()) ++n;
    return n;
  }

  void start(std::size_t workers = 0) {
    if (workers == 0) workers = detail::worker_count();
    std::lock_guard lk(mu_);
    if (!pool_.empty()) return;
    stopping_ = false;
    for (std::size_t i = 0; i < workers; ++i) pool_.emplace_back([this] { worker(); });
  }

  void stop() {
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : pool_) t.join();
    pool_.clear();
  }

  Progress progress(std::uint64_t request) const {
    std::lock_guard lk(mu_);
    return request_locked(request).progress;
  }

  // Blocks until the request has no outstanding tiles (pool must be running).
  Progress wait(std::uint64_t request) {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] {
      const auto& p = request_locked(request).progress;
      return p.done + p.cancelled == p.total;
    });
    return request_locked(request).progress;
  }

  // Result for one tile, computed now if needed. An existing job for the same
  // key is taken over or waited on, so nothing is computed twice.
  std::shared_ptr<const TensorF> tile_result(const std::string& image, std::size_t tile_index, double zoom,
                                             Method method) {
    zoom = clamp_zoom(zoom);
    std::unique_lock lk(mu_);
    const auto& e = entry(image);
    if (tile_index >= e.grid.tiles.size()) throw std::out_of_range("tile index outside the grid");
    require_model(method, zoom);
    const TileKey key{image, tile_index, strategy_for(method, zoom)};
    for (;;) {
      if (auto it = results_.find(key); it != results_.end()) return it->second;
      auto it = active_.find(key);
      if (it == active_.end()) {
        PatchJob job;
        job.id = ++next_job_;
        job.key = key;
        job.rect = e.grid.tiles[tile_index];
        job.state = JobState::Running;
        active_[key] = job.id;
        jobs_.emplace(job.id, job);
        return run_inline(lk, job);
      }
      auto& job = jobs_.at(it->second);
      if (job.state == JobState::Pending) {
        job.state = JobState::Running;
        return run_inline(lk, PatchJob(job));
      }
      cv_.wait(lk);
    }
  }

  // Places every finished tile of `request` on a canvas of round(H·z) ×
  // round(W·z); missing tiles are zero and listed as holes.
  Composite compose(std::uint64_t request) const {
    std::lock_guard lk(mu_);
    const auto& p = request_locked(request).progress;
    const auto& e = entry(p.image);
    const double z = p.zoom;
    if (z == 1.0) return {*e.pixels, {}};
    const auto strategy = strategy_for(p.method, z);
    Composite out{TensorF({1, 3, scaled_extent(e.pixels->h(), z), scaled_extent(e.pixels->w(), z)}), {}};
    for (const auto& t : e.grid.tiles) {
      auto it = results_.find({p.image, t.index, strategy});
      if (it == results_.end()) {
        out.holes.push_back(t.index);
        continue;
      }
      const auto r = scaled_rect(t, z);
      const auto& src = *it->second;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < src.h(); ++i)
          std::copy_n(src.plane(0, c) + i * src.w(), src.w(), out.image.plane(0, c) + (r.y0 + i) * out.image.w() + r.x0);
    }
    return out;
  }

  std::vector<PatchJob> jobs() const {
    std::lock_guard lk(mu_);
    std::vector<PatchJob> v;
    for (const auto& [id, j] : jobs_) v.push_back(j);
    return v;
  }
  // Tile computations performed, and model forwards performed.
  std::size_t computed() const {
    std::lock_guard lk(mu_);
    return computed_;
  }
  std::size_t model_runs() const {
    std::lock_guard lk(model_mu_);
    return model_runs_;
  }

private:
  struct ImageEntry {
    std::shared_ptr<const TensorF> pixels;
    TileGrid grid;
  };
  struct RequestEntry {
    Progress progress;
    Clock::time_point submitted;
  };

  const ImageEntry& entry(const std::string& image) const {
    auto it = images_.find(image);
    if (it == images_.end()) throw UnknownImage("unknown image '" + image + "'");
    return it->second;
  }
  const RequestEntry& request_locked(std::uint64_t rid) const {
    auto it = requests_.find(rid);
    if (it == requests_.end()) throw UnknownRequest("unknown request " + std::to_string(rid));
    return it->second;
  }
  void require_model(Method m, double zoom) const {
    if (strategy_for(m, zoom).kind != Strategy::BilinearOnly && !model_)
      throw std::logic_error("no model loaded for the splitsr method");
  }

  void record(RequestEntry& req, std::size_t tile, bool cached) {
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - req.submitted).count();
    req.progress.completions.push_back({tile, ++sequence_, ms, cached});
    ++req.progress.done;
  }

  void cancel(PatchJob& job) {
    job.state = JobState::Cancelled;
    active_.erase(job.key);
    if (auto it = waiting_.find(job.key); it != waiting_.end()) {
      for (auto rid : it->second) ++requests_.at(rid).progress.cancelled;
      waiting_.erase(it);
    }
  }

  std::optional<PatchJob> acquire_locked() {
    PatchJob* best = nullptr;
    for (auto& [id, job] : jobs_) {
      if (job.state != JobState::Pending) continue;
      if (!best || job.request > best->request ||
          (job.request == best->request &&
           (job.priority < best->priority || (job.priority == best->priority && job.key.tile < best->key.tile))))
        best = &job;
    }
    if (!best) return std::nullopt;
    best->state = JobState::Running;
    return *best;
  }

  std::shared_ptr<const TensorF> run_inline(std::unique_lock<std::mutex>& lk, const PatchJob& job) {
    auto px = entry(job.key.image).pixels;
    lk.unlock();
    TensorF result;
    try {
      result = compute_tile(*px, job.key, job.rect);
    } catch (...) {
      lk.lock();
      fail(job.id);
      throw;
    }
    complete(job.id, std::move(result));
    lk.lock();
    return results_.at(job.key);
  }

  void fail(std::uint64_t job_id) {
    auto& job = jobs_.at(job_id);
    cancel(job);
    cv_.notify_all();
  }

  void worker() {
    std::unique_lock lk(mu_);
    for (;;) {
      std::optional<PatchJob> job;
      cv_.wait(lk, [&] { return stopping_ || (job = acquire_locked()).has_value(); });
      if (!job) return;
      auto px = entry(job->key.image).pixels;
      lk.unlock();
      std::optional<TensorF> result;
      try {
        result = compute_tile(*px, job->key, job->rect);
      } catch (...) {
      }
      if (result) complete(job->id, std::move(*result));
      lk.lock();
      if (!result) fail(job->id);
    }
  }

  // Pure apart from the model-output cache.
  TensorF compute_tile(const TensorF& px, const TileKey& key, const TileRect& t) {
    const auto& s = key.strategy;
    if (s.kind == Strategy::BilinearOnly) return bilinear_tile(px, t, s.zoom);
    return resample_model_tile(*model_output(px, key.image, t), model_->config().scale, t, s.zoom);
  }

  std::shared_ptr<const TensorF> model_output(const TensorF& px, const std::string& image, const TileRect& t) {
    const auto key = image + "#" + std::to_string(t.index);
    std::unique_lock lk(model_mu_);
    for (;;) {
      if (auto it = model_cache_.find(key); it != model_cache_.end()) return it->second;
      if (!model_busy_.count(key)) break;
      model_cv_.wait(lk);
    }
    model_busy_.insert(key);
    lk.unlock();
    std::shared_ptr<const TensorF> out;
    try {
      out = std::make_shared<const TensorF>(model_tile(*model_, px, t));
    } catch (...) {
      lk.lock();
      model_busy_.erase(key);
      model_cv_.notify_all();
      throw;
    }
    lk.lock();
    model_busy_.erase(key);
    model_cache_[key] = out;
    ++model_runs_;
    model_cv_.notify_all();
    return out;
  }

  std::shared_ptr<const Network<float>> model_;
  std::size_t tile_size_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, ImageEntry> images_;
  std::map<std::uint64_t, RequestEntry> requests_;
  std::map<std::uint64_t, PatchJob> jobs_;
  std::unordered_map<TileKey, std::uint64_t, TileKeyHash> active_;  // key -> Pending/Running job
  std::unordered_map<TileKey, std::vector<std::uint64_t>, TileKeyHash> waiting_;
  std::unordered_map<TileKey, std::shared_ptr<const TensorF>, TileKeyHash> results_;
  std::uint64_t next_request_ = 0, next_job_ = 0, sequence_ = 0;
  std::size_t computed_ = 0;
  std::vector<std::thread> pool_;
  bool stopping_ = false;

  mutable std::mutex model_mu_;
  std::condition_variable model_cv_;
  std::map<std::string, std::shared_ptr<const TensorF>> model_cache_;
  std::set<std::string> model_busy_;
  std::size_t model_runs_ = 0;
};

}  // namespace splitsr
