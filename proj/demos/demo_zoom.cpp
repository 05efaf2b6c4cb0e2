// Single-threaded scheduler walk-through: zoom in at one corner, move the
// focus before the first pass finishes, then look at what got reused.
#include <cstdio>
#include <random>

#include "splitsr/zoom.hpp"

using namespace splitsr;

int main() {
  auto cfg = NetworkConfig::toy();
  cfg.scale = 4;
  auto model = std::make_shared<const Network<float>>(build(cfg, 3));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> px(0, 255);
  TensorF img({1, 3, 96, 128});
  for (auto& v : img.data()) v = px(rng);

  ZoomScheduler s(model, 32);  // 4x3 tiles
  s.add_image("photo", img);
  const auto first = s.submit("photo", 0, 0, 3.0);
  std::printf("gesture 1 at (0,0), zoom 3:");
  for (int i = 0; i < 4; ++i) std::printf(" %zu", s.run_one()->key.tile);

  const auto second = s.submit("photo", 128, 96, 3.0);
  std::printf("\ngesture 2 at (128,96), zoom 3:");
  while (auto job = s.run_one()) std::printf(" %zu", job->key.tile);

  const auto p = s.progress(second.id);
  std::size_t cached = 0;
  for (const auto& c : p.completions) cached += c.cached;
  std::printf("\nrequest %llu: %zu/%zu tiles, %zu from cache; first request cancelled %zu\n",
              static_cast<unsigned long long>(second.id), p.done, p.total, cached, s.progress(first.id).cancelled);

  // Zoom 4.5 reuses the model output and only re-resamples.
  const auto third = s.submit("photo", 64, 48, 4.5);
  s.run_all();
  const auto out = s.compose(third.id);
  std::printf("zoom 4.5 composite %zux%zu, %zu model runs in total, %zu holes\n", out.image.w(), out.image.h(),
              s.model_runs(), out.holes.size());
}
