// A few hundred steps on the toy network, then held-out PSNR against
// bilinear. The acceptance run uses 1000 steps; this is the quick version.
#include <cstdio>

#include "splitsr/trainer.hpp"

using namespace splitsr;

int main(int argc, char** argv) {
  const auto cfg = NetworkConfig::toy();
  TrainConfig t;
  t.learning_rate = 1e-2;
  t.hr_patch = 32;
  t.steps = argc > 1 ? std::stoul(argv[1]) : 300;
  t.seed = 7;

  auto net = build(cfg, 1);
  const auto train_set = synthetic_dataset(64, 64, cfg.scale, 100);
  const auto held_out = synthetic_dataset(16, 64, cfg.scale, 200);
  const auto trace = train(net, train_set, t, [](const TracePoint& p) {
    if (p.step % 50 == 0) std::printf("step %4zu  lr %.4g  loss %.4f\n", p.step, p.lr, p.loss);
  });
  const auto base = evaluate(bilinear_upscale, "bilinear", held_out, cfg.scale);
  const auto ours = evaluate(network_upscaler(net), "toy", held_out, cfg.scale);
  std::printf("held-out Y-PSNR: toy %.2f dB, bilinear %.2f dB (%zu params, final loss %.4f)\n", ours.mean_psnr,
              base.mean_psnr, net.param_count(), trace.points.back().loss);
}
