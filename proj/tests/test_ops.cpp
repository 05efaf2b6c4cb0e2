#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "splitsr/exec.hpp"
#include "support.hpp"

using namespace splitsr;
using namespace splitsr::test;

namespace {

TensorF iota_tensor(Shape s, float start = 1.0f) {
  TensorF t(s);
  std::iota(t.data().begin(), t.data().end(), start);
  return t;
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(TensorF({1, 2, 2, 2}, std::vector<float>(7)), DimensionError);
  EXPECT_THROW(TensorF({0, 1, 1, 1}), DimensionError);
  EXPECT_NO_THROW(TensorF({1, 0, 3, 3}));
}

TEST(Conv2d, OneByOneIdentityKernel) {
  TensorF x({1, 1, 3, 3}, 1.0f);
  auto w = ConvWeights<float>::make(1, 1, 1, 1, false);
  w.kernel.data()[0] = 1.0f;
  EXPECT_EQ(conv2d(x, w), x);
}

TEST(Conv2d, CenterOfAllOnesKernelSumsNeighbourhood) {
  auto x = iota_tensor({1, 1, 3, 3});
  auto w = ConvWeights<float>::make(1, 1, 3, 1, false);
  std::fill(w.kernel.data().begin(), w.kernel.data().end(), 1.0f);
  auto y = conv2d(x, w);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(y(0, 0, 1, 1), 45.0f);
  EXPECT_EQ(y(0, 0, 0, 0), 1.0f + 2.0f + 4.0f + 5.0f);
}

TEST(Conv2d, FeatureExtractionGeometry) {
  TensorF x({1, 16, 96, 96});
  auto w = ConvWeights<float>::make(16, 16, 3);
  EXPECT_EQ(conv2d(x, w).shape(), (Shape{1, 16, 96, 96}));
}

TEST(Conv2d, ChannelMismatchNamesAxis) {
  TensorF x({1, 4, 5, 5});
  auto w = ConvWeights<float>::make(3, 8, 3);
  try {
    conv2d(x, w);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "C");
  }
  auto big = ConvWeights<float>::make(4, 4, 7);
  big.padding = 0;
  try {
    conv2d(x, big);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "H");
  }
}

TEST(Conv2d, MatchesDirectSumOverRandomShapes) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = dim(rng), h = dim(rng), w = dim(rng);
    const std::size_t k = (rng() & 1) ? 3 : 1;
    const std::size_t stride = (rng() & 1) ? 2 : 1;
    const std::size_t groups = (rng() % 3 == 0) ? 2 : 1;
    const std::size_t cin = groups * (1 + rng() % 4), cout = groups * (1 + rng() % 4);
    const std::size_t pad = k / 2;
    auto x = random_tensor<double>({n, cin, h, w}, rng);
    auto wt = random_conv<double>(cin, cout, k, groups, stride, pad, rng() & 1, rng);
    auto y = conv2d(x, wt);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{n, cout, oh, ow}));
    EXPECT_LT(max_abs_diff(y, naive_conv2d(x, wt)), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, DepthwiseEqualsPerChannelLoopBitExact) {
  std::mt19937_64 rng(11);
  const std::size_t c = 5;
  auto x = random_tensor<double>({2, c, 7, 6}, rng);
  auto w = random_conv<double>(c, c, 3, c, 1, 1, true, rng);
  auto y = conv2d(x, w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    auto single = ConvWeights<double>::make(1, 1, 3);
    for (std::size_t i = 0; i < 9; ++i) single.kernel.data()[i] = w.kernel.data()[ch * 9 + i];
    single.bias = {w.bias[ch]};
    auto ref = naive_conv2d(slice_channels(x, ch, 1), single);
    auto got = slice_channels(y, ch, 1);
    EXPECT_TRUE(got == ref) << "channel " << ch;
  }
}

TEST(PixelShuffle, ShapeAndIndexLaw) {
  TensorF x({1, 4, 2, 2});
  EXPECT_EQ(pixel_shuffle(x, 2).shape(), (Shape{1, 1, 4, 4}));

  TensorF abcd({1, 4, 1, 1}, std::vector<float>{10, 20, 30, 40});
  auto y = pixel_shuffle(abcd, 2);
  EXPECT_EQ(y.storage(), (std::vector<float>{10, 20, 30, 40}));

  auto z = iota_tensor({2, 3, 2, 3});
  EXPECT_EQ(pixel_shuffle(z, 1), z);
  EXPECT_THROW(pixel_shuffle(TensorF({1, 3, 2, 2}), 2), DimensionError);
}

TEST(PixelShuffle, PreservesMultisetAndInvertsExactly) {
  std::mt19937_64 rng(3);
  for (std::size_t r : {2u, 3u}) {
    auto x = random_tensor<float>({2, 2 * r * r, 3, 4}, rng);
    auto y = pixel_shuffle(x, r);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t a = 0; a < r; ++a)
          for (std::size_t b = 0; b < r; ++b)
            for (std::size_t h = 0; h < 3; ++h)
              for (std::size_t w = 0; w < 4; ++w)
                ASSERT_EQ(y(n, c, h * r + a, w * r + b), x(n, c * r * r + a * r + b, h, w));
    auto xs = x.storage(), ys = y.storage();
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    EXPECT_EQ(xs, ys);
    EXPECT_EQ(pixel_unshuffle(y, r), x);
  }
}

TEST(BilinearResize, WorkedExamples) {
  auto x = iota_tensor({1, 2, 3, 5});
  EXPECT_EQ(bilinear_resize(x, 1.0), x);

  TensorF one({1, 1, 1, 1}, 7.5f);
  auto c = bilinear_resize(one, 4.0);
  ASSERT_EQ(c.shape(), (Shape{1, 1, 4, 4}));
  for (float v : c.data()) EXPECT_EQ(v, 7.5f);

  TensorD ramp({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1});
  auto up = bilinear_resize(ramp, 2.0);
  ASSERT_EQ(up.shape(), (Shape{1, 1, 4, 4}));
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_DOUBLE_EQ(up(0, 0, r, 0), 0.0);
    EXPECT_DOUBLE_EQ(up(0, 0, r, 1), 0.25);
    EXPECT_DOUBLE_EQ(up(0, 0, r, 2), 0.75);
    EXPECT_DOUBLE_EQ(up(0, 0, r, 3), 1.0);
  }
}

TEST(BilinearResize, MatchesPerPixelOracleOnRandomImages) {
  std::mt19937_64 rng(5);
  for (double scale : {0.5, 1.5, 2.0, 2.5, 3.0, 4.0}) {
    auto x = random_tensor<double>({1, 2, 8, 8}, rng, 0.0, 255.0);
    EXPECT_LT(max_abs_diff(bilinear_resize(x, scale), naive_bilinear(x, scale)), 1e-6) << "scale " << scale;
  }
}

TEST(BicubicResize, IdentityConstantAndRoundTrip) {
  std::mt19937_64 rng(9);
  auto x = random_tensor<double>({1, 3, 6, 7}, rng);
  EXPECT_EQ(bicubic_resize(x, 1.0), x);

  for (double scale : {0.25, 0.5, 1.7, 3.0}) {
    TensorD c({1, 1, 9, 9}, 42.0);
    auto y = bicubic_resize(c, scale);
    for (double v : y.data()) EXPECT_NEAR(v, 42.0, 1e-9);
  }

  TensorD ramp({1, 1, 16, 16});
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) ramp(0, 0, i, j) = static_cast<double>(i + j);
  auto back = bicubic_resize(bicubic_resize(ramp, 0.5), 2.0);
  ASSERT_EQ(back.shape(), ramp.shape());
  EXPECT_LT(max_abs_diff(back, ramp), 0.1 * 30.0);
}

TEST(ChannelSplit, TableRatiosAndEdges) {
  TensorF x({1, 16, 2, 2});
  auto [a, b] = channel_split(x, 0.25);
  EXPECT_EQ(a.c(), 4u);
  EXPECT_EQ(b.c(), 12u);
  auto [c, d] = channel_split(x, 0.125);
  EXPECT_EQ(c.c(), 2u);
  EXPECT_EQ(d.c(), 14u);
  auto [e, f] = channel_split(x, 1.0);
  EXPECT_EQ(e.c(), 16u);
  EXPECT_EQ(f.c(), 0u);
  EXPECT_THROW(channel_split(x, 0.0), std::invalid_argument);
  EXPECT_THROW(channel_split(x, 1.5), std::invalid_argument);
  EXPECT_THROW(channel_split(x, 0.01), DimensionError);
}

TEST(ChannelSplit, ConcatRoundTripIsExactForAllRatios) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t c = 1 + rng() % 12;
    auto x = random_tensor<float>({1 + rng() % 3, c, 1 + rng() % 5, 1 + rng() % 5}, rng);
    const double alpha = std::max(1.0 / static_cast<double>(c), static_cast<double>(rng() % 1000 + 1) / 1000.0);
    auto [a, b] = channel_split(x, alpha);
    EXPECT_EQ(a.c() + b.c(), c);
    EXPECT_EQ(concat_channels(a, b), x);
  }
}

TEST(ConcatChannels, ShapesAndErrors) {
  TensorF a({1, 4, 3, 3}), b({1, 12, 3, 3});
  EXPECT_EQ(concat_channels(a, b).c(), 16u);
  auto x = iota_tensor({1, 3, 2, 2});
  EXPECT_EQ(concat_channels(x, TensorF({1, 0, 2, 2})), x);
  try {
    concat_channels(a, TensorF({1, 4, 3, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "W");
  }
}

TEST(ChannelShuffle, IndexFormula) {
  TensorF x({1, 4, 1, 1}, std::vector<float>{0, 1, 2, 3});
  EXPECT_EQ(channel_shuffle(x, 1), x);
  EXPECT_EQ(channel_shuffle(x, 2).storage(), (std::vector<float>{0, 2, 1, 3}));
  EXPECT_EQ(channel_shuffle(channel_shuffle(x, 2), 2), x);
  EXPECT_THROW(channel_shuffle(TensorF({1, 5, 1, 1}), 2), DimensionError);

  TensorF y({1, 6, 1, 1}, std::vector<float>{0, 1, 2, 3, 4, 5});
  auto s = channel_shuffle(y, 3);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(s.storage()[(c % 3) * 2 + c / 3], static_cast<float>(c));
}

TEST(Relu, Examples) {
  TensorF neg({1, 1, 1, 3}, std::vector<float>{-1, -2, -0.5});
  const auto zeros = relu(neg);
  for (float v : zeros.data()) EXPECT_EQ(v, 0.0f);
  TensorF pos({1, 1, 1, 2}, std::vector<float>{1, 2});
  EXPECT_EQ(relu(pos), pos);
  TensorF mixed({1, 1, 1, 2}, std::vector<float>{-1, 2});
  EXPECT_EQ(relu(mixed).storage(), (std::vector<float>{0, 2}));
}

// ---------------------------------------------------------------------------
// vjp against central finite differences (double precision).

namespace {

constexpr double kPrimitiveTol = 1e-5;

void expect_close(const TensorD& analytic, const TensorD& numeric, const char* what) {
  auto r = compare_grads(analytic, numeric);
  EXPECT_TRUE(r.ok(kPrimitiveTol)) << what << ": rel " << r.worst << " abs " << r.worst_abs;
}

}  // namespace

TEST(Vjp, Conv2dKernelOnTinyInputMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto x = random_tensor<double>({1, 1, 2, 2}, rng);
  auto w = random_conv<double>(1, 1, 3, 1, 1, 1, true, rng);
  auto cot = random_tensor<double>({1, 1, 2, 2}, rng);
  auto g = conv2d_vjp(x, w, cot);
  auto num = numeric_grad(
      [&](const TensorD& k) {
        auto ww = w;
        ww.kernel = k;
        return dot(cot, conv2d(x, ww));
      },
      w.kernel, 1e-6);
  expect_close(g.kernel, num, "kernel");
}

TEST(Vjp, Conv2dAllOperandsAcrossConfigurations) {
  std::mt19937_64 rng(22);
  struct Cfg {
    std::size_t cin, cout, k, groups, stride, pad;
  };
  for (const Cfg c : {Cfg{3, 4, 3, 1, 1, 1}, Cfg{4, 4, 3, 4, 1, 1}, Cfg{4, 6, 1, 1, 1, 0}, Cfg{2, 4, 3, 2, 2, 1},
                      Cfg{3, 2, 3, 1, 2, 0}}) {
    auto x = random_tensor<double>({2, c.cin, 5, 4}, rng);
    auto w = random_conv<double>(c.cin, c.cout, c.k, c.groups, c.stride, c.pad, true, rng);
    auto y = conv2d(x, w);
    auto cot = random_tensor<double>(y.shape(), rng);
    auto g = conv2d_vjp(x, w, cot);
    expect_close(g.input, numeric_grad([&](const TensorD& v) { return dot(cot, conv2d(v, w)); }, x), "input");
    expect_close(g.kernel,
                 numeric_grad(
                     [&](const TensorD& k) {
                       auto ww = w;
                       ww.kernel = k;
                       return dot(cot, conv2d(x, ww));
                     },
                     w.kernel),
                 "kernel");
    expect_close(bias_tensor(g.bias),
                 numeric_grad(
                     [&](const TensorD& b) {
                       auto ww = w;
                       ww.bias.assign(b.data().begin(), b.data().end());
                       return dot(cot, conv2d(x, ww));
                     },
                     bias_tensor(w.bias)),
                 "bias");
  }
}

TEST(Vjp, PermutationAndStructuralOps) {
  std::mt19937_64 rng(23);
  auto x = random_tensor<double>({2, 8, 3, 3}, rng);

  {
    auto cot = random_tensor<double>({2, 2, 6, 6}, rng);
    TensorD in[] = {x};
    TensorD ct[] = {cot};
    OpAttrs at;
    at.factor = 2;
    auto d = vjp<double>(OpKind::PixelShuffle, at, in, ct);
    expect_close(d[0], numeric_grad([&](const TensorD& v) { return dot(cot, pixel_shuffle(v, 2)); }, x),
                 "pixel_shuffle");
  }
  {
    auto cot = random_tensor<double>(x.shape(), rng);
    TensorD in[] = {x};
    TensorD ct[] = {cot};
    OpAttrs at;
    at.factor = 2;
    auto d = vjp<double>(OpKind::ChannelShuffle, at, in, ct);
    expect_close(d[0], numeric_grad([&](const TensorD& v) { return dot(cot, channel_shuffle(v, 2)); }, x),
                 "channel_shuffle");
  }
  {
    auto ca = random_tensor<double>({2, 2, 3, 3}, rng), cb = random_tensor<double>({2, 6, 3, 3}, rng);
    TensorD in[] = {x};
    TensorD ct[] = {ca, cb};
    OpAttrs at;
    at.alpha = 0.25;
    auto d = vjp<double>(OpKind::ChannelSplit, at, in, ct);
    expect_close(d[0],
                 numeric_grad(
                     [&](const TensorD& v) {
                       auto [a, b] = channel_split(v, 0.25);
                       return dot(ca, a) + dot(cb, b);
                     },
                     x),
                 "channel_split");
  }
  {
    auto a = random_tensor<double>({2, 3, 3, 3}, rng), b = random_tensor<double>({2, 5, 3, 3}, rng);
    auto cot = random_tensor<double>(x.shape(), rng);
    TensorD in[] = {a, b};
    TensorD ct[] = {cot};
    auto d = vjp<double>(OpKind::ConcatChannels, {}, in, ct);
    expect_close(d[0], numeric_grad([&](const TensorD& v) { return dot(cot, concat_channels(v, b)); }, a), "concat a");
    expect_close(d[1], numeric_grad([&](const TensorD& v) { return dot(cot, concat_channels(a, v)); }, b), "concat b");
  }
  {
    auto b = random_tensor<double>(x.shape(), rng), cot = random_tensor<double>(x.shape(), rng);
    TensorD in[] = {x, b};
    TensorD ct[] = {cot};
    auto d = vjp<double>(OpKind::Add, {}, in, ct);
    expect_close(d[0], numeric_grad([&](const TensorD& v) { return dot(cot, add(v, b)); }, x), "add a");
    expect_close(d[1], numeric_grad([&](const TensorD& v) { return dot(cot, add(x, v)); }, b), "add b");
  }
  {
    const std::vector<std::size_t> idx{3, 0, 3, 7, 1};
    auto cot = random_tensor<double>({2, idx.size(), 3, 3}, rng);
    TensorD in[] = {x};
    TensorD ct[] = {cot};
    OpAttrs at;
    at.indices = idx;
    auto d = vjp<double>(OpKind::GatherChannels, at, in, ct);
    expect_close(d[0],
                 numeric_grad([&](const TensorD& v) { return dot(cot, gather_channels<double>(v, idx)); }, x),
                 "gather");
  }
}

TEST(Vjp, ReluAwayFromKink) {
  std::mt19937_64 rng(24);
  auto x = random_tensor<double>({1, 3, 4, 4}, rng);
  for (auto& v : x.data())
    if (std::abs(v) < 1e-3) v = 0.5;
  auto cot = random_tensor<double>(x.shape(), rng);
  TensorD in[] = {x};
  TensorD ct[] = {cot};
  auto d = vjp<double>(OpKind::Relu, {}, in, ct);
  expect_close(d[0], numeric_grad([&](const TensorD& v) { return dot(cot, relu(v)); }, x), "relu");

  TensorD pos({1, 1, 1, 3}, std::vector<double>{0.5, 2, 3});
  TensorD g({1, 1, 1, 3}, std::vector<double>{-1, 4, 0.25});
  EXPECT_EQ(relu_vjp(pos, g), g);
}

TEST(Vjp, L1LossAwayFromKink) {
  std::mt19937_64 rng(25);
  auto p = random_tensor<double>({1, 2, 3, 3}, rng), t = random_tensor<double>({1, 2, 3, 3}, rng);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (std::abs(p.data()[i] - t.data()[i]) < 1e-3) p.data()[i] += 0.1;
  TensorD in[] = {p, t};
  TensorD ct[] = {TensorD({1, 1, 1, 1}, 1.0)};
  auto d = vjp<double>(OpKind::L1Loss, {}, in, ct);
  expect_close(d[0], numeric_grad([&](const TensorD& v) { return l1_loss(v, t); }, p), "l1 pred");
  expect_close(d[1], numeric_grad([&](const TensorD& v) { return l1_loss(p, v); }, t), "l1 target");
}

TEST(Vjp, UnsupportedOpThrows) {
  TensorD x({1, 1, 2, 2});
  TensorD in[] = {x};
  TensorD ct[] = {x};
  EXPECT_THROW(vjp<double>(OpKind::BilinearResize, {}, in, ct), UnsupportedOpError);
  EXPECT_THROW(vjp<double>(OpKind::BicubicResize, {}, in, ct), UnsupportedOpError);
}

TEST(Vjp, TapeComposesPrimitives) {
  std::mt19937_64 rng(26);
  auto x = random_tensor<double>({1, 4, 3, 3}, rng);
  auto w = random_conv<double>(2, 8, 3, 1, 1, 1, true, rng);
  auto target = random_tensor<double>({1, 2, 6, 6}, rng);
  auto loss = [&](const TensorD& v, const ConvWeights<double>& ww) {
    auto a = channel_split(v, 0.5).first;
    auto h = pixel_shuffle(conv2d(relu(a), ww), 2);
    return l1_loss(add(h, h), target);
  };
  Tape<double> tape;
  auto xi = tape.input(x, true);
  auto a = tape.split(xi, 0.5).first;
  auto h = tape.pixel_shuffle(tape.conv(tape.relu(a), w), 2);
  auto l = tape.l1_loss(tape.add(h, h), tape.constant(target));
  EXPECT_DOUBLE_EQ(tape.value(l).data()[0], loss(x, w));
  tape.backward(l);
  auto r = compare_grads(tape.grad(xi), numeric_grad([&](const TensorD& v) { return loss(v, w); }, x));
  EXPECT_TRUE(r.ok(1e-5)) << r.worst;
  auto gk = tape.param_grad(w).kernel;
  auto nk = numeric_grad(
      [&](const TensorD& k) {
        auto ww = w;
        ww.kernel = k;
        return loss(x, ww);
      },
      w.kernel);
  EXPECT_TRUE(compare_grads(gk, nk).ok(1e-5));
}
