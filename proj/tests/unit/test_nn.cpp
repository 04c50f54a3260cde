#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gazekit/models/gaze_training.hpp"
#include "gazekit/nn/adam.hpp"
#include "gazekit/nn/layers.hpp"
#include "gazekit/nn/weights_io.hpp"
#include "support/gradcheck.hpp"

using namespace gazekit;
using nn::Mode;
using nn::Tensor;

namespace {

// Direct nested-loop cross-correlation with zero padding.
Tensor brute_conv(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t stride) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), kk = k.dim(0);
  const std::size_t ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
  Tensor y({kk, ho, wo});
  for (std::size_t o = 0; o < kk; ++o)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        double s = b[o];
        for (std::size_t ch = 0; ch < c; ++ch)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(i * stride) + dy, xx = static_cast<long>(j * stride) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              s += k[((o * c + ch) * 3 + static_cast<std::size_t>(dy + 1)) * 3 + static_cast<std::size_t>(dx + 1)] *
                   x[(ch * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)];
            }
        y[(o * ho + i) * wo + j] = s;
      }
  return y;
}

}  // namespace

TEST(Conv3x3, ZeroInputGivesZeroOutput) {
  std::mt19937_64 rng(1);
  const Tensor y = nn::conv3x3(Tensor({1, 3, 3}), nn::random_normal({1, 1, 3, 3}, rng), Tensor({1}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv3x3, CentreKernelIsIdentity) {
  std::mt19937_64 rng(2);
  const Tensor x = nn::random_normal({1, 5, 4}, rng);
  Tensor k({1, 1, 3, 3});
  k[4] = 1.0;
  EXPECT_EQ(nn::conv3x3(x, k, Tensor({1})).storage(), x.storage());
}

TEST(Conv3x3, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(3);
  for (std::size_t stride : {1u, 2u}) {
    const Tensor x = nn::random_normal({2, 5, 5}, rng);
    const Tensor k = nn::random_normal({4, 2, 3, 3}, rng);
    const Tensor b = nn::random_normal({4}, rng);
    const Tensor y = nn::conv3x3(x, k, b, stride), ref = brute_conv(x, k, b, stride);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv3x3, LayerMatchesOracleOnLargerShapes) {
  std::mt19937_64 rng(4);
  nn::Conv3x3 conv("c", 3, 5, 2);
  conv.init(rng);
  conv.bias.value = nn::random_normal({5}, rng);
  const Tensor x = nn::random_normal({2, 3, 11, 9}, rng);
  const Tensor y = conv.forward(x);
  for (std::size_t s = 0; s < 2; ++s) {
    Tensor xs({3, 11, 9}, std::vector<double>(x.data() + s * 297, x.data() + (s + 1) * 297));
    const Tensor ref = brute_conv(xs, conv.weight.value, conv.bias.value, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[s * ref.size() + i], ref[i], 1e-12);
  }
}

TEST(Conv3x3, RejectsChannelMismatch) {
  nn::Conv3x3 conv("c", 2, 3);
  EXPECT_THROW(conv.forward(Tensor({1, 3, 4, 4})), Error);
}

TEST(Linearity, ConvAndFullyConnected) {
  std::mt19937_64 rng(5);
  const double a = 0.7, b = -1.3;
  nn::Conv3x3 conv("c", 2, 3);
  conv.init(rng);
  nn::FullyConnected fc("f", 6, 4);
  fc.init(rng);
  // Zero bias keeps the maps linear rather than affine.
  const Tensor x = nn::random_normal({1, 2, 5, 5}, rng), y = nn::random_normal({1, 2, 5, 5}, rng);
  Tensor mix = x;
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Tensor fx = conv.forward(x), fy = conv.forward(y), fm = conv.forward(mix);
  for (std::size_t i = 0; i < fm.size(); ++i) EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-10);

  const Tensor u = nn::random_normal({3, 6}, rng), v = nn::random_normal({3, 6}, rng);
  Tensor uv = u;
  for (std::size_t i = 0; i < uv.size(); ++i) uv[i] = a * u[i] + b * v[i];
  const Tensor gu = fc.forward(u), gv = fc.forward(v), guv = fc.forward(uv);
  for (std::size_t i = 0; i < guv.size(); ++i) EXPECT_NEAR(guv[i], a * gu[i] + b * gv[i], 1e-10);
}

TEST(BatchNorm, NormalizedInputPassesThrough) {
  nn::BatchNorm bn("bn", 1);
  // Four values with mean 0 and population variance 1.
  Tensor x({4, 1}, std::vector<double>{-1.0, 1.0, -1.0, 1.0});
  const Tensor y = bn.forward(x, Mode::Train);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  std::mt19937_64 rng(6);
  nn::BatchNorm bn("bn", 3);
  bn.gamma.value.fill(0.0);
  bn.beta.value = Tensor({3}, std::vector<double>{0.5, -1.0, 2.0});
  const Tensor y = bn.forward(nn::random_normal({4, 3, 2, 2}, rng), Mode::Train);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[(n * 3 + c) * 4 + i], bn.beta.value[c]);
}

TEST(BatchNorm, PreAffineChannelMeanIsZero) {
  std::mt19937_64 rng(7);
  nn::BatchNorm bn("bn", 3);
  const Tensor y = bn.forward(nn::random_normal({5, 3, 3, 4}, rng, 2.0, 3.0), Mode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t i = 0; i < 12; ++i) m += y[(n * 3 + c) * 12 + i];
    EXPECT_LT(std::abs(m / 60.0), 1e-10);
  }
}

TEST(BatchNorm, InferenceUsesRunningStatistics) {
  nn::BatchNorm bn("bn", 1);
  bn.running_mean[0] = 2.0;
  bn.running_var[0] = 4.0;
  const Tensor y = bn.forward(Tensor({1, 1}, std::vector<double>{6.0}), Mode::Infer);
  EXPECT_NEAR(y[0], 4.0 / std::sqrt(4.0 + nn::BatchNorm::kEpsilon), 1e-12);
}

TEST(BatchNorm, TrainModeNeedsTwoSamples) {
  nn::BatchNorm bn("bn", 2);
  EXPECT_THROW(bn.forward(Tensor({1, 2}), Mode::Train), Error);
}

TEST(ResidualBlock, ZeroBranchIsExactIdentity) {
  std::mt19937_64 rng(8);
  nn::ResidualBlock block("r", 3, 2);
  block.init(rng);
  for (std::size_t u = 0; u < 2; ++u) {
    block.unit(u).conv1().weight.value.fill(0.0);
    block.unit(u).conv2().weight.value.fill(0.0);
  }
  const Tensor x = nn::random_normal({2, 3, 5, 4}, rng);
  EXPECT_EQ(block.forward(x, Mode::Train).storage(), x.storage());
  EXPECT_EQ(block.forward(x, Mode::Infer).storage(), x.storage());
}

TEST(ResidualBlock, OneUnitMatchesStepByStepComposition) {
  std::mt19937_64 rng(9);
  nn::ResidualBlock block("r", 2, 1);
  block.init(rng);
  test_support::randomize(block.parameters(), rng, 0.5);
  auto& u = block.unit(0);
  const Tensor x = nn::random_normal({3, 2, 4, 4}, rng);

  nn::BatchNorm bn1 = u.bn1(), bn2 = u.bn2();
  nn::Conv3x3 c1 = u.conv1(), c2 = u.conv2();
  Tensor ref = c2.forward(nn::relu(bn2.forward(c1.forward(nn::relu(bn1.forward(x, Mode::Train))), Mode::Train)));
  ref += x;
  const Tensor y = block.forward(x, Mode::Train);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(ResidualBlock, TwoUnitsEqualOneUnitTwice) {
  std::mt19937_64 rng(10);
  nn::ResidualBlock two("r", 2, 2);
  two.init(rng);
  nn::ResidualBlock first("a", 2, 1), second("b", 2, 1);
  auto copy = [](nn::ResidualUnit& from, nn::ResidualUnit& to) {
    auto src = from.parameters(), dst = to.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  };
  copy(two.unit(0), first.unit(0));
  copy(two.unit(1), second.unit(0));
  const Tensor x = nn::random_normal({2, 2, 3, 5}, rng);
  const Tensor a = two.forward(x, Mode::Train), b = second.forward(first.forward(x, Mode::Train), Mode::Train);
  EXPECT_EQ(a.storage(), b.storage());
}

TEST(Activations, ReluSignDisjointness) {
  std::mt19937_64 rng(11);
  const Tensor x = nn::random_normal({4, 9}, rng);
  Tensor neg = x;
  neg *= -1.0;
  const Tensor a = nn::relu(x), b = nn::relu(neg);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(a[i] * b[i], 0.0);
}

TEST(Softmax, UniformLogitsGiveUniformProbabilities) {
  const Tensor p = nn::softmax(Tensor({1, 17}, 3.0));
  for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 17.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(12);
  const Tensor x = nn::random_normal({6, 9}, rng, 0.0, 5.0);
  Tensor shifted = x;
  for (auto& v : shifted.values()) v += 123.4;
  const Tensor p = nn::softmax(x), q = nn::softmax(shifted);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 9; ++k) {
      s += p[r * 9 + k];
      EXPECT_NEAR(p[r * 9 + k], q[r * 9 + k], 1e-9);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Losses, EuclideanLossOfIdenticalTensorsIsZero) {
  std::mt19937_64 rng(13);
  const Tensor t = nn::random_normal({3, 4}, rng);
  EXPECT_EQ(nn::euclidean_loss(t, t), 0.0);
  nn::EuclideanLoss loss;
  loss.forward(t, t);
  const Tensor g = loss.backward();
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Losses, EuclideanLossIsMeanRowDistance) {
  const Tensor a({2, 2}, std::vector<double>{0, 0, 1, 1});
  const Tensor b({2, 2}, std::vector<double>{3, 4, 1, 1});
  EXPECT_DOUBLE_EQ(nn::euclidean_loss(a, b), 2.5);
}

TEST(Backward, SingleLinearLayerMatchesNormalEquationsGradient) {
  std::mt19937_64 rng(14);
  const std::size_t n = 7, d = 4;
  nn::FullyConnected fc("f", d, 1);
  fc.weight.value = nn::random_normal({1, d}, rng);
  const Tensor x = nn::random_normal({n, d}, rng), t = nn::random_normal({n, 1}, rng);
  fc.weight.zero_grad();
  fc.bias.zero_grad();
  const Tensor y = fc.forward(x);
  // Quadratic loss (1/N) sum (xw - t)^2.
  Tensor dy({n, 1});
  for (std::size_t i = 0; i < n; ++i) dy[i] = 2.0 * (y[i] - t[i]) / static_cast<double>(n);
  fc.backward(dy);
  for (std::size_t j = 0; j < d; ++j) {
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = -t[i];
      for (std::size_t k = 0; k < d; ++k) r += x[i * d + k] * fc.weight.value[k];
      g += 2.0 * x[i * d + j] * r / static_cast<double>(n);
    }
    EXPECT_NEAR(fc.weight.grad[j], g, 1e-8);
  }
}

TEST(Backward, ZeroUpstreamGradientGivesZeroParameterGradients) {
  std::mt19937_64 rng(15);
  nn::ResidualBlock block("r", 2, 1);
  block.init(rng);
  auto params = block.parameters();
  nn::zero_grads(params);
  const Tensor y = block.forward(nn::random_normal({2, 2, 4, 4}, rng), Mode::Train);
  block.backward(Tensor(y.shape()));
  for (auto* p : params)
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, FiniteDifferencesAllLayerKinds) {
  for (const auto& c : test_support::gradient_suite(4))
    EXPECT_LT(c.result.max_rel_error, 1e-4) << c.kind << " seed " << c.seed << " " << c.config << " worst "
                                            << c.result.worst;
}

TEST(Backward, AccumulatesIntoParameterGradients) {
  std::mt19937_64 rng(16);
  nn::FullyConnected fc("f", 3, 2);
  fc.init(rng);
  const Tensor x = nn::random_normal({2, 3}, rng), dy = nn::random_normal({2, 2}, rng);
  fc.weight.zero_grad();
  fc.forward(x);
  fc.backward(dy);
  const Tensor once = fc.weight.grad;
  fc.forward(x);
  fc.backward(dy);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(fc.weight.grad[i], 2 * once[i], 1e-14);
}

TEST(MovingAverage, AveragesWindows) {
  nn::MovingAverage ma(3);
  const Tensor y = ma.forward(Tensor({1, 5}, std::vector<double>{1, 2, 3, 4, 8}));
  ASSERT_EQ(y.dim(1), 3u);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
  EXPECT_DOUBLE_EQ(y[2], 5.0);
}

TEST(Adam, ZeroGradientLeavesFreshParametersUnchanged) {
  nn::Parameter q("q", Tensor({2}, std::vector<double>{0.5, 0.25}));
  std::vector<nn::Parameter*> qs{&q};
  nn::Adam adam;
  adam.step(qs, 0.1);
  EXPECT_EQ(q.value[0], 0.5);
  EXPECT_EQ(q.value[1], 0.25);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  nn::Parameter p("p", Tensor({3}, std::vector<double>{1, -2, 3}));
  std::vector<nn::Parameter*> ps{&p};
  nn::Adam adam;
  p.grad.fill(1.0);
  adam.step(ps, 0.1);
  const double m1 = adam.first_moments()[0][0], v1 = adam.second_moments()[0][0];
  p.grad.fill(0.0);
  adam.step(ps, 0.1);
  EXPECT_NEAR(adam.first_moments()[0][0], nn::Adam::kBeta1 * m1, 1e-15);
  EXPECT_NEAR(adam.second_moments()[0][0], nn::Adam::kBeta2 * v1, 1e-15);
  EXPECT_EQ(adam.step_count(), 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::Parameter p("p", Tensor({4}, std::vector<double>{0, 1, 2, 3}));
  p.grad = Tensor({4}, std::vector<double>{0.5, -3.0, 1e-3, 42.0});
  std::vector<nn::Parameter*> ps{&p};
  nn::Adam adam;
  adam.step(ps, 1e-3);
  const double expected[4] = {-1e-3, 1.0 + 1e-3, 2.0 - 1e-3, 3.0 - 1e-3};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.value[i], expected[i], 1e-8);
}

TEST(Adam, RejectsNonFiniteGradient) {
  nn::Parameter p("layer.weight", Tensor({2}));
  p.grad[1] = std::nan("");
  std::vector<nn::Parameter*> ps{&p};
  nn::Adam adam;
  try {
    adam.step(ps, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Training);
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
}

TEST(Schedule, StepDecay) {
  nn::TrainingConfig cfg;
  EXPECT_DOUBLE_EQ(nn::learning_rate_for_epoch(cfg, 1), 1e-4);
  EXPECT_DOUBLE_EQ(nn::learning_rate_for_epoch(cfg, 5), 1e-4);
  EXPECT_NEAR(nn::learning_rate_for_epoch(cfg, 6), 1e-5, 1e-20);
  EXPECT_NEAR(nn::learning_rate_for_epoch(cfg, 11), 1e-6, 1e-20);
  EXPECT_THROW(nn::learning_rate_for_epoch(cfg, 0), Error);
}

TEST(Schedule, ConfigValidation) {
  nn::TrainingConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.lr_decay_factor = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Training, SeededRunsGiveBitIdenticalLossCurves) {
  auto run = [] {
    std::mt19937_64 rng(17);
    nn::FullyConnected fc("f", 5, 3);
    fc.init(rng);
    const Tensor x = nn::random_normal({40, 5}, rng), t = nn::random_normal({40, 3}, rng);
    std::vector<nn::Parameter*> params{&fc.weight, &fc.bias};
    nn::TrainingConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.seed = 99;
    nn::EuclideanLoss loss;
    std::vector<double> out;
    models::run_training(params, 40, cfg,
                         [&](std::span<const std::size_t> idx) {
                           Tensor xb({idx.size(), 5}), tb({idx.size(), 3});
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             for (std::size_t j = 0; j < 5; ++j) xb[i * 5 + j] = x[idx[i] * 5 + j];
                             for (std::size_t j = 0; j < 3; ++j) tb[i * 3 + j] = t[idx[i] * 3 + j];
                           }
                           const double l = loss.forward(fc.forward(xb), tb);
                           fc.backward(loss.backward());
                           return l;
                         },
                         [&](const models::EpochRecord& r) { out.push_back(r.loss); });
    return out;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a, b);
  EXPECT_LT(a.back(), a.front());
}

TEST(WeightsIo, RoundTripAndShapeChecks) {
  std::mt19937_64 rng(18);
  nn::Conv3x3 conv("c", 2, 3);
  conv.init(rng);
  nn::BatchNorm bn("bn", 3);
  bn.running_mean = nn::random_normal({3}, rng);
  std::vector<nn::LayerState> st;
  conv.collect_state(st);
  bn.collect_state(st);
  const auto path = (std::filesystem::temp_directory_path() / "gazekit_test_weights.gzwt").string();
  nn::save_weights(path, st);

  nn::Conv3x3 conv2("c", 2, 3);
  nn::BatchNorm bn2("bn", 3);
  std::vector<nn::LayerState> st2;
  conv2.collect_state(st2);
  bn2.collect_state(st2);
  nn::load_weights(path, st2);
  EXPECT_EQ(conv2.weight.value.storage(), conv.weight.value.storage());
  EXPECT_EQ(bn2.running_mean.storage(), bn.running_mean.storage());

  nn::Conv3x3 wrong("c", 2, 4);
  std::vector<nn::LayerState> st3;
  wrong.collect_state(st3);
  EXPECT_THROW(nn::load_weights(path, st3), Error);
  EXPECT_THROW(nn::load_weights(path + ".missing", st3), Error);
  std::filesystem::remove(path);
}

TEST(TensorOps, ConcatAndSplitRoundTrip) {
  std::mt19937_64 rng(19);
  const Tensor a = nn::random_normal({3, 4}, rng), b = nn::random_normal({3, 2}, rng);
  const auto [x, y] = nn::split_features(nn::concat_features(a, b), 4);
  EXPECT_EQ(x.storage(), a.storage());
  EXPECT_EQ(y.storage(), b.storage());
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
}
