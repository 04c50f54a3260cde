#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "gazekit/models/gaze_training.hpp"
#include "gazekit/models/model_io.hpp"
#include "gazekit/models/uegazenet.hpp"
#include "support/gradcheck.hpp"

using namespace gazekit;
using namespace gazekit::models;
using nn::Mode;
using nn::Tensor;

namespace {

BackboneSpec tiny_backbone(std::size_t units = 1) { return {{3, 3, 4, 4}, units, 24, 18}; }

Tensor random_images(std::size_t n, const BackboneSpec& b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return nn::random_normal({n, 1, b.input_height, b.input_width}, rng, 0.0, 0.3);
}

}  // namespace

TEST(Backbone, FeatureCountMatchesStrides) {
  const BackboneSpec b{{32, 64, 128, 256}, 2, 256, 192};
  EXPECT_EQ(b.output_hw(), std::make_pair(std::size_t{24}, std::size_t{32}));
  EXPECT_EQ(b.feature_count(), 2u * 256 * 24 * 32);
  const BackboneSpec odd{{1, 1, 1, 1}, 1, 13, 9};
  EXPECT_EQ(odd.output_hw(), std::make_pair(std::size_t{2}, std::size_t{2}));
  EXPECT_THROW((BackboneSpec{{1, 1, 1, 1}, 1, 11, 9}.validate()), Error);
  EXPECT_THROW((BackboneSpec{{1, 0, 1, 1}, 1, 24, 18}.validate()), Error);
  EXPECT_THROW((BackboneSpec{{1, 1, 1, 1}, 3, 24, 18}.validate()), Error);
}

TEST(UEGazeNet, OutputShapes) {
  UEGazeNet net({tiny_backbone(2), 16}, 1);
  const auto y = net.forward(random_images(3, net.spec().backbone, 2), Mode::Train);
  EXPECT_EQ(y.eyelid.shape(), (nn::Shape{3, 46}));
  EXPECT_EQ(y.iris.shape(), (nn::Shape{3, 64}));
  EXPECT_THROW(net.forward(Tensor({1, 1, 10, 10}), Mode::Infer), Error);
}

TEST(UEGazeNet, UntrainedNetPredictsFrameCentre) {
  UEGazeNet net({tiny_backbone(), 8}, 3);
  const auto y = net.forward(random_images(2, net.spec().backbone, 4), Mode::Train);
  for (double v : y.eyelid.values()) EXPECT_EQ(v, 0.0);
  for (double v : y.iris.values()) EXPECT_EQ(v, 0.0);
  const auto lm = decode_landmarks(y.eyelid, y.iris, 1, phantom::PhantomConfig{});
  for (const auto& p : lm.points) EXPECT_EQ(p, geometry::Vec2(128.0, 96.0));
}

TEST(UEGazeNet, HeadsAreIndependent) {
  UEGazeNet net({tiny_backbone(), 8}, 5);
  std::mt19937_64 rng(6);
  test_support::randomize(net.eyelid_head().parameters(), rng, 0.2);
  test_support::randomize(net.iris_head().parameters(), rng, 0.2);
  const Tensor x = random_images(2, net.spec().backbone, 7);
  const auto before = net.forward(x, Mode::Infer);
  test_support::randomize(net.iris_head().parameters(), rng, 0.2);
  const auto after = net.forward(x, Mode::Infer);
  EXPECT_EQ(after.eyelid.storage(), before.eyelid.storage());
  EXPECT_NE(after.iris.storage(), before.iris.storage());

  // A loss on the eyelid head leaves the iris head's gradients at zero.
  auto params = net.parameters();
  nn::zero_grads(params);
  const auto y = net.forward(x, Mode::Train);
  net.backward(nn::random_normal(y.eyelid.shape(), rng), Tensor(y.iris.shape()));
  for (auto* p : net.iris_head().parameters())
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0);
  double backbone_grad = 0.0;
  for (auto* p : net.backbone().parameters())
    for (double g : p->grad.values()) backbone_grad += std::abs(g);
  EXPECT_GT(backbone_grad, 0.0);
}

// The networks do not return an input gradient, so these checks probe the
// parameters only; the dummy input is never read by the forward pass.
TEST(UEGazeNet, WholeNetworkGradientCheck) {
  UEGazeNet net(UEGazeNetSpec{BackboneSpec{{2, 2, 2, 2}, 1, 12, 8}, 6}, 8);
  std::mt19937_64 rng(9);
  test_support::randomize(net.parameters(), rng, 0.4);
  const Tensor x = random_images(2, net.spec().backbone, 10);
  Tensor dummy({1});
  auto r = test_support::check_gradients(
      dummy, net.parameters(),
      [&] {
        const auto y = net.forward(x, Mode::Train);
        return nn::concat_features(y.eyelid, y.iris);
      },
      [&](const Tensor& dy) {
        auto [a, b] = nn::split_features(dy, UEGazeNetSpec::kEyelidOutputs);
        net.backward(a, b);
        return Tensor({1});
      },
      rng, 1e-5, 6);
  EXPECT_GT(r.checked, 60u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(UEGazeNetStar, GradientCheck) {
  UEGazeNetStar net(UEGazeNetStarSpec{BackboneSpec{{2, 2, 3, 2}, 1, 12, 8}, 6, 5, 3}, 11);
  std::mt19937_64 rng(12);
  test_support::randomize(net.parameters(), rng, 0.4);
  const Tensor x = random_images(3, net.spec().backbone, 13);
  Tensor dummy({1});
  auto r = test_support::check_gradients(
      dummy, net.parameters(), [&] { return net.forward(x, Mode::Train); },
      [&](const Tensor& dy) {
        net.backward(dy);
        return Tensor({1});
      },
      rng, 1e-5, 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(UEGazeNetStar, UntrainedPredictsStraightAhead) {
  UEGazeNetStar net({tiny_backbone(), 8, 4, 3}, 14);
  const auto y = net.forward(random_images(2, net.spec().backbone, 15), Mode::Train);
  EXPECT_EQ(y.shape(), (nn::Shape{2, 2}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);

  const phantom::PhantomConfig cfg;
  std::vector<phantom::EyeSample> samples{phantom::generate_sample(geometry::gaze_from_degrees(5, 5), cfg, 1)};
  const auto data = make_gaze_dataset(samples, 24, 18, cfg);
  const std::vector<std::size_t> idx{0};
  EXPECT_EQ(predict_direct(net, data, idx)[0].vector(), geometry::Vec3(0, 0, 1));
}

TEST(UEGazeNetStar, ZeroParametersGiveZeroOutput) {
  UEGazeNetStar net({tiny_backbone(), 8, 4, 3}, 16);
  std::mt19937_64 rng(17);
  test_support::randomize(net.parameters(), rng);
  zero_parameters(net.parameters());
  const auto y = net.forward(random_images(2, net.spec().backbone, 18), Mode::Train);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(UEGazeNetStar, OverfitsTwoSamples) {
  const phantom::PhantomConfig cfg;
  std::vector<phantom::EyeSample> samples{phantom::generate_sample(geometry::gaze_from_degrees(12, -6), cfg, 1),
                                          phantom::generate_sample(geometry::gaze_from_degrees(-9, 10), cfg, 2)};
  const auto data = make_gaze_dataset(samples, 24, 18, cfg);
  UEGazeNetStar net({tiny_backbone(), 8, 4, 3}, 19);
  nn::TrainingConfig tc;
  tc.learning_rate = 3e-3;
  tc.epochs = 300;
  tc.lr_decay_factor = 0.3;
  tc.decay_every_epochs = 100;
  tc.batch_size = 2;
  const auto log = train_uegazenet_star(net, data, tc);
  EXPECT_LT(log.back().loss, 0.05 * log.front().loss);
  EXPECT_LT(log.back().loss, 0.02);
}

TEST(Models, SeededConstructionIsDeterministic) {
  UEGazeNet a({tiny_backbone(), 8}, 20), b({tiny_backbone(), 8}, 20), c({tiny_backbone(), 8}, 21);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value.storage(), pb[i]->value.storage());
    any_diff |= pa[i]->value.storage() != pc[i]->value.storage();
  }
  EXPECT_TRUE(any_diff);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
}

TEST(Models, GroundTruthLandmarksBypassTheNetwork) {
  const phantom::PhantomConfig cfg;
  std::vector<phantom::EyeSample> samples;
  for (int i = 0; i < 5; ++i)
    samples.push_back(phantom::generate_sample(geometry::gaze_from_degrees(-20 + 10 * i, 15 - 7 * i), cfg, i));
  const auto data = make_gaze_dataset(samples, 24, 18, cfg);
  const auto idx = index_range(0, 5);
  const Tensor eyelid = data.eyelid_targets(idx), iris = data.iris_targets(idx);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto lm = decode_landmarks(eyelid, iris, i, cfg);
    EXPECT_LT(geometry::angular_error(geometry::landmarks_to_gaze(lm, cfg), data.gaze(i)), 0.01);
  }
}

TEST(Models, DatasetRejectsWrongRenderSize) {
  const auto cfg = phantom::PhantomConfig::with_size(64, 48);
  std::vector<phantom::EyeSample> samples{phantom::generate_sample(geometry::gaze_from_degrees(0, 0), cfg, 1)};
  EXPECT_THROW(make_gaze_dataset(samples, 24, 18, phantom::PhantomConfig{}), Error);
}

TEST(Models, MedianAndMean) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), Error);
}

TEST(ModelIo, RoundTripBothArchitectures) {
  const auto dir = std::filesystem::temp_directory_path() / "gazekit_model_io";
  std::filesystem::create_directories(dir);
  for (auto arch : {GazeArch::UEGazeNet, GazeArch::UEGazeNetStar}) {
    GazeModelSpec spec;
    spec.arch = arch;
    spec.backbone = tiny_backbone();
    spec.head_hidden = 8;
    spec.fc1 = 6;
    spec.fc2 = 4;
    GazeModel m = GazeModel::build(spec, 22);
    std::mt19937_64 rng(23);
    for (auto* p : (m.landmark_net ? m.landmark_net->parameters() : m.direct_net->parameters()))
      for (auto& v : p->value.values()) v += 0.01 * std::normal_distribution<double>()(rng);
    const auto path = dir / (to_string(arch) + ".gzwt");
    save_gaze_model(path, m);
    GazeModel back = load_gaze_model(path);
    EXPECT_EQ(back.spec.arch, arch);
    EXPECT_EQ(back.parameter_count(), m.parameter_count());
    const Tensor x = random_images(2, spec.backbone, 24);
    if (m.landmark_net)
      EXPECT_EQ(back.landmark_net->forward(x, Mode::Infer).iris.storage(),
                m.landmark_net->forward(x, Mode::Infer).iris.storage());
    else
      EXPECT_EQ(back.direct_net->forward(x, Mode::Infer).storage(), m.direct_net->forward(x, Mode::Infer).storage());
  }
  EXPECT_THROW(load_gaze_model(dir / "missing.gzwt"), Error);
  EXPECT_THROW(GazeModelSpec::from_json(nlohmann::json{{"arch", "uegazenet"}}), Error);
  EXPECT_THROW(parse_arch("resnet"), Error);
  std::filesystem::remove_all(dir);
}
