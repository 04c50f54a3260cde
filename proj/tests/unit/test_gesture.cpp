#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gazekit/gesture/catalog.hpp"
#include "gazekit/gesture/classifier.hpp"
#include "gazekit/gesture/corpus.hpp"
#include "gazekit/gesture/heatmap.hpp"
#include "gazekit/gesture/raster.hpp"
#include "gazekit/gesture/synth.hpp"
#include "gazekit/gesture/trajectory.hpp"

using namespace gazekit;
using namespace gazekit::gesture;

namespace {

EyeFrame frame(double t, bool closed, double yaw = 0.0) {
  geometry::PhantomConfig cfg;
  if (closed) cfg.lid_openness = 0.0;
  const auto g = geometry::gaze_from_degrees(yaw, 0.0);
  return {t, geometry::project_gaze_to_landmarks(g, cfg), g};
}

std::vector<EyeFrame> stream(const std::string& pattern) {
  std::vector<EyeFrame> out;
  for (std::size_t i = 0; i < pattern.size(); ++i)
    out.push_back(frame(10.0 * static_cast<double>(i), pattern[i] == 'x', static_cast<double>(i)));
  return out;
}

GazeTrajectory from_tangent(const std::vector<Vec2>& pts) {
  GazeTrajectory t;
  for (std::size_t i = 0; i < pts.size(); ++i)
    t.samples.push_back({static_cast<double>(i), GazeDirection::from_vector(geometry::Vec3(pts[i].x(), -pts[i].y(), 1.0))});
  return t;
}

GazeTrajectory scribble(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<Vec2> pts;
  for (int i = 0; i < 25; ++i) pts.emplace_back(u(rng), u(rng));
  return from_tangent(pts);
}

double max_cell_diff(const GestureRaster& a, const GestureRaster& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) d = std::max(d, std::abs(a.cells[i] - b.cells[i]));
  return d;
}

std::vector<GestureRaster> pattern_rasters(int id, std::size_t n) {
  const auto& tpl = find_pattern(default_catalog(), id);
  std::vector<GestureRaster> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto style = subject_style(5, static_cast<int>(i % 15));
    out.push_back(rasterize(synthesize_gesture(tpl, phantom::derive_seed(100 + id, i), style)));
  }
  return out;
}

}  // namespace

TEST(Blink, NoBlinkGivesOneTrajectory) {
  const auto frames = stream("..........");
  const auto out = segment_by_blink(frames);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].size(), frames.size());
}

TEST(Blink, BlinkSplitsInTwo) {
  const auto out = segment_by_blink(stream(".....xxxx......"));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].size(), 5u);
  EXPECT_EQ(out[1].size(), 6u);
  EXPECT_EQ(out[1].samples.front().t_ms, 90.0);
}

TEST(Blink, ShortClosedRunDoesNotSplit) {
  const BlinkConfig cfg;
  const std::string p = "....." + std::string(static_cast<std::size_t>(cfg.min_closed_frames - 1), 'x') + ".....";
  const auto out = segment_by_blink(stream(p), cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].size(), p.size());
  EXPECT_EQ(segment_by_blink(stream(".....xxx....."), cfg).size(), 2u);
}

TEST(Blink, OutputPartitionsNonBlinkFrames) {
  const std::string p = "xxx...x..xxxx.xx....xxxxx.x";
  const auto frames = stream(p);
  const auto out = segment_by_blink(frames);
  std::vector<double> kept;
  for (const auto& t : out)
    for (const auto& s : t.samples) kept.push_back(s.t_ms);
  std::vector<double> expected;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool in_blink = (i < 3) || (i >= 9 && i < 13) || (i >= 20 && i < 25);
    if (!in_blink) expected.push_back(frames[i].t_ms);
  }
  EXPECT_EQ(kept, expected);
  EXPECT_EQ(out.size(), 3u);
}

TEST(Blink, InvalidConfigRejected) {
  EXPECT_THROW(segment_by_blink(stream("..."), BlinkConfig{0.0, 3}), Error);
  EXPECT_THROW(segment_by_blink(stream("..."), BlinkConfig{0.15, 0}), Error);
}

TEST(Normalize, HorizontalSweep) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 20; ++i) pts.emplace_back(-0.2 + 0.02 * i, 0.05);
  const auto n = normalize_trajectory(from_tangent(pts));
  EXPECT_NEAR(n.front().x(), 0.1, 1e-12);
  EXPECT_NEAR(n.back().x(), 0.9, 1e-12);
  for (const auto& p : n) EXPECT_NEAR(p.y(), 0.5, 1e-12);
}

TEST(Normalize, InvariantToOffsetAndAmplitude) {
  const auto base = scribble(3);
  const auto ref = normalize_trajectory(base);
  std::vector<Vec2> shifted, doubled;
  for (const auto& s : base.samples) {
    const Vec2 p = tangent_screen_point(s.gaze);
    shifted.push_back(p + Vec2(0.17, -0.08));
    doubled.push_back(2.0 * p);
  }
  const auto a = normalize_trajectory(from_tangent(shifted)), b = normalize_trajectory(from_tangent(doubled));
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR((a[i] - ref[i]).norm(), 0.0, 1e-9);
    EXPECT_NEAR((b[i] - ref[i]).norm(), 0.0, 1e-9);
  }
}

TEST(Normalize, DegenerateInputsRejected) {
  try {
    normalize_trajectory(from_tangent({Vec2(0.1, 0.1), Vec2(0.1, 0.1), Vec2(0.1, 0.1)}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateGesture);
  }
  EXPECT_THROW(normalize_trajectory(from_tangent({Vec2(0.1, 0.1)})), Error);
  auto t = from_tangent({Vec2(0, 0), Vec2(0.1, 0.1)});
  t.samples[1].t_ms = t.samples[0].t_ms;
  EXPECT_THROW(normalize_trajectory(t), Error);
}

TEST(Raster, MiddleRowSegmentGivesOneBand) {
  const auto r = rasterize(std::vector<Vec2>{Vec2(0.1, 0.5), Vec2(0.9, 0.5)});
  // Canvas row 540 is the boundary between raster rows 15 and 16, so the band straddles both.
  for (std::size_t row = 0; row < kRasterSize; ++row) {
    double mx = 0.0;
    for (std::size_t c = 0; c < kRasterSize; ++c) mx = std::max(mx, r(row, c));
    if (row == 15 || row == 16)
      EXPECT_GT(mx, 0.1) << row;
    else
      EXPECT_LT(mx, 0.05) << row;
  }
  for (double v : r.cells) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Raster, PointAndTinySegmentAreVisible) {
  EXPECT_GE(rasterize(std::vector<Vec2>{Vec2(0.5, 0.5)}).nonzero_count(), 1u);
  EXPECT_GE(rasterize(std::vector<Vec2>{Vec2(0.3, 0.3), Vec2(0.3001, 0.3)}).nonzero_count(), 1u);
  EXPECT_THROW(rasterize(std::vector<Vec2>{}), Error);
}

TEST(Raster, MatchesAreaResampledCanvas) {
  const std::vector<std::vector<Vec2>> inputs{
      {Vec2(0.1, 0.5), Vec2(0.9, 0.5)},
      {Vec2(0.13, 0.77), Vec2(0.61, 0.12), Vec2(0.88, 0.9), Vec2(0.2, 0.4)},
      normalize_trajectory(scribble(9)),
      find_pattern(default_catalog(), 17).waypoints};
  for (const auto& pts : inputs) {
    const auto canvas = render_canvas(pts);
    const auto reference = raster_from_image(phantom::area_resample(canvas, kRasterSize, kRasterSize));
    const auto fast = rasterize(pts);
    EXPECT_LT(max_cell_diff(fast, reference), 1e-9);
    EXPECT_NEAR(fast.mean(), canvas.mean(), 1e-9);
  }
}

TEST(Raster, TrajectoryPipelineIsTranslationAndScaleInvariant) {
  const auto base = scribble(4);
  std::vector<Vec2> moved;
  for (const auto& s : base.samples) moved.push_back(1.5 * tangent_screen_point(s.gaze) + Vec2(-0.1, 0.2));
  EXPECT_LT(max_cell_diff(rasterize(base), rasterize(from_tangent(moved))), 1e-9);
}

TEST(Catalog, ShapeCountsAndJsonRoundTrip) {
  const auto& c = default_catalog();
  ASSERT_EQ(c.size(), 17u);
  std::array<int, 6> per_category{};
  for (const auto& t : c) ++per_category[static_cast<std::size_t>(t.category)];
  EXPECT_EQ(per_category, (std::array<int, 6>{0, 4, 4, 4, 4, 1}));
  EXPECT_TRUE(find_pattern(c, 17).closed);
  EXPECT_NO_THROW(validate_catalog(c));

  const auto back = catalog_from_json(catalog_to_json(c));
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back[i].id, c[i].id);
    EXPECT_EQ(back[i].category, c[i].category);
    EXPECT_EQ(back[i].name, c[i].name);
    EXPECT_EQ(back[i].closed, c[i].closed);
    EXPECT_EQ(back[i].waypoints, c[i].waypoints);
  }
}

TEST(Catalog, MalformedCatalogsRejected) {
  auto j = catalog_to_json(default_catalog());
  j["version"] = 2;
  EXPECT_THROW(catalog_from_json(j), Error);
  Catalog c = default_catalog();
  c.pop_back();
  EXPECT_THROW(validate_catalog(c), Error);
  c = default_catalog();
  c[3].waypoints = {Vec2(0.5, 0.5)};
  EXPECT_THROW(validate_catalog(c), Error);
  EXPECT_THROW(find_pattern(default_catalog(), 18), Error);
  EXPECT_THROW(load_catalog("/nonexistent/patterns.json"), Error);
}

TEST(Catalog, ShippedDataFileMatchesDefault) {
  const auto c = load_catalog(std::string(GAZEKIT_DATA_DIR) + "/patterns.json");
  ASSERT_EQ(c.size(), 17u);
  // Arc waypoints may differ in the last bit when the build contracts to FMA.
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_EQ(c[i].waypoints.size(), default_catalog()[i].waypoints.size());
    for (std::size_t k = 0; k < c[i].waypoints.size(); ++k)
      EXPECT_LT((c[i].waypoints[k] - default_catalog()[i].waypoints[k]).norm(), 1e-12);
  }
}

TEST(Synth, IdentityConfigPassesThroughWaypoints) {
  SynthOptions opt;
  opt.transform = opt.jitter = opt.overshoot = false;
  for (const auto& tpl : default_catalog()) {
    const auto t = synthesize_gesture(tpl, 1, SubjectStyle{}, opt);
    std::vector<Vec2> pts;
    for (const auto& s : t.samples) pts.push_back(tangent_screen_point(s.gaze) + Vec2(0.5, 0.5));
    std::size_t k = 0;
    for (const auto& p : pts)
      if (k < tpl.waypoints.size() && (p - tpl.waypoints[k]).norm() < 1e-12) ++k;
    EXPECT_EQ(k, tpl.waypoints.size()) << tpl.name;
    EXPECT_EQ(t.label, tpl.id);
    EXPECT_NO_THROW(t.validate());
  }
}

TEST(Synth, SeedDeterminesTrajectory) {
  const auto& tpl = find_pattern(default_catalog(), 11);
  const auto style = subject_style(1, 2);
  const auto a = synthesize_gesture(tpl, 77, style), b = synthesize_gesture(tpl, 77, style),
             c = synthesize_gesture(tpl, 78, style);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i].gaze.vector(), b.samples[i].gaze.vector());
  EXPECT_NE(rasterize(a), rasterize(c));
}

TEST(Synth, IndicatorStaysOnScreen) {
  for (const auto& tpl : default_catalog())
    for (std::uint64_t s = 0; s < 20; ++s)
      for (const auto& p : indicator_waypoints(tpl, s)) {
        EXPECT_GE(p.x(), -1e-12);
        EXPECT_LE(p.x(), 1.0 + 1e-12);
        EXPECT_GE(p.y(), -1e-12);
        EXPECT_LE(p.y(), 1.0 + 1e-12);
      }
}

TEST(Corpus, FullSizeSplitAndReproducibility) {
  const CorpusConfig cfg;
  const auto a = generate_corpus(cfg);
  EXPECT_EQ(a.size(), 10200u);
  const auto b = generate_corpus(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); i += 97) {
    EXPECT_EQ(a[i].pattern_id, b[i].pattern_id);
    EXPECT_EQ(a[i].subject, b[i].subject);
    ASSERT_EQ(a[i].trajectory.size(), b[i].trajectory.size());
    for (std::size_t k = 0; k < a[i].trajectory.size(); ++k)
      EXPECT_EQ(a[i].trajectory.samples[k].gaze.vector(), b[i].trajectory.samples[k].gaze.vector());
  }

  const auto subjects = subjects_of(a);
  ASSERT_EQ(subjects.size(), 15u);
  const auto s1 = split_subjects(subjects, 12, cfg.seed), s2 = split_subjects(subjects, 12, cfg.seed);
  EXPECT_EQ(s1.train, s2.train);
  EXPECT_EQ(s1.test, s2.test);
  EXPECT_EQ(s1.train.size(), 12u);
  EXPECT_EQ(s1.test.size(), 3u);
  for (int t : s1.test) EXPECT_EQ(std::count(s1.train.begin(), s1.train.end(), t), 0);
  EXPECT_EQ(select_subjects(a, s1.train).size(), 8160u);
  EXPECT_EQ(select_subjects(a, s1.test).size(), 2040u);
}

TEST(Corpus, ConfigurationErrors) {
  CorpusConfig small;
  small.subjects = 2;
  small.repetitions = 1;
  const auto recs = generate_corpus(small);
  EXPECT_EQ(recs.size(), 34u);
  EXPECT_THROW(select_subjects(recs, {5}), Error);
  EXPECT_THROW(split_subjects({0, 1}, 2, 1), Error);
  small.repetitions = 0;
  EXPECT_THROW(generate_corpus(small), Error);
}

TEST(Classifier, ZeroNetGivesUniformProbabilities) {
  GestureClassifier net;
  net.zero_init();
  net.mark_trained();
  const auto c = classify(net, GestureRaster{});
  for (double p : c.probabilities) EXPECT_NEAR(p, 1.0 / 17.0, 1e-15);
}

TEST(Classifier, UntrainedNetRaisesClassificationError) {
  GestureClassifier net(1);
  try {
    classify(net, GestureRaster{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Classification);
  }
}

TEST(Classifier, ProbabilitiesSumToOne) {
  GestureClassifier net(2);
  net.mark_trained();
  const auto rasters = pattern_rasters(9, 4);
  for (const auto& c : classify_batch(net, rasters)) {
    EXPECT_NEAR(std::accumulate(c.probabilities.begin(), c.probabilities.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(c.category, find_pattern(default_catalog(), c.pattern_id).category);
  }
}

TEST(Classifier, LearnsASmallCorpus) {
  CorpusConfig cfg;
  cfg.subjects = 2;
  cfg.repetitions = 6;
  const auto recs = generate_corpus(cfg);
  const auto rasters = rasterize_records(recs, models::index_range(0, recs.size()));
  std::vector<int> labels;
  for (const auto& r : recs) labels.push_back(r.pattern_id);
  GestureClassifier net(3);
  nn::TrainingConfig tc;
  tc.epochs = 8;
  tc.batch_size = 16;
  tc.learning_rate = 1e-3;
  const auto log = train_gestures(net, rasters, labels, tc);
  EXPECT_LT(log.back().loss, log.front().loss);
  const auto out = classify_batch(net, rasters);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < out.size(); ++i) correct += out[i].pattern_id == labels[i];
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(out.size()), 0.8);
  EXPECT_THROW(train_gestures(net, rasters, std::vector<int>(rasters.size(), 18), tc), Error);
}

TEST(Classifier, SaveLoadRoundTrip) {
  GestureClassifier a(4);
  const auto path = (std::filesystem::temp_directory_path() / "gazekit_gesture.gzwt").string();
  a.save(path);
  GestureClassifier b(5);
  b.load(path);
  EXPECT_TRUE(b.trained());
  a.mark_trained();
  const auto r = pattern_rasters(3, 1);
  EXPECT_EQ(classify(a, r[0]).probabilities, classify(b, r[0]).probabilities);
  std::filesystem::remove(path);
}

TEST(Heatmap, IdenticalRastersGiveNormalizedRaster) {
  const auto r = pattern_rasters(6, 1)[0];
  const auto heat = heatmap_aggregate({r, r, r});
  const double mx = *std::max_element(r.cells.begin(), r.cells.end());
  for (std::size_t i = 0; i < r.cells.size(); ++i) EXPECT_NEAR(heat.cells[i], r.cells[i] / mx, 1e-15);
}

TEST(Heatmap, DisjointRastersAverage) {
  GestureRaster a, b;
  a(2, 3) = 1.0;
  b(20, 21) = 1.0;
  const auto mean = heatmap_mean({a, b});
  EXPECT_EQ(*std::max_element(mean.cells.begin(), mean.cells.end()), 0.5);
  EXPECT_EQ(heatmap_aggregate({a, b})(2, 3), 1.0);
  try {
    heatmap_aggregate({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parameter);
  }
}

TEST(Heatmap, LinePatternHasConcentratedHeatUnlikeCircle) {
  const double line = high_heat_fraction(heatmap_aggregate(pattern_rasters(1, 600)));
  const double circle = high_heat_fraction(heatmap_aggregate(pattern_rasters(17, 600)));
  EXPECT_GE(line, 0.30);
  EXPECT_LT(circle, line);
}
