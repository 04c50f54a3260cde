#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gazekit/calibration/homography.hpp"
#include "gazekit/gesture/classifier.hpp"
#include "gazekit/gesture/corpus.hpp"
#include "gazekit/harness/io.hpp"
#include "gazekit/harness/report.hpp"
#include "gazekit/harness/settings.hpp"
#include "gazekit/models/gaze_training.hpp"
#include "gazekit/models/model_io.hpp"
#include "gazekit/phantom/sampling.hpp"

namespace gazekit::harness {

using geometry::Vec2;

/// A CLI verb: its settings and the function that runs it.
struct Command {
  std::string name;
  std::string description;
  std::vector<KeySpec> keys;
  std::function<ExperimentReport(const Settings&)> run;
};

inline std::vector<KeySpec> global_keys() {
  return {{"seed", "0", "master random seed"}, {"out", "out", "output directory"}};
}

inline std::vector<KeySpec> with_globals(std::vector<KeySpec> keys) {
  auto g = global_keys();
  keys.insert(keys.begin(), g.begin(), g.end());
  return keys;
}

inline ExperimentReport start_report(const std::string& experiment, const Settings& s) {
  ExperimentReport r;
  r.experiment = experiment;
  r.config = s.snapshot();
  r.config["desk"] = s.desk();
  return r;
}

inline fs::path out_dir(const Settings& s) {
  const fs::path d = s.str("out");
  fs::create_directories(d);
  return d;
}

// ------------------------------------------------------------- shared pieces

inline std::pair<double, double> parse_range(const Settings& s, const std::string& key) {
  const auto v = s.list(key);
  require(v.size() == 2, ErrorKind::Configuration, "setting '" + key + "' needs LO,HI");
  try {
    return {std::stod(v[0]), std::stod(v[1])};
  } catch (const std::logic_error&) {
    fail(ErrorKind::Configuration, "setting '" + key + "' needs two numbers");
  }
}

inline phantom::GazeRange gaze_range(const Settings& s) {
  phantom::GazeRange r;
  std::tie(r.yaw_min, r.yaw_max) = parse_range(s, "yaw_range");
  std::tie(r.pitch_min, r.pitch_max) = parse_range(s, "pitch_range");
  r.validate();
  return r;
}

/// `count` labelled renders; gaze draws and per-sample appearance come from
/// independent streams of `seed`.
inline std::vector<phantom::EyeSample> render_samples(std::size_t count, const phantom::PhantomConfig& cfg,
                                                      const phantom::GazeRange& range, std::uint64_t seed) {
  phantom::GazeSampler sampler(range, phantom::derive_seed(seed, 0));
  std::vector<phantom::EyeSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(phantom::generate_sample(sampler.next(), cfg, phantom::derive_seed(seed, i + 1)));
  return out;
}

inline std::array<std::size_t, 4> kernels_from(const Settings& s, models::GazeArch arch) {
  const auto div = s.integer("width_divisor");
  require(div >= 1, ErrorKind::Configuration, "width_divisor must be >= 1");
  std::array<std::size_t, 4> k = arch == models::GazeArch::UEGazeNet ? std::array<std::size_t, 4>{32, 64, 128, 256}
                                                                      : std::array<std::size_t, 4>{24, 24, 48, 48};
  if (s.has("kernels") && s.str("kernels") != "auto") {
    const auto v = s.integers("kernels");
    require(v.size() == 4, ErrorKind::Configuration, "kernels needs 4 values");
    for (std::size_t i = 0; i < 4; ++i) {
      require(v[i] >= 1, ErrorKind::Configuration, "kernel counts must be >= 1");
      k[i] = static_cast<std::size_t>(v[i]);
    }
    return k;
  }
  for (auto& x : k) x = std::max<std::size_t>(1, x / static_cast<std::size_t>(div));
  return k;
}

inline models::GazeModelSpec model_spec(models::GazeArch arch, std::array<std::size_t, 4> kernels, std::size_t w,
                                        std::size_t h) {
  models::GazeModelSpec m;
  m.arch = arch;
  m.backbone = {kernels, arch == models::GazeArch::UEGazeNet ? 2u : 1u, w, h};
  m.backbone.validate();
  return m;
}

inline nn::TrainingConfig training_config(const Settings& s) {
  nn::TrainingConfig c;
  c.learning_rate = s.real("lr");
  c.lr_decay_factor = s.real("lr_decay");
  c.decay_every_epochs = static_cast<int>(s.integer("decay_every"));
  c.epochs = static_cast<int>(s.integer("epochs"));
  c.batch_size = static_cast<int>(s.integer("batch"));
  c.seed = s.seed();
  c.validate();
  return c;
}

inline std::vector<KeySpec> training_keys() {
  return {{"epochs", "15", "training epochs"},
          {"batch", "256", "mini-batch size", "32"},
          {"lr", "0.0001", "initial Adam learning rate"},
          {"lr_decay", "0.1", "step decay factor"},
          {"decay_every", "5", "epochs between decays"}};
}

/// Gaze from any estimator over a dataset: nullopt marks an estimator failure.
using GazeEstimates = std::vector<std::optional<geometry::GazeDirection>>;

inline GazeEstimates estimate(models::GazeModel& m, const models::GazeDataset& d, std::span<const std::size_t> idx,
                              const phantom::PhantomConfig& render) {
  GazeEstimates out;
  if (m.landmark_net) {
    for (auto& p : models::predict_via_landmarks(*m.landmark_net, d, idx, render)) out.push_back(p.gaze);
  } else {
    for (auto& g : models::predict_direct(*m.direct_net, d, idx)) out.emplace_back(g);
  }
  return out;
}

struct ErrorSummary {
  double median = 0.0;
  double mean = 0.0;
  std::size_t failures = 0;
};

/// Angular errors in degrees; failures count as the error of straight-ahead gaze.
inline ErrorSummary summarize(const GazeEstimates& est, const models::GazeDataset& d,
                              std::span<const std::size_t> idx) {
  const auto fallback = geometry::yaw_pitch_to_vector({0.0, 0.0});
  std::vector<double> e;
  ErrorSummary s;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (!est[i]) ++s.failures;
    e.push_back(geometry::angular_error(est[i] ? *est[i] : fallback, d.gaze(idx[i])));
  }
  s.median = models::median(e);
  s.mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  return s;
}

inline bool strictly_decreasing(const std::vector<models::EpochRecord>& log) {
  for (std::size_t i = 1; i < log.size(); ++i)
    if (!(log[i].loss < log[i - 1].loss)) return false;
  return true;
}

inline Table loss_table(const std::vector<models::EpochRecord>& log) {
  Table t({"epoch", "lr", "loss"});
  for (const auto& r : log) t.add({std::to_string(r.epoch), fmt(r.learning_rate, 8), fmt(r.loss, 8)});
  return t;
}

inline std::vector<models::EpochRecord> train_model(models::GazeModel& m, const models::GazeDataset& d,
                                                    const nn::TrainingConfig& cfg) {
  return m.landmark_net ? models::train_uegazenet(*m.landmark_net, d, cfg)
                        : models::train_uegazenet_star(*m.direct_net, d, cfg);
}

// ------------------------------------------------------------------ gen-gaze

inline Command gen_gaze_command() {
  return {"gen-gaze",
          "render labelled phantom eye images to JSONL + image blob",
          with_globals({{"count", "100", "number of samples"},
                        {"size", "256x192", "render size WIDTHxHEIGHT"},
                        {"yaw_range", "-25,25", "yaw range in degrees"},
                        {"pitch_range", "-25,25", "pitch range in degrees"},
                        {"name", "gaze", "dataset file stem"}}),
          [](const Settings& s) {
            auto rep = start_report("gen-gaze", s);
            const auto dir = out_dir(s);
            const auto count = s.integer("count");
            require(count >= 0, ErrorKind::Configuration, "count must be >= 0");
            const auto [w, h] = s.size("size");
            const auto cfg = phantom::PhantomConfig::with_size(w, h);
            const auto samples = render_samples(static_cast<std::size_t>(count), cfg, gaze_range(s), s.seed());
            const std::string stem = s.str("name");
            {
              GazeDatasetWriter wr(dir / (stem + ".jsonl"), cfg, samples.size());
              for (const auto& x : samples) wr.add(x);
            }
            rep.artifacts = {stem + ".jsonl", stem + ".bin"};
            rep.metric("count", static_cast<double>(samples.size()));
            // Inversion spot check on up to 10 random records of the written file.
            const auto back = read_gaze_dataset(dir / (stem + ".jsonl"));
            std::mt19937_64 rng(phantom::derive_seed(s.seed(), 99));
            double worst = 0.0;
            std::size_t checked = 0;
            for (std::size_t k = 0; k < std::min<std::size_t>(10, back.samples.size()); ++k) {
              const auto i = std::uniform_int_distribution<std::size_t>(0, back.samples.size() - 1)(rng);
              const auto g = geometry::landmarks_to_gaze(back.samples[i].landmarks, back.camera);
              worst = std::max(worst, geometry::angular_error(g, back.samples[i].gaze));
              ++checked;
            }
            rep.metric("spotcheck_records", static_cast<double>(checked));
            rep.metric("spotcheck_max_error_deg", worst);
            write_report(dir, rep);
            return rep;
          }};
}

// -------------------------------------------------------------- gen-gestures

inline std::vector<KeySpec> corpus_keys() {
  return {{"subjects", "15", "synthetic subjects"},
          {"repetitions", "40", "trials per subject and pattern"},
          {"stress", "false", "apply drawing-difficulty perturbations"},
          {"catalog", "", "pattern catalog JSON (built-in when empty)"}};
}

inline gesture::Catalog catalog_from(const Settings& s) {
  return s.has("catalog") ? gesture::load_catalog(s.str("catalog")) : gesture::default_catalog();
}

inline gesture::CorpusConfig corpus_config(const Settings& s) {
  gesture::CorpusConfig c;
  c.subjects = static_cast<int>(s.integer("subjects"));
  c.repetitions = static_cast<int>(s.integer("repetitions"));
  c.stress = s.flag("stress");
  c.seed = s.seed();
  c.validate();
  return c;
}

/// Records from `data` when given, otherwise synthesized from the corpus settings.
inline std::vector<gesture::GestureRecord> gesture_records(const Settings& s) {
  if (s.has("data")) return read_gesture_dataset(s.str("data"));
  return gesture::generate_corpus(corpus_config(s), catalog_from(s));
}

inline Command gen_gestures_command() {
  return {"gen-gestures", "synthesize the gesture corpus as JSONL", with_globals(corpus_keys()),
          [](const Settings& s) {
            auto rep = start_report("gen-gestures", s);
            const auto dir = out_dir(s);
            const auto records = gesture::generate_corpus(corpus_config(s), catalog_from(s));
            write_gesture_dataset(dir / "gestures.jsonl", records);
            rep.artifacts.push_back("gestures.jsonl");
            rep.metric("count", static_cast<double>(records.size()));
            rep.metric("subjects", static_cast<double>(gesture::subjects_of(records).size()));
            write_report(dir, rep);
            return rep;
          }};
}

// ---------------------------------------------------------------- train-gaze

inline std::vector<KeySpec> gaze_model_keys() {
  return {{"arch", "uegazenet", "uegazenet | uegazenet-star"},
          {"input", "256x192", "network input size", "64x48"},
          {"kernels", "auto", "outer conv kernel counts, 4 comma-separated values, or auto"},
          {"width_divisor", "1", "divides the standard kernel counts when kernels=auto", "8"}};
}

inline Command train_gaze_command() {
  auto keys = gaze_model_keys();
  for (auto k : training_keys()) keys.push_back(k);
  for (KeySpec k : std::vector<KeySpec>{{"data", "", "gen-gaze dataset (rendered internally when empty)"},
                                        {"samples", "2000", "training samples when rendering internally"},
                                        {"holdout", "300", "held-out samples"},
                                        {"yaw_range", "-25,25", "yaw range in degrees"},
                                        {"pitch_range", "-25,25", "pitch range in degrees"}})
    keys.push_back(k);
  return {"train-gaze", "train UEGazeNet or UEGazeNet* on phantom renders", with_globals(keys),
          [](const Settings& s) {
            auto rep = start_report("train-gaze", s);
            const auto dir = out_dir(s);
            const auto arch = models::parse_arch(s.str("arch"));
            const auto [w, h] = s.size("input");
            const auto spec = model_spec(arch, kernels_from(s, arch), w, h);
            const auto cfg = training_config(s);
            const auto holdout = static_cast<std::size_t>(s.integer("holdout"));
            require(holdout >= 1, ErrorKind::Configuration, "holdout must be >= 1");

            phantom::PhantomConfig render;
            std::vector<phantom::EyeSample> train_samples, test_samples;
            if (s.has("data")) {
              auto file = read_gaze_dataset(s.str("data"));
              render = file.camera;
              require(file.samples.size() > holdout + 1, ErrorKind::Configuration,
                      "dataset too small for the requested holdout");
              test_samples.assign(file.samples.end() - static_cast<std::ptrdiff_t>(holdout), file.samples.end());
              file.samples.resize(file.samples.size() - holdout);
              train_samples = std::move(file.samples);
            } else {
              train_samples = render_samples(static_cast<std::size_t>(s.integer("samples")), render, gaze_range(s),
                                             phantom::derive_seed(s.seed(), 1));
              test_samples = render_samples(holdout, render, gaze_range(s), phantom::derive_seed(s.seed(), 2));
            }
            const auto train = models::make_gaze_dataset(train_samples, w, h, render);
            const auto test = models::make_gaze_dataset(test_samples, w, h, render);
            const auto test_idx = models::index_range(0, test.size());

            auto model = models::GazeModel::build(spec, phantom::derive_seed(s.seed(), 3));
            const auto untrained = summarize(estimate(model, test, test_idx, render), test, test_idx);
            const auto log = train_model(model, train, cfg);
            const auto trained = summarize(estimate(model, test, test_idx, render), test, test_idx);
            const auto train_idx = models::index_range(0, std::min<std::size_t>(train.size(), 200));
            const auto train_fit = summarize(estimate(model, train, train_idx, render), train, train_idx);
            const auto mean = models::mean_gaze(train, models::index_range(0, train.size()));
            const auto baseline = summarize(GazeEstimates(test.size(), mean), test, test_idx);

            models::save_gaze_model(dir / "weights.gzwt", model);
            rep.artifacts = {"weights.gzwt", "weights.gzwt.json"};
            write_table(dir, "metrics.csv", loss_table(log), rep);
            rep.extra["model"] = spec.to_json();
            rep.metric("parameter_count", static_cast<double>(model.parameter_count()));
            rep.metric("train_samples", static_cast<double>(train.size()));
            rep.metric("holdout_samples", static_cast<double>(test.size()));
            rep.metric("first_epoch_loss", log.front().loss);
            rep.metric("final_epoch_loss", log.back().loss);
            rep.metric("loss_strictly_decreasing", strictly_decreasing(log) ? 1.0 : 0.0);
            rep.metric("train_median_deg", train_fit.median);
            rep.metric("holdout_median_deg", trained.median);
            rep.metric("holdout_mean_deg", trained.mean);
            rep.metric("holdout_failures", static_cast<double>(trained.failures));
            rep.metric("untrained_median_deg", untrained.median);
            rep.metric("predict_mean_median_deg", baseline.median);
            write_report(dir, rep);
            return rep;
          }};
}

// ---------------------------------------------------------------- eval-board

/// Mean angular error per board cell for the chosen estimator.
inline Command eval_board_command() {
  return {"eval-board", "per-cell gaze error on the simulated target board",
          with_globals({{"estimator", "model", "model | untrained | oracle | bias"},
                        {"weights", "", "trained gaze weights (model and untrained estimators)"},
                        {"bias_deg", "1.0", "yaw bias of the bias estimator"},
                        {"grid", "5x5", "board cells COLSxROWS"},
                        {"repeats", "2", "renders per cell"},
                        {"board_distance_mm", "550", "eye to board distance"},
                        {"board_size_mm", "300x200", "board extent WIDTHxHEIGHT"}}),
          [](const Settings& s) {
            auto rep = start_report("eval-board", s);
            const auto dir = out_dir(s);
            const auto [cols, rows] = s.size("grid");
            const auto repeats = static_cast<std::size_t>(s.integer("repeats"));
            require(repeats >= 1, ErrorKind::Configuration, "repeats must be >= 1");
            phantom::TargetBoard board;
            board.distance_mm = s.real("board_distance_mm");
            const auto [bw, bh] = s.size("board_size_mm");
            board.width_mm = static_cast<double>(bw);
            board.height_mm = static_cast<double>(bh);
            board.validate();
            const phantom::PhantomConfig render;

            // Rig calibration: commanded corner angles against the laser hits.
            const auto corners = phantom::board_corner_angles(board);
            std::array<Vec2, 4> corner_points;
            for (std::size_t i = 0; i < 4; ++i)
              corner_points[i] = phantom::board_intersection(geometry::yaw_pitch_to_vector(corners[i]), board);
            const auto h = calibration::calibrate(corners, corner_points);
            rep.extra["calibration"] = calibration::format_calibration(h);

            const auto cell_angles = phantom::board_grid_angles(board, cols, rows);
            std::vector<geometry::YawPitch> angles;
            for (const auto& a : cell_angles)
              for (std::size_t r = 0; r < repeats; ++r) angles.push_back(a);
            const auto obs = phantom::board_session(angles, board, render, s.seed());

            const std::string kind = s.str("estimator");
            GazeEstimates est;
            if (kind == "oracle" || kind == "bias") {
              const double bias = kind == "bias" ? geometry::deg2rad(s.real("bias_deg")) : 0.0;
              for (const auto& o : obs) {
                if (kind == "oracle") {
                  est.emplace_back(geometry::landmarks_to_gaze(o.sample.landmarks, render));
                } else {
                  est.emplace_back(geometry::yaw_pitch_to_vector({o.angles.yaw + bias, o.angles.pitch}));
                }
              }
            } else if (kind == "model" || kind == "untrained") {
              require(s.has("weights"), ErrorKind::Configuration, "estimator '" + kind + "' needs weights");
              auto model = models::load_gaze_model(s.str("weights"));
              if (kind == "untrained") model = models::GazeModel::build(model.spec, phantom::derive_seed(s.seed(), 3));
              std::vector<phantom::EyeSample> samples;
              for (const auto& o : obs) samples.push_back(o.sample);
              const auto d = models::make_gaze_dataset(samples, model.spec.backbone.input_width,
                                                       model.spec.backbone.input_height, render);
              const auto idx = models::index_range(0, d.size());
              est = estimate(model, d, idx, render);
            } else {
              fail(ErrorKind::Configuration, "unknown estimator '" + kind + "'");
            }

            // Estimated gaze through the calibration onto the board; error is the
            // angle at the eye between the mapped point and the laser point.
            Grid grid{"cell_mean_error_deg", rows, cols, std::vector<double>(rows * cols, 0.0)};
            std::vector<double> all;
            double mm_total = 0.0;
            std::size_t failures = 0;
            for (std::size_t i = 0; i < obs.size(); ++i) {
              const auto g = est[i] ? *est[i] : geometry::yaw_pitch_to_vector({0.0, 0.0});
              if (!est[i]) ++failures;
              const Vec2 p = calibration::gaze_to_screen(h, g);
              const geometry::Vec3 ray(p.x(), p.y(), board.distance_mm);
              const geometry::Vec3 truth(obs[i].board_point.x(), obs[i].board_point.y(), board.distance_mm);
              const double e = geometry::angular_error(ray, truth);
              all.push_back(e);
              mm_total += (p - obs[i].board_point).norm();
              grid.values[i / repeats] += e / static_cast<double>(repeats);
            }
            const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
            double var = 0.0;
            for (double e : all) var += (e - mean) * (e - mean);
            rep.metric("cells", static_cast<double>(rows * cols));
            rep.metric("observations", static_cast<double>(all.size()));
            rep.metric("mean_error_deg", mean);
            rep.metric("std_error_deg", std::sqrt(var / static_cast<double>(all.size())));
            rep.metric("max_cell_error_deg", *std::max_element(grid.values.begin(), grid.values.end()));
            rep.metric("mean_board_error_mm", mm_total / static_cast<double>(all.size()));
            rep.metric("estimator_failures", static_cast<double>(failures));
            Table t({"row", "col", "yaw_deg", "pitch_deg", "mean_error_deg"});
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c) {
                const auto& a = cell_angles[r * cols + c];
                t.add({std::to_string(r), std::to_string(c), fmt(geometry::rad2deg(a.yaw)),
                       fmt(geometry::rad2deg(a.pitch)), fmt(grid.at(r, c))});
              }
            write_table(dir, "board_errors.csv", t, rep);
            write_heat_pgm(dir, "board_errors.pgm", grid, rep, 16);
            rep.grids.push_back(std::move(grid));
            write_report(dir, rep);
            return rep;
          }};
}

// ------------------------------------------------------------ train-gestures

inline std::vector<KeySpec> split_keys() {
  return {{"data", "", "gesture JSONL (synthesized when empty)"},
          {"train_subjects", "12", "subjects used for training"},
          {"test_subjects", "", "explicit test subject ids (overrides the seeded split)"}};
}

inline gesture::SubjectSplit split_from(const Settings& s, const std::vector<gesture::GestureRecord>& records) {
  const auto present = gesture::subjects_of(records);
  if (s.has("test_subjects")) {
    gesture::SubjectSplit sp;
    for (auto v : s.integers("test_subjects")) sp.test.push_back(static_cast<int>(v));
    for (int p : present)
      if (std::find(sp.test.begin(), sp.test.end(), p) == sp.test.end()) sp.train.push_back(p);
    return sp;
  }
  return gesture::split_subjects(present, static_cast<int>(s.integer("train_subjects")),
                                 phantom::derive_seed(s.seed(), 7));
}

inline std::vector<int> labels_of(const std::vector<gesture::GestureRecord>& records,
                                  const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  for (auto i : idx) y.push_back(records[i].pattern_id);
  return y;
}

struct GestureEvaluation {
  double accuracy = 0.0;
  std::array<std::array<std::size_t, gesture::kPatternCount>, gesture::kPatternCount> confusion{};
  std::array<std::size_t, gesture::kPatternCount> counts{};
};

inline GestureEvaluation evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted) {
  GestureEvaluation e;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i] - 1), p = static_cast<std::size_t>(predicted[i] - 1);
    ++e.confusion[t][p];
    ++e.counts[t];
    ok += t == p;
  }
  e.accuracy = truth.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(truth.size());
  return e;
}

/// Accuracy tables, confusion matrix and per-class heat maps for a test set.
inline void emit_gesture_evaluation(const fs::path& dir, const gesture::Catalog& catalog,
                                    const std::vector<gesture::GestureRaster>& rasters, const std::vector<int>& truth,
                                    const std::vector<int>& predicted, ExperimentReport& rep) {
  const auto ev = evaluate_predictions(truth, predicted);
  rep.metric("test_samples", static_cast<double>(truth.size()));
  rep.metric("accuracy", ev.accuracy);

  Table per_pattern({"pattern_id", "name", "category", "count", "correct", "accuracy", "high_heat_fraction"});
  Table confusion([] {
    std::vector<std::string> h{"true\\predicted"};
    for (int k = 1; k <= gesture::kPatternCount; ++k) h.push_back(std::to_string(k));
    return h;
  }());
  std::array<std::size_t, gesture::kCategoryCount> cat_n{}, cat_ok{};
  Grid fractions{"high_heat_fraction", 1, static_cast<std::size_t>(gesture::kPatternCount),
                 std::vector<double>(gesture::kPatternCount, 0.0)};
  for (const auto& tpl : catalog) {
    const auto k = static_cast<std::size_t>(tpl.id - 1);
    std::vector<gesture::GestureRaster> mine;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (truth[i] == tpl.id) mine.push_back(rasters[i]);
    double frac = 0.0;
    if (!mine.empty()) {
      const auto heat = gesture::heatmap_aggregate(mine);
      frac = gesture::high_heat_fraction(heat);
      Grid hg{"heat_" + std::to_string(tpl.id), gesture::kRasterSize, gesture::kRasterSize,
              std::vector<double>(heat.cells.begin(), heat.cells.end())};
      write_heat_pgm(dir, "heat_" + (tpl.id < 10 ? std::string("0") : std::string()) + std::to_string(tpl.id) + ".pgm",
                     hg, rep, 8);
    }
    fractions.values[k] = frac;
    const std::size_t n = ev.counts[k], ok = ev.confusion[k][k];
    cat_n[static_cast<std::size_t>(tpl.category - 1)] += n;
    cat_ok[static_cast<std::size_t>(tpl.category - 1)] += ok;
    per_pattern.add({std::to_string(tpl.id), tpl.name, std::to_string(tpl.category), std::to_string(n),
                     std::to_string(ok), fmt(n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0),
                     fmt(frac)});
    std::vector<std::string> row{std::to_string(tpl.id)};
    for (std::size_t p = 0; p < gesture::kPatternCount; ++p) row.push_back(std::to_string(ev.confusion[k][p]));
    confusion.add(row);
    rep.metric("accuracy_pattern_" + std::to_string(tpl.id), n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0);
    rep.metric("high_heat_fraction_pattern_" + std::to_string(tpl.id), frac);
  }
  Table per_category({"category", "count", "correct", "accuracy"});
  for (std::size_t c = 0; c < gesture::kCategoryCount; ++c) {
    const double acc = cat_n[c] ? static_cast<double>(cat_ok[c]) / static_cast<double>(cat_n[c]) : 0.0;
    per_category.add({std::to_string(c + 1), std::to_string(cat_n[c]), std::to_string(cat_ok[c]), fmt(acc)});
    rep.metric("accuracy_category_" + std::to_string(c + 1), acc);
  }
  // Closed shapes against every open pattern.
  double closed_max = -1.0, open_min = 2.0;
  for (const auto& tpl : catalog) {
    const double f = fractions.values[static_cast<std::size_t>(tpl.id - 1)];
    if (tpl.closed)
      closed_max = std::max(closed_max, f);
    else
      open_min = std::min(open_min, f);
  }
  if (closed_max >= 0.0 && open_min <= 1.0) {
    rep.metric("closed_high_heat_fraction", closed_max);
    rep.metric("open_min_high_heat_fraction", open_min);
    rep.metric("closed_lowest_heat", closed_max < open_min ? 1.0 : 0.0);
  }
  write_table(dir, "per_pattern.csv", per_pattern, rep);
  write_table(dir, "per_category.csv", per_category, rep);
  write_table(dir, "confusion.csv", confusion, rep);
  rep.grids.push_back(std::move(fractions));
}

inline Command train_gestures_command() {
  auto keys = corpus_keys();
  for (auto k : split_keys()) keys.push_back(k);
  keys.push_back({"epochs", "10", "training epochs"});
  keys.push_back({"batch", "64", "mini-batch size"});
  keys.push_back({"lr", "0.001", "initial Adam learning rate"});
  keys.push_back({"lr_decay", "0.3", "step decay factor"});
  keys.push_back({"decay_every", "4", "epochs between decays"});
  return {"train-gestures", "train the gesture classifier on a subject split and evaluate it", with_globals(keys),
          [](const Settings& s) {
            auto rep = start_report("train-gestures", s);
            const auto dir = out_dir(s);
            const auto catalog = catalog_from(s);
            const auto records = gesture_records(s);
            const auto split = split_from(s, records);
            const auto tr = gesture::select_subjects(records, split.train);
            const auto te = gesture::select_subjects(records, split.test);
            const auto train_r = gesture::rasterize_records(records, tr);
            const auto test_r = gesture::rasterize_records(records, te);
            const auto train_y = labels_of(records, tr), test_y = labels_of(records, te);

            auto net = gesture::build_gt_classifier(phantom::derive_seed(s.seed(), 5));
            const auto log = gesture::train_gestures(net, train_r, train_y, training_config(s));
            net.save((dir / "classifier.gzwt").string());
            rep.artifacts.push_back("classifier.gzwt");
            write_table(dir, "metrics.csv", loss_table(log), rep);

            std::vector<int> pred;
            for (const auto& c : gesture::classify_batch(net, test_r, catalog)) pred.push_back(c.pattern_id);
            rep.metric("train_samples", static_cast<double>(tr.size()));
            rep.metric("final_epoch_loss", log.back().loss);
            rep.extra["train_subjects"] = split.train;
            rep.extra["test_subjects"] = split.test;
            emit_gesture_evaluation(dir, catalog, test_r, test_y, pred, rep);
            write_report(dir, rep);
            return rep;
          }};
}

inline Command eval_gestures_command() {
  auto keys = corpus_keys();
  for (auto k : split_keys()) keys.push_back(k);
  keys.push_back({"classifier", "model", "model | oracle"});
  keys.push_back({"weights", "", "classifier weights for the model classifier"});
  return {"eval-gestures", "accuracy, confusion matrix and heat maps on held-out subjects", with_globals(keys),
          [](const Settings& s) {
            auto rep = start_report("eval-gestures", s);
            const auto dir = out_dir(s);
            const auto catalog = catalog_from(s);
            const auto records = gesture_records(s);
            const auto split = split_from(s, records);
            const auto te = gesture::select_subjects(records, split.test);
            const auto test_r = gesture::rasterize_records(records, te);
            const auto test_y = labels_of(records, te);
            std::vector<int> pred;
            const std::string kind = s.str("classifier");
            if (kind == "oracle") {
              pred = test_y;
            } else if (kind == "model") {
              require(s.has("weights"), ErrorKind::Configuration, "model classifier needs weights");
              gesture::GestureClassifier net;
              net.load(s.str("weights"));
              for (const auto& c : gesture::classify_batch(net, test_r, catalog)) pred.push_back(c.pattern_id);
            } else {
              fail(ErrorKind::Configuration, "unknown classifier '" + kind + "'");
            }
            rep.extra["test_subjects"] = split.test;
            emit_gesture_evaluation(dir, catalog, test_r, test_y, pred, rep);
            write_report(dir, rep);
            return rep;
          }};
}

// ---------------------------------------------------------- sweep-resolution

inline Command sweep_resolution_command() {
  auto keys = training_keys();
  for (KeySpec k : std::vector<KeySpec>{
           {"sizes", "24x18,64x48,96x72", "input sizes WIDTHxHEIGHT, comma-separated", "24x18,96x72"},
           {"archs", "uegazenet,uegazenet-star", "architectures to compare"},
           {"seeds", "1", "training seeds", "1,2,3"},
           {"width_divisor", "1", "divides the standard kernel counts", "8"},
           {"samples", "2000", "training samples", "800"},
           {"holdout", "300", "held-out samples", "200"},
           {"yaw_range", "-25,25", "yaw range in degrees"},
           {"pitch_range", "-25,25", "pitch range in degrees"}})
    keys.push_back(k);
  for (auto& k : keys)
    if (k.key == "epochs") k.desk_value = "6";
  return {"sweep-resolution", "held-out error of both architectures across input sizes", with_globals(keys),
          [](const Settings& s) {
            auto rep = start_report("sweep-resolution", s);
            const auto dir = out_dir(s);
            const auto sizes = s.sizes("sizes");
            for (const auto& [w, h] : sizes)
              require(w >= 12 && h >= 8, ErrorKind::Parameter, "sizes must be at least 12x8");
            const auto seeds = s.integers("seeds");
            require(!seeds.empty(), ErrorKind::Configuration, "need at least one seed");
            std::vector<models::GazeArch> archs;
            for (const auto& a : s.list("archs")) archs.push_back(models::parse_arch(a));
            const phantom::PhantomConfig render;
            const auto cfg0 = training_config(s);
            Settings kernel_settings = s;

            Table t({"size", "arch", "seed", "parameters", "final_loss", "median_error_deg", "mean_error_deg"});
            // median[arch][seed][size]
            std::map<std::string, std::map<long long, std::vector<double>>> medians;
            for (long long seed : seeds) {
              require(seed >= 0, ErrorKind::Configuration, "seeds must be >= 0");
              const auto useed = static_cast<std::uint64_t>(seed);
              const auto train_samples = render_samples(static_cast<std::size_t>(s.integer("samples")), render,
                                                        gaze_range(s), phantom::derive_seed(useed, 1));
              const auto test_samples = render_samples(static_cast<std::size_t>(s.integer("holdout")), render,
                                                       gaze_range(s), phantom::derive_seed(useed, 2));
              for (const auto& [w, h] : sizes) {
                const auto train = models::make_gaze_dataset(train_samples, w, h, render);
                const auto test = models::make_gaze_dataset(test_samples, w, h, render);
                const auto idx = models::index_range(0, test.size());
                for (auto arch : archs) {
                  auto model = models::GazeModel::build(model_spec(arch, kernels_from(s, arch), w, h),
                                                        phantom::derive_seed(useed, 3));
                  auto cfg = cfg0;
                  cfg.seed = useed;
                  const auto log = train_model(model, train, cfg);
                  const auto e = summarize(estimate(model, test, idx, render), test, idx);
                  medians[models::to_string(arch)][seed].push_back(e.median);
                  t.add({std::to_string(w) + "x" + std::to_string(h), models::to_string(arch), std::to_string(seed),
                         std::to_string(model.parameter_count()), fmt(log.back().loss), fmt(e.median), fmt(e.mean)});
                  rep.metric("median_deg_" + models::to_string(arch) + "_" + std::to_string(w) + "x" +
                                 std::to_string(h) + "_seed" + std::to_string(seed),
                             e.median);
                }
              }
            }
            write_table(dir, "resolution_sweep.csv", t, rep);
            rep.metric("rows", static_cast<double>(t.size()));

            // Smallest vs largest size (by pixel count) for the ratio test.
            if (sizes.size() >= 2 && medians.count("uegazenet") && medians.count("uegazenet-star")) {
              std::size_t lo = 0, hi = 0;
              for (std::size_t i = 0; i < sizes.size(); ++i) {
                if (sizes[i].first * sizes[i].second < sizes[lo].first * sizes[lo].second) lo = i;
                if (sizes[i].first * sizes[i].second > sizes[hi].first * sizes[hi].second) hi = i;
              }
              std::size_t votes = 0;
              for (long long seed : seeds) {
                const auto& a = medians["uegazenet"][seed];
                const auto& b = medians["uegazenet-star"][seed];
                const double ra = a[lo] / a[hi], rb = b[lo] / b[hi];
                const bool ok = a[lo] > a[hi] && ra > rb;
                votes += ok;
                rep.metric("ratio_uegazenet_seed" + std::to_string(seed), ra);
                rep.metric("ratio_uegazenet_star_seed" + std::to_string(seed), rb);
                rep.metric("ratio_test_pass_seed" + std::to_string(seed), ok ? 1.0 : 0.0);
              }
              rep.metric("ratio_test_votes", static_cast<double>(votes));
              rep.metric("ratio_test_majority", 2 * votes > seeds.size() ? 1.0 : 0.0);
            }
            write_report(dir, rep);
            return rep;
          }};
}

// ------------------------------------------------------------- timing-report

struct UserTiming {
  std::string user;
  double batch_ms[2] = {0.0, 0.0};
  std::size_t batch_count[2] = {0, 0};
  std::size_t correct = 0;
};

/// Per-user totals of trial durations by batch, users in first-seen order.
inline std::vector<UserTiming> timing_summary(const std::vector<TimingEvent>& events) {
  std::vector<UserTiming> out;
  for (const auto& e : events) {
    auto it = std::find_if(out.begin(), out.end(), [&](const UserTiming& u) { return u.user == e.user; });
    if (it == out.end()) {
      out.push_back({e.user});
      it = out.end() - 1;
    }
    const auto b = static_cast<std::size_t>(e.batch - 1);
    it->batch_ms[b] += e.duration_ms;
    ++it->batch_count[b];
    it->correct += e.correct;
  }
  return out;
}

inline Command timing_report_command() {
  return {"timing-report", "per-user first vs second batch completion times from a session log",
          with_globals({{"log", "", "session log JSONL exported by the interaction service"}}),
          [](const Settings& s) {
            auto rep = start_report("timing-report", s);
            const auto dir = out_dir(s);
            require(s.has("log"), ErrorKind::Configuration, "timing-report needs log=<file>");
            const auto events = read_timing_log(s.str("log"));
            const auto users = timing_summary(events);
            Table t({"user", "batch1_ms", "batch2_ms", "ratio", "batch1_count", "batch2_count", "correct"});
            for (const auto& u : users) {
              const double ratio = u.batch_ms[0] > 0.0 ? u.batch_ms[1] / u.batch_ms[0] : 0.0;
              t.add({u.user, fmt(u.batch_ms[0], 3), fmt(u.batch_ms[1], 3), fmt(ratio), std::to_string(u.batch_count[0]),
                     std::to_string(u.batch_count[1]), std::to_string(u.correct)});
              rep.metric("ratio_" + u.user, ratio);
            }
            rep.metric("events", static_cast<double>(events.size()));
            rep.metric("users", static_cast<double>(users.size()));
            write_table(dir, "timing.csv", t, rep);
            write_report(dir, rep);
            return rep;
          }};
}

}  // namespace gazekit::harness
