#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "gazekit/gesture/heatmap.hpp"
#include "gazekit/gesture/synth.hpp"

namespace gazekit::gesture {

struct GestureRecord {
  int pattern_id = 0;
  int category = 0;
  int subject = 0;
  GazeTrajectory trajectory;
};

struct CorpusConfig {
  int subjects = 15;
  int repetitions = 40;  // per subject and pattern
  bool stress = false;
  StressModel stress_model;
  std::uint64_t seed = 0;

  void validate() const {
    require(subjects >= 1, ErrorKind::Parameter, "corpus needs at least one subject");
    require(repetitions >= 1, ErrorKind::Parameter, "corpus needs at least one repetition");
  }
};

/// Every subject draws every pattern `repetitions` times. Records are ordered
/// by subject, then pattern, then repetition; each trajectory has its own seed
/// so any record can be regenerated alone.
inline std::vector<GestureRecord> generate_corpus(const CorpusConfig& cfg, const Catalog& catalog = default_catalog()) {
  cfg.validate();
  std::vector<GestureRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.subjects) * catalog.size() * static_cast<std::size_t>(cfg.repetitions));
  SynthOptions opt;
  opt.stress = cfg.stress;
  opt.stress_model = cfg.stress_model;
  for (int s = 0; s < cfg.subjects; ++s) {
    const SubjectStyle style = subject_style(cfg.seed, s);
    const std::uint64_t subject_seed = phantom::derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
    for (const auto& tpl : catalog)
      for (int r = 0; r < cfg.repetitions; ++r) {
        const auto k = static_cast<std::uint64_t>(tpl.id) * 100000u + static_cast<std::uint64_t>(r);
        out.push_back({tpl.id, tpl.category, s, synthesize_gesture(tpl, phantom::derive_seed(subject_seed, k), style, opt)});
      }
  }
  return out;
}

/// Subject-disjoint split: a seeded shuffle of subject ids, the first
/// `train_subjects` go to training.
struct SubjectSplit {
  std::vector<int> train;
  std::vector<int> test;
};

inline SubjectSplit split_subjects(const std::vector<int>& subject_ids, int train_subjects, std::uint64_t seed) {
  std::vector<int> ids(subject_ids);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  require(train_subjects >= 1 && static_cast<std::size_t>(train_subjects) < ids.size(), ErrorKind::Configuration,
          "split needs 1 <= train subjects < " + std::to_string(ids.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  SubjectSplit s;
  s.train.assign(ids.begin(), ids.begin() + train_subjects);
  s.test.assign(ids.begin() + train_subjects, ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline std::vector<int> subjects_of(const std::vector<GestureRecord>& records) {
  std::set<int> s;
  for (const auto& r : records) s.insert(r.subject);
  return {s.begin(), s.end()};
}

/// Record indices whose subject is in `subjects`; configuration error when a
/// listed subject has no records.
inline std::vector<std::size_t> select_subjects(const std::vector<GestureRecord>& records,
                                                const std::vector<int>& subjects) {
  const auto present = subjects_of(records);
  for (int s : subjects)
    require(std::binary_search(present.begin(), present.end(), s), ErrorKind::Configuration,
            "split references absent subject " + std::to_string(s));
  const std::set<int> want(subjects.begin(), subjects.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (want.count(records[i].subject)) idx.push_back(i);
  return idx;
}

inline std::vector<GestureRaster> rasterize_records(const std::vector<GestureRecord>& records,
                                                    const std::vector<std::size_t>& idx) {
  std::vector<GestureRaster> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(rasterize(records[i].trajectory));
  return out;
}

}  // namespace gazekit::gesture
