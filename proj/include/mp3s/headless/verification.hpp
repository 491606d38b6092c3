/* Copyright 2026 The mp3s-eval Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// AX verification: trial scoring with DTW-aligned similarity and the
// equal error rate with its threshold.

#ifndef MP3S_HEADLESS_VERIFICATION_HPP_
#define MP3S_HEADLESS_VERIFICATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mp3s/detail/format.hpp"
#include "mp3s/detail/parallel.hpp"
#include "mp3s/error.hpp"
#include "mp3s/headless/similarity.hpp"
#include "mp3s/layer_agg.hpp"
#include "mp3s/repr_store.hpp"

namespace mp3s {

struct Trial {
  std::string enroll;
  std::string test;
  bool same_source = false;
  std::size_t source_line = 0;

  bool operator==(const Trial& o) const {
    return enroll == o.enroll && test == o.test && same_source == o.same_source;
  }
};

struct ScoredTrial {
  Trial trial;
  double score = 0.0;
};

struct ScoredTrials {
  std::vector<ScoredTrial> scores;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

// VoxCeleb-style trial list: "<0|1> <enroll_utt> <test_utt>" per line.
inline std::vector<Trial> parse_trials(std::istream& in) {
  std::vector<Trial> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = detail::split_ws(line);
    if (f.empty() || f[0][0] == '#') continue;
    if (f.size() != 3 || (f[0] != "0" && f[0] != "1")) {
      throw DataError("trial file line " + std::to_string(lineno) +
                      ": expected '<0|1> <enroll> <test>'");
    }
    if (f[1] == f[2]) {
      throw DataError("trial file line " + std::to_string(lineno) +
                      ": enroll and test are the same utterance '" + f[1] + "'");
    }
    out.push_back(Trial{f[1], f[2], f[0] == "1", lineno});
  }
  return out;
}

inline std::vector<Trial> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trial file '" + path.string() + "'");
  return parse_trials(in);
}

namespace detail {

// Trial lists often carry audio paths; fall back to the id without a
// trailing audio extension.
inline const UttRecord* resolve_utt(const ReprArchive& archive, const std::string& id) {
  if (const auto* r = archive.find(id)) return r;
  for (const char* ext : {".wav", ".flac"}) {
    const std::string e(ext);
    if (id.size() > e.size() && id.compare(id.size() - e.size(), e.size(), e) == 0) {
      if (const auto* r = archive.find(id.substr(0, id.size() - e.size()))) return r;
    }
  }
  return nullptr;
}

}  // namespace detail

// Score = path_avg_similarity of the two layer-aggregated utterances.
inline ScoredTrials score_trials(const ReprArchive& archive, const std::vector<Trial>& trials,
                                 const LayerWeights& w, std::size_t workers = 1) {
  if (w.size() != archive.meta().num_layers) {
    throw ArgumentError("score_trials: " + std::to_string(w.size()) +
                        " layer weights for an archive with " +
                        std::to_string(archive.meta().num_layers) + " layers");
  }
  std::map<const UttRecord*, std::size_t> slot;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(trials.size());
  std::vector<const UttRecord*> utts;
  auto intern = [&](const std::string& id, const Trial& t) {
    const auto* r = detail::resolve_utt(archive, id);
    if (!r) {
      throw DataError((t.source_line ? "trial at line " + std::to_string(t.source_line)
                                     : std::string("trial")) +
                      ": unknown utterance '" + id + "'");
    }
    auto [it, inserted] = slot.emplace(r, utts.size());
    if (inserted) utts.push_back(r);
    return it->second;
  };
  for (const auto& t : trials) pairs.emplace_back(intern(t.enroll, t), intern(t.test, t));

  std::vector<ReprMatrix> agg(utts.size());
  detail::parallel_for(utts.size(), workers,
                       [&](std::size_t k) { agg[k] = aggregate(utts[k]->stack, w); });

  ScoredTrials out;
  out.scores.resize(trials.size());
  detail::parallel_for(trials.size(), workers, [&](std::size_t k) {
    out.scores[k] = ScoredTrial{
        trials[k], path_avg_similarity(agg[pairs[k].first].view(), agg[pairs[k].second].view())};
  });
  return out;
}

// Candidate thresholds are the midpoints between consecutive distinct
// scores (the single score itself when all scores are equal). At threshold
// tau, FAR = fraction of negatives scoring >= tau and FRR = fraction of
// positives scoring < tau. The operating point minimizing |FAR - FRR| is
// chosen (lowest tau on ties) and EER = (FAR + FRR) / 2 there.
inline EerResult compute_eer(const std::vector<double>& positives,
                             const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) {
    throw DataError("compute_eer: need at least one positive and one negative trial (got " +
                    std::to_string(positives.size()) + " and " +
                    std::to_string(negatives.size()) + ")");
  }
  std::vector<std::pair<double, bool>> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.emplace_back(s, true);
  for (double s : negatives) all.emplace_back(s, false);
  for (const auto& [s, _] : all) {
    if (!std::isfinite(s)) throw DataError("compute_eer: non-finite score");
  }
  std::sort(all.begin(), all.end());

  const auto P = static_cast<std::int64_t>(positives.size());
  const auto N = static_cast<std::int64_t>(negatives.size());
  auto result_for = [&](std::int64_t fa, std::int64_t fr, double tau) {
    const double far = static_cast<double>(fa) / static_cast<double>(N);
    const double frr = static_cast<double>(fr) / static_cast<double>(P);
    return EerResult{(far + frr) / 2.0, tau, far, frr};
  };

  // Cumulative counts of scores <= the current distinct value.
  std::int64_t pos_le = 0, neg_le = 0;
  std::int64_t best_gap = -1;
  EerResult best{};
  std::size_t k = 0;
  while (k < all.size()) {
    const double value = all[k].first;
    while (k < all.size() && all[k].first == value) {
      (all[k].second ? pos_le : neg_le) += 1;
      ++k;
    }
    if (k == all.size()) break;
    const double tau = value + (all[k].first - value) / 2.0;
    const std::int64_t fa = N - neg_le;
    const std::int64_t fr = pos_le;
    const std::int64_t gap = std::abs(fa * P - fr * N);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best = result_for(fa, fr, tau);
    }
  }
  if (best_gap < 0) best = result_for(N, 0, all.front().first);
  return best;
}

inline EerResult compute_eer(const ScoredTrials& scored) {
  std::vector<double> pos, neg;
  for (const auto& s : scored.scores) (s.trial.same_source ? pos : neg).push_back(s.score);
  return compute_eer(pos, neg);
}

}  // namespace mp3s

#endif  // MP3S_HEADLESS_VERIFICATION_HPP_
