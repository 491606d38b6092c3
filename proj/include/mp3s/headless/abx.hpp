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

// ABX discriminability: triplet mining over labeled segments and the
// triplet error rate under DTW-aligned cosine similarity.

#ifndef MP3S_HEADLESS_ABX_HPP_
#define MP3S_HEADLESS_ABX_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mp3s/detail/format.hpp"
#include "mp3s/detail/parallel.hpp"
#include "mp3s/detail/rng.hpp"
#include "mp3s/error.hpp"
#include "mp3s/headless/similarity.hpp"
#include "mp3s/layer_agg.hpp"
#include "mp3s/repr_store.hpp"

namespace mp3s {

struct SegmentRef {
  std::string utt_id;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const SegmentRef&) const = default;
};

// X shares label_ax with A; B carries label_b != label_ax.
struct Triplet {
  SegmentRef a, b, x;
  std::string label_ax;
  std::string label_b;
  std::size_t source_line = 0;  // 1-based line in the file it was read from, 0 if mined

  bool operator==(const Triplet& o) const {
    return std::tie(a, b, x, label_ax, label_b) ==
           std::tie(o.a, o.b, o.x, o.label_ax, o.label_b);
  }
};

struct MiningConfig {
  // Maximum triplets kept per (label_ax, label_b) pair; 0 keeps all.
  std::size_t per_label_cap = 0;
  bool within_speaker = false;
  // Overall cap applied after the per-pair cap; 0 keeps all.
  std::size_t max_triplets = 0;

  bool operator==(const MiningConfig&) const = default;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  std::uint64_t mining_seed = 0;
  MiningConfig config;
};

namespace detail {

struct LabeledSegment {
  SegmentRef ref;
  std::string label;
  std::optional<std::string> speaker;
};

// "l-c-r" labels: context (l, r) and center c.
inline std::optional<std::vector<std::string>> split_context_label(const std::string& label) {
  auto parts = split(label, '-');
  if (parts.size() != 3 || parts[0].empty() || parts[1].empty() || parts[2].empty()) {
    return std::nullopt;
  }
  return parts;
}

inline bool is_valid_b(const std::string& label_ax, const std::string& label_b) {
  if (label_ax == label_b) return false;
  const auto ax = split_context_label(label_ax);
  if (!ax) return true;
  const auto b = split_context_label(label_b);
  return b && (*b)[0] == (*ax)[0] && (*b)[2] == (*ax)[2] && (*b)[1] != (*ax)[1];
}

}  // namespace detail

// Candidate triplets are every (A, X, B) with A != X sharing a label and B
// a valid contrast for that label (same context, different center for
// "l-c-r" labels; any other label otherwise). Per label pair, up to
// per_label_cap candidates are drawn uniformly without replacement, then
// max_triplets overall. Output order is canonical, so the result depends
// only on (manifest, config, seed).
inline TripletSet mine_triplets(const Manifest& manifest, const MiningConfig& config,
                                std::uint64_t seed) {
  std::vector<detail::LabeledSegment> segs;
  for (const auto& r : manifest.records) {
    for (const auto& s : r.segments) {
      segs.push_back({{r.utt_id, s.start, s.end}, s.label, r.speaker});
    }
  }
  std::sort(segs.begin(), segs.end(), [](const auto& x, const auto& y) {
    return std::tie(x.label, x.ref) < std::tie(y.label, y.ref);
  });

  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t k = 0; k < segs.size(); ++k) by_label[segs[k].label].push_back(k);
  if (by_label.size() < 2) {
    throw DataError("mine_triplets: need at least two distinct segment labels, found " +
                    std::to_string(by_label.size()));
  }

  auto same_speaker = [&](std::size_t p, std::size_t q) {
    return segs[p].speaker && segs[q].speaker && *segs[p].speaker == *segs[q].speaker;
  };

  struct Candidate {
    std::uint32_t a, b, x;
  };
  detail::SeededRng rng(seed);
  std::vector<Candidate> kept;
  for (const auto& [label_ax, ax_idx] : by_label) {
    if (ax_idx.size() < 2) continue;
    for (const auto& [label_b, b_idx] : by_label) {
      if (!detail::is_valid_b(label_ax, label_b)) continue;
      std::vector<Candidate> pool;
      for (auto a : ax_idx) {
        for (auto x : ax_idx) {
          if (a == x || segs[a].ref == segs[x].ref) continue;
          if (config.within_speaker && !same_speaker(a, x)) continue;
          for (auto b : b_idx) {
            if (config.within_speaker && !same_speaker(a, b)) continue;
            pool.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                            static_cast<std::uint32_t>(x)});
          }
        }
      }
      if (config.per_label_cap && pool.size() > config.per_label_cap) {
        rng.shuffle(pool);
        pool.resize(config.per_label_cap);
      }
      kept.insert(kept.end(), pool.begin(), pool.end());
    }
  }
  if (config.max_triplets && kept.size() > config.max_triplets) {
    rng.shuffle(kept);
    kept.resize(config.max_triplets);
  }
  if (kept.empty()) {
    throw DataError("mine_triplets: no triplet can be constructed from the labeled segments" +
                    std::string(config.within_speaker ? " under the within-speaker constraint"
                                                      : ""));
  }
  auto key = [&](const Candidate& c) {
    return std::tie(segs[c.a].label, segs[c.b].label, segs[c.a].ref, segs[c.x].ref,
                    segs[c.b].ref);
  };
  std::sort(kept.begin(), kept.end(),
            [&](const Candidate& p, const Candidate& q) { return key(p) < key(q); });

  TripletSet out{{}, seed, config};
  out.triplets.reserve(kept.size());
  for (const auto& c : kept) {
    out.triplets.push_back(
        Triplet{segs[c.a].ref, segs[c.b].ref, segs[c.x].ref, segs[c.a].label, segs[c.b].label});
  }
  return out;
}

// ---------------------------------------------------------------------------
// TSV: a_utt a_start a_end b_utt b_start b_end x_utt x_start x_end label_ax label_b

inline std::string triplets_to_tsv(const TripletSet& set) {
  std::ostringstream out;
  out << "# a_utt\ta_start\ta_end\tb_utt\tb_start\tb_end\tx_utt\tx_start\tx_end\tlabel_ax\t"
         "label_b\n";
  for (const auto& t : set.triplets) {
    out << t.a.utt_id << '\t' << t.a.start << '\t' << t.a.end << '\t' << t.b.utt_id << '\t'
        << t.b.start << '\t' << t.b.end << '\t' << t.x.utt_id << '\t' << t.x.start << '\t'
        << t.x.end << '\t' << t.label_ax << '\t' << t.label_b << '\n';
  }
  return out.str();
}

inline std::vector<Triplet> parse_triplets_tsv(std::istream& in) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  auto to_index = [&](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty() || s[0] == '-') {
      throw DataError("triplet file line " + std::to_string(lineno) + ": bad frame index '" +
                      s + "'");
    }
    return static_cast<std::size_t>(v);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto f = detail::split(trimmed, '\t');
    if (f.size() == 1) f = detail::split_ws(trimmed);
    if (f.size() != 11) {
      throw DataError("triplet file line " + std::to_string(lineno) + ": expected 11 fields, got " +
                      std::to_string(f.size()));
    }
    Triplet t;
    t.a = {f[0], to_index(f[1]), to_index(f[2])};
    t.b = {f[3], to_index(f[4]), to_index(f[5])};
    t.x = {f[6], to_index(f[7]), to_index(f[8])};
    t.label_ax = f[9];
    t.label_b = f[10];
    t.source_line = lineno;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<Triplet> read_triplets_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triplet file '" + path.string() + "'");
  return parse_triplets_tsv(in);
}

// ---------------------------------------------------------------------------
// Scoring

namespace detail {

inline std::string triplet_where(const Triplet& t, std::size_t index) {
  return t.source_line ? "triplet at line " + std::to_string(t.source_line)
                       : "triplet #" + std::to_string(index);
}

inline void check_ref(const ReprArchive& archive, const SegmentRef& ref, const Triplet& t,
                      std::size_t index, const char* role) {
  const auto* r = archive.find(ref.utt_id);
  if (!r) {
    throw DataError(triplet_where(t, index) + ": " + role + " references unknown utterance '" +
                    ref.utt_id + "'");
  }
  if (!(ref.start < ref.end && ref.end <= r->stack.frames())) {
    throw DataError(triplet_where(t, index) + ": " + role + " span [" +
                    std::to_string(ref.start) + ", " + std::to_string(ref.end) +
                    ") out of range for '" + ref.utt_id + "' (" +
                    std::to_string(r->stack.frames()) + " frames)");
  }
}

inline MatrixView slice(const ReprMatrix& m, std::size_t start, std::size_t end) {
  return MatrixView(m.data().subspan(start * m.dim(), (end - start) * m.dim()), end - start,
                    m.dim());
}

}  // namespace detail

// Per-triplet outcome: 1 if S(X,B) > S(X,A), 0.5 on equality, 0 otherwise.
// Each referenced utterance is layer-aggregated once; frame-wise
// aggregation commutes with slicing.
inline std::vector<double> abx_scores(const ReprArchive& archive,
                                      const std::vector<Triplet>& triplets,
                                      const LayerWeights& w, std::size_t workers = 1) {
  if (w.size() != archive.meta().num_layers) {
    throw ArgumentError("abx: " + std::to_string(w.size()) + " layer weights for an archive with " +
                        std::to_string(archive.meta().num_layers) + " layers");
  }
  std::map<std::string, std::size_t> slot;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    detail::check_ref(archive, t.a, t, k, "A");
    detail::check_ref(archive, t.b, t, k, "B");
    detail::check_ref(archive, t.x, t, k, "X");
    for (const auto* ref : {&t.a, &t.b, &t.x}) slot.emplace(ref->utt_id, 0);
  }
  std::vector<const UttRecord*> utts;
  for (auto& [id, s] : slot) {
    s = utts.size();
    utts.push_back(&archive.at(id));
  }
  std::vector<ReprMatrix> agg(utts.size());
  detail::parallel_for(utts.size(), workers,
                       [&](std::size_t k) { agg[k] = aggregate(utts[k]->stack, w); });

  std::vector<double> scores(triplets.size());
  detail::parallel_for(triplets.size(), workers, [&](std::size_t k) {
    const auto& t = triplets[k];
    auto view = [&](const SegmentRef& ref) {
      return detail::slice(agg[slot.at(ref.utt_id)], ref.start, ref.end);
    };
    const auto x = view(t.x);
    const double sxa = path_avg_similarity(x, view(t.a));
    const double sxb = path_avg_similarity(x, view(t.b));
    scores[k] = sxb > sxa ? 1.0 : (sxb == sxa ? 0.5 : 0.0);
  });
  return scores;
}

inline double abx_error(const ReprArchive& archive, const std::vector<Triplet>& triplets,
                        const LayerWeights& w, std::size_t workers = 1) {
  if (triplets.empty()) throw DataError("abx: empty triplet set");
  const auto scores = abx_scores(archive, triplets, w, workers);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

inline double abx_error(const ReprArchive& archive, const TripletSet& set, const LayerWeights& w,
                        std::size_t workers = 1) {
  return abx_error(archive, set.triplets, w, workers);
}

}  // namespace mp3s

#endif  // MP3S_HEADLESS_ABX_HPP_
