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

// Frame cosine similarity and DTW-aligned sequence similarity.

#ifndef MP3S_HEADLESS_SIMILARITY_HPP_
#define MP3S_HEADLESS_SIMILARITY_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "mp3s/error.hpp"
#include "mp3s/repr_store.hpp"

namespace mp3s {

// Cosine of two frames, clamped to [-1, 1]. Zero if either norm is zero.
inline double frame_cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("frame_cosine: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a[k], y = b[k];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Path cells are 0-based (i into A, j into B), from (0, 0) to
// (T_A - 1, T_B - 1).
struct Alignment {
  std::vector<std::pair<std::size_t, std::size_t>> path;
  double accumulated_cost = 0.0;
};

// Minimizes the summed frame distance 1 - cos(A_i, B_j) over monotone paths
// with steps (1,0), (0,1), (1,1). Equal-cost predecessors are ranked by
// path length (shorter first), then diagonal, (1,0), (0,1). The length rule
// keeps path_avg_similarity symmetric: along any path the mean cosine is
// 1 - cost / length, so every shortest optimal path gives the same value
// whichever sequence comes first.
inline Alignment dtw_align(const MatrixView& a, const MatrixView& b) {
  const std::size_t n = a.frames(), m = b.frames();
  if (n == 0 || m == 0) throw ArgumentError("dtw_align: empty sequence");
  if (a.dim() != b.dim()) throw ArgumentError("dtw_align: dimension mismatch");

  enum Step : unsigned char { kStart, kDiag, kUp, kLeft };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(n * m, kInf);
  std::vector<std::size_t> len(n * m, 0);
  std::vector<Step> from(n * m, kStart);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t c = i * m + j;
      double best_cost = 0.0;
      std::size_t best_len = 0;
      Step best = kStart;
      auto consider = [&](std::size_t p, Step s) {
        if (best == kStart || cost[p] < best_cost || (cost[p] == best_cost && len[p] < best_len)) {
          best_cost = cost[p];
          best_len = len[p];
          best = s;
        }
      };
      if (i > 0 && j > 0) consider(c - m - 1, kDiag);
      if (i > 0) consider(c - m, kUp);
      if (j > 0) consider(c - 1, kLeft);
      cost[c] = best_cost + (1.0 - frame_cosine(a.frame(i), b.frame(j)));
      len[c] = best_len + 1;
      from[c] = best;
    }
  }

  Alignment out;
  out.accumulated_cost = cost[n * m - 1];
  std::size_t i = n - 1, j = m - 1;
  out.path.emplace_back(i, j);
  while (from[i * m + j] != kStart) {
    switch (from[i * m + j]) {
      case kDiag: --i, --j; break;
      case kUp: --i; break;
      default: --j; break;
    }
    out.path.emplace_back(i, j);
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

// Mean frame cosine along the optimal DTW path, normalized by path length.
inline double path_avg_similarity(const MatrixView& a, const MatrixView& b) {
  const Alignment al = dtw_align(a, b);
  double sum = 0.0;
  for (const auto& [i, j] : al.path) sum += frame_cosine(a.frame(i), b.frame(j));
  return sum / static_cast<double>(al.path.size());
}

}  // namespace mp3s

#endif  // MP3S_HEADLESS_SIMILARITY_HPP_
