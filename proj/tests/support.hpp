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

// Synthetic archives and helpers shared by the test binaries.

#ifndef MP3S_TESTS_SUPPORT_HPP_
#define MP3S_TESTS_SUPPORT_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mp3s/repr_store.hpp"

#ifndef MP3S_SOURCE_DIR
#define MP3S_SOURCE_DIR "."
#endif

namespace mp3s::testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(MP3S_SOURCE_DIR) / rel;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mp3s_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Box-Muller on raw engine bits so draws do not depend on the library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }

  double normal() {
    if (spare_) {
      spare_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * std::numbers::pi * u2);
    spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  bool spare_ = false;
  double cached_ = 0.0;
};

inline ReprMatrix random_matrix(Rng& rng, std::size_t frames, std::size_t dim) {
  std::vector<float> data(frames * dim);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  return ReprMatrix(frames, dim, std::move(data));
}

inline ReprStack random_stack(Rng& rng, std::size_t layers, std::size_t frames, std::size_t dim) {
  std::vector<ReprMatrix> ls;
  for (std::size_t l = 0; l < layers; ++l) ls.push_back(random_matrix(rng, frames, dim));
  return ReprStack(std::move(ls));
}

// Utterances with two structured segments "x-a-y" then "x-b-y". Frames of
// label a are N(+sep/2 e0, I), label b N(-sep/2 e0, I) in every layer.
inline ReprArchive two_cluster_archive(double separation, std::uint64_t seed,
                                       std::size_t num_utts = 12, std::size_t seg_frames = 4,
                                       std::size_t dim = 4, std::size_t layers = 2) {
  Rng rng(seed);
  ReprArchive archive(ArchiveMeta{"synthetic", layers, dim, 50.0});
  for (std::size_t u = 0; u < num_utts; ++u) {
    std::vector<ReprMatrix> ls;
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<float> data(2 * seg_frames * dim);
      for (std::size_t t = 0; t < 2 * seg_frames; ++t) {
        const double mu = (t < seg_frames ? 0.5 : -0.5) * separation;
        for (std::size_t d = 0; d < dim; ++d) {
          data[t * dim + d] = static_cast<float>(rng.normal() + (d == 0 ? mu : 0.0));
        }
      }
      ls.emplace_back(2 * seg_frames, dim, std::move(data));
    }
    UttRecord r;
    r.utt_id = "utt" + std::to_string(100 + u);
    r.stack = ReprStack(std::move(ls));
    r.speaker = "spk" + std::to_string(u % 3);
    r.segments = {{0, seg_frames, "x-a-y"}, {seg_frames, 2 * seg_frames, "x-b-y"}};
    archive.add(std::move(r));
  }
  return archive;
}

// Labeled utterances for probe training. Class c has frames
// N(mu_c, I) in `signal_layer` where mu_c = +-margin along e0; every other
// layer is pure N(0, I) noise.
inline ReprArchive probe_archive(std::size_t per_class, std::size_t layers, std::size_t dim,
                                 std::size_t signal_layer, double margin, std::uint64_t seed,
                                 const std::string& prefix, std::size_t frames = 5,
                                 double noise = 1.0) {
  Rng rng(seed);
  ReprArchive archive(ArchiveMeta{"synthetic", layers, dim, 50.0});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<ReprMatrix> ls;
      for (std::size_t l = 0; l < layers; ++l) {
        std::vector<float> data(frames * dim);
        for (std::size_t t = 0; t < frames; ++t) {
          for (std::size_t d = 0; d < dim; ++d) {
            double v = noise * rng.normal();
            if (l == signal_layer && d == 0) v += c == 0 ? margin : -margin;
            data[t * dim + d] = static_cast<float>(v);
          }
        }
        ls.emplace_back(frames, dim, std::move(data));
      }
      UttRecord r;
      r.utt_id = prefix + "_c" + std::to_string(c) + "_" + std::to_string(i);
      r.stack = ReprStack(std::move(ls));
      r.class_label = "class" + std::to_string(c);
      archive.add(std::move(r));
    }
  }
  return archive;
}

}  // namespace mp3s::testing

#endif  // MP3S_TESTS_SUPPORT_HPP_
