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

// Layer weighting: softmax-normalized coefficients that collapse an L-layer
// stack into a single T x D representation, sum_i w_i * R_i.

#ifndef MP3S_LAYER_AGG_HPP_
#define MP3S_LAYER_AGG_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mp3s/error.hpp"
#include "mp3s/repr_store.hpp"

namespace mp3s {

inline constexpr double kWeightSumTolerance = 1e-6;

// Non-negative, sums to one. Index 0 is the lowest layer.
class LayerWeights {
 public:
  LayerWeights() = default;
  explicit LayerWeights(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw ArgumentError("LayerWeights: empty");
    double sum = 0.0;
    for (double x : w_) {
      if (!std::isfinite(x) || x < 0.0) {
        throw ArgumentError("LayerWeights: entries must be finite and non-negative");
      }
      sum += x;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance) {
      throw ArgumentError("LayerWeights: entries sum to " + std::to_string(sum) +
                          ", expected 1");
    }
  }

  static LayerWeights uniform(std::size_t num_layers) {
    if (num_layers == 0) throw ArgumentError("LayerWeights::uniform: zero layers");
    return LayerWeights(std::vector<double>(num_layers, 1.0 / num_layers));
  }
  static LayerWeights one_hot(std::size_t num_layers, std::size_t layer) {
    if (layer >= num_layers) throw ArgumentError("LayerWeights::one_hot: layer out of range");
    std::vector<double> w(num_layers, 0.0);
    w[layer] = 1.0;
    return LayerWeights(std::move(w));
  }

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const { return w_; }

  bool operator==(const LayerWeights&) const = default;

 private:
  std::vector<double> w_;
};

// Unconstrained per-layer logits P; weights are softmax(P).
struct LayerLogits {
  std::vector<double> p;
};

struct DecaySpec {
  double lambda = 0.2;
};

inline LayerWeights softmax_weights(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("softmax_weights: empty logits");
  for (double x : logits) {
    if (!std::isfinite(x)) throw ArgumentError("softmax_weights: non-finite logit");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(logits[i] - mx);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return LayerWeights(std::move(w));
}

inline LayerWeights softmax_weights(const LayerLogits& logits) {
  return softmax_weights(std::span<const double>(logits.p));
}

// softmax over exp(-lambda * i) for layer numbers i = 1..L, so lower
// layers receive more weight when lambda > 0.
inline LayerWeights decay_weights(std::size_t num_layers, DecaySpec spec) {
  if (num_layers == 0) throw ArgumentError("decay_weights: L must be >= 1");
  if (!(spec.lambda >= 0.0) || !std::isfinite(spec.lambda)) {
    throw ArgumentError("decay_weights: lambda must be a finite non-negative number");
  }
  std::vector<double> scores(num_layers);
  for (std::size_t i = 0; i < num_layers; ++i) {
    scores[i] = std::exp(-spec.lambda * static_cast<double>(i + 1));
  }
  return softmax_weights(std::span<const double>(scores));
}

inline ReprMatrix aggregate(const StackView& stack, const LayerWeights& w) {
  if (w.size() != stack.num_layers()) {
    throw ArgumentError("aggregate: " + std::to_string(w.size()) + " weights for " +
                        std::to_string(stack.num_layers()) + " layers");
  }
  const std::size_t n = stack.frames() * stack.dim();
  std::vector<double> acc(n, 0.0);
  for (std::size_t l = 0; l < stack.num_layers(); ++l) {
    if (w[l] == 0.0) continue;
    const auto data = stack.layer(l).data();
    for (std::size_t k = 0; k < n; ++k) acc[k] += w[l] * static_cast<double>(data[k]);
  }
  std::vector<float> out(n);
  std::transform(acc.begin(), acc.end(), out.begin(),
                 [](double x) { return static_cast<float>(x); });
  return ReprMatrix(stack.frames(), stack.dim(), std::move(out));
}

inline ReprMatrix aggregate(const ReprStack& stack, const LayerWeights& w) {
  return aggregate(stack.view(), w);
}

inline nlohmann::json weights_to_json(const LayerWeights& w) {
  return nlohmann::json(std::vector<double>(w.values().begin(), w.values().end()));
}

// Accepts a bare array or an object with a "weights" array (as embedded in
// trained probe files).
inline LayerWeights weights_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() && j.contains("weights") ? j.at("weights") : j;
  if (!arr.is_array()) throw DataError("layer weights: expected a JSON array");
  try {
    return LayerWeights(arr.get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("layer weights: ") + e.what());
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
}

}  // namespace mp3s

#endif  // MP3S_LAYER_AGG_HPP_
