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

// Time-pooled linear probe with jointly learned softmax layer weights.
//
// Model, for an utterance with layers R_1..R_L (T x D each):
//   h      = sum_l w_l * mean_t(R_l)          w = softmax(P), or frozen
//   logits = W^T h + b                         W: D x C, b: C
//   loss   = mean cross-entropy over the batch
//
// Time pooling is linear, so each utterance is reduced once to its L x D
// per-layer frame means and training never revisits the frames.

#ifndef MP3S_PROBE_HPP_
#define MP3S_PROBE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mp3s/error.hpp"
#include "mp3s/layer_agg.hpp"
#include "mp3s/repr_store.hpp"

namespace mp3s {

struct ProbeConfig {
  double learning_rate = 0.5;
  std::size_t max_epochs = 500;
  // Stop after this many epochs without a validation improvement; 0 never stops early.
  std::size_t early_stop_patience = 0;
  std::uint64_t seed = 42;
  std::optional<LayerWeights> frozen_weights;
  double weight_decay = 0.0;
};

struct PooledSample {
  std::vector<double> layer_means;  // L x D, row-major
  std::size_t label = 0;
};

struct ProbeDataset {
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::vector<std::string> classes;
  std::vector<PooledSample> samples;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainedProbe {
  std::vector<std::string> classes;
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::vector<double> classifier;  // D x C, row-major
  std::vector<double> bias;        // C
  LayerLogits layer_logits;        // unused when frozen_weights is set
  std::optional<LayerWeights> frozen_weights;
  std::vector<EpochLoss> history;
  std::size_t best_epoch = 0;
  ProbeConfig config;

  std::size_t num_classes() const { return classes.size(); }

  LayerWeights layer_weights() const {
    return frozen_weights ? *frozen_weights : softmax_weights(layer_logits);
  }

  // Zero classifier, zero bias, uniform layer weights.
  static TrainedProbe initial(std::vector<std::string> classes, std::size_t num_layers,
                              std::size_t dim, std::optional<LayerWeights> frozen = {}) {
    TrainedProbe p;
    p.num_layers = num_layers;
    p.dim = dim;
    p.classifier.assign(dim * classes.size(), 0.0);
    p.bias.assign(classes.size(), 0.0);
    p.layer_logits.p.assign(num_layers, 0.0);
    p.frozen_weights = std::move(frozen);
    p.classes = std::move(classes);
    return p;
  }
};

struct ProbeGradients {
  std::vector<double> classifier;
  std::vector<double> bias;
  std::optional<std::vector<double>> layer_logits;  // absent with frozen weights
  double loss = 0.0;
};

// Reduces every record to its per-layer frame means. With empty `classes`
// the class list is the sorted set of labels present; otherwise labels
// must belong to `classes`.
inline ProbeDataset pool_archive(const ReprArchive& archive,
                                 std::vector<std::string> classes = {}) {
  if (classes.empty()) {
    std::map<std::string, int> seen;
    for (const auto& [id, r] : archive.records()) {
      if (r.class_label) seen.emplace(*r.class_label, 0);
    }
    for (const auto& [label, _] : seen) classes.push_back(label);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(classes[c], c);

  ProbeDataset ds;
  ds.num_layers = archive.meta().num_layers;
  ds.dim = archive.meta().dim;
  ds.classes = std::move(classes);
  for (const auto& [id, r] : archive.records()) {
    if (!r.class_label) throw DataError("utterance '" + id + "': missing class_label");
    auto it = index.find(*r.class_label);
    if (it == index.end()) {
      throw DataError("utterance '" + id + "': class_label '" + *r.class_label +
                      "' is not a known class");
    }
    PooledSample s;
    s.label = it->second;
    s.layer_means.assign(ds.num_layers * ds.dim, 0.0);
    const auto T = r.stack.frames();
    for (std::size_t l = 0; l < ds.num_layers; ++l) {
      const auto& m = r.stack.layer(l);
      double* out = s.layer_means.data() + l * ds.dim;
      for (std::size_t t = 0; t < T; ++t) {
        const auto f = m.frame(t);
        for (std::size_t d = 0; d < ds.dim; ++d) out[d] += f[d];
      }
      for (std::size_t d = 0; d < ds.dim; ++d) out[d] /= static_cast<double>(T);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

namespace detail {

inline void check_compatible(const TrainedProbe& probe, const ProbeDataset& ds) {
  if (ds.num_layers != probe.num_layers || ds.dim != probe.dim) {
    throw DataError("probe expects L=" + std::to_string(probe.num_layers) +
                    ", D=" + std::to_string(probe.dim) + " but data has L=" +
                    std::to_string(ds.num_layers) + ", D=" + std::to_string(ds.dim));
  }
  if (ds.classes != probe.classes) {
    throw DataError("probe and data disagree on the class list");
  }
}

inline std::vector<double> pooled_input(const TrainedProbe& probe, const LayerWeights& w,
                                        const PooledSample& s) {
  std::vector<double> h(probe.dim, 0.0);
  for (std::size_t l = 0; l < probe.num_layers; ++l) {
    const double* p = s.layer_means.data() + l * probe.dim;
    for (std::size_t d = 0; d < probe.dim; ++d) h[d] += w[l] * p[d];
  }
  return h;
}

inline std::vector<double> class_logits(const TrainedProbe& probe, const std::vector<double>& h) {
  const std::size_t C = probe.num_classes();
  std::vector<double> z(probe.bias);
  for (std::size_t d = 0; d < probe.dim; ++d) {
    const double* row = probe.classifier.data() + d * C;
    for (std::size_t c = 0; c < C; ++c) z[c] += row[c] * h[d];
  }
  return z;
}

}  // namespace detail

inline std::vector<double> probe_logits(const TrainedProbe& probe, const PooledSample& s) {
  return detail::class_logits(probe, detail::pooled_input(probe, probe.layer_weights(), s));
}

inline std::size_t probe_predict(const TrainedProbe& probe, const PooledSample& s) {
  const auto z = probe_logits(probe, s);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

// Analytic gradients of the mean cross-entropy (plus weight_decay/2 |W|^2)
// at the probe's current parameters.
inline ProbeGradients probe_gradients(const TrainedProbe& probe, const ProbeDataset& batch) {
  if (batch.samples.empty()) throw ArgumentError("probe_gradients: empty batch");
  detail::check_compatible(probe, batch);
  const std::size_t C = probe.num_classes(), D = probe.dim, L = probe.num_layers;
  const LayerWeights w = probe.layer_weights();
  const double inv_n = 1.0 / static_cast<double>(batch.samples.size());

  ProbeGradients g;
  g.classifier.assign(D * C, 0.0);
  g.bias.assign(C, 0.0);
  std::vector<double> dw(L, 0.0);
  std::vector<double> gz(C), dh(D);
  for (const auto& s : batch.samples) {
    const auto h = detail::pooled_input(probe, w, s);
    const auto z = detail::class_logits(probe, h);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
    const double lse = mx + std::log(sum);
    g.loss += (lse - z[s.label]) * inv_n;
    for (std::size_t c = 0; c < C; ++c) {
      gz[c] = (std::exp(z[c] - lse) - (c == s.label ? 1.0 : 0.0)) * inv_n;
      g.bias[c] += gz[c];
    }
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0.0;
      const double* row = probe.classifier.data() + d * C;
      double* grow = g.classifier.data() + d * C;
      for (std::size_t c = 0; c < C; ++c) {
        grow[c] += h[d] * gz[c];
        acc += row[c] * gz[c];
      }
      dh[d] = acc;
    }
    if (!probe.frozen_weights) {
      for (std::size_t l = 0; l < L; ++l) {
        const double* p = s.layer_means.data() + l * D;
        double acc = 0.0;
        for (std::size_t d = 0; d < D; ++d) acc += p[d] * dh[d];
        dw[l] += acc;
      }
    }
  }
  if (probe.config.weight_decay != 0.0) {
    double sq = 0.0;
    for (std::size_t k = 0; k < g.classifier.size(); ++k) {
      g.classifier[k] += probe.config.weight_decay * probe.classifier[k];
      sq += probe.classifier[k] * probe.classifier[k];
    }
    g.loss += 0.5 * probe.config.weight_decay * sq;
  }
  if (!probe.frozen_weights) {
    // Softmax Jacobian: dP_l = w_l * (dw_l - sum_k w_k dw_k).
    double mean = 0.0;
    for (std::size_t l = 0; l < L; ++l) mean += w[l] * dw[l];
    std::vector<double> dp(L);
    for (std::size_t l = 0; l < L; ++l) dp[l] = w[l] * (dw[l] - mean);
    g.layer_logits = std::move(dp);
  }
  return g;
}

inline double probe_loss(const TrainedProbe& probe, const ProbeDataset& batch) {
  return probe_gradients(probe, batch).loss;
}

// Full-batch gradient descent from the zero/uniform start. History entry 0
// is the initial point; the returned parameters are those with the lowest
// validation loss (earliest on ties).
inline TrainedProbe train_probe(const ProbeDataset& train, const ProbeDataset& valid,
                                const ProbeConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("train_probe: learning_rate must be > 0");
  if (cfg.max_epochs < 1) throw ArgumentError("train_probe: max_epochs must be >= 1");
  if (train.samples.empty()) throw DataError("train_probe: empty training set");
  if (valid.samples.empty()) throw DataError("train_probe: empty validation set");
  {
    std::vector<bool> present(train.classes.size(), false);
    std::size_t n = 0;
    for (const auto& s : train.samples) {
      if (!present[s.label]) ++n;
      present[s.label] = true;
    }
    if (n < 2) throw DataError("train_probe: training set has a single class");
  }
  if (valid.num_layers != train.num_layers || valid.dim != train.dim ||
      valid.classes != train.classes) {
    throw DataError("train_probe: training and validation data differ in shape or classes");
  }
  if (cfg.frozen_weights && cfg.frozen_weights->size() != train.num_layers) {
    throw ArgumentError("train_probe: frozen weights have " +
                        std::to_string(cfg.frozen_weights->size()) + " entries for " +
                        std::to_string(train.num_layers) + " layers");
  }

  TrainedProbe probe =
      TrainedProbe::initial(train.classes, train.num_layers, train.dim, cfg.frozen_weights);
  probe.config = cfg;

  auto check_finite = [](double loss, std::size_t epoch, const char* which) {
    if (!std::isfinite(loss)) {
      throw DataError(std::string("train_probe: non-finite ") + which + " loss at epoch " +
                      std::to_string(epoch));
    }
  };

  TrainedProbe best = probe;
  double best_valid = probe_loss(probe, valid);
  auto grads = probe_gradients(probe, train);
  check_finite(grads.loss, 0, "training");
  check_finite(best_valid, 0, "validation");
  std::vector<EpochLoss> history{{0, grads.loss, best_valid}};
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t k = 0; k < probe.classifier.size(); ++k) {
      probe.classifier[k] -= cfg.learning_rate * grads.classifier[k];
    }
    for (std::size_t c = 0; c < probe.bias.size(); ++c) {
      probe.bias[c] -= cfg.learning_rate * grads.bias[c];
    }
    if (grads.layer_logits) {
      for (std::size_t l = 0; l < probe.layer_logits.p.size(); ++l) {
        probe.layer_logits.p[l] -= cfg.learning_rate * (*grads.layer_logits)[l];
      }
    }
    grads = probe_gradients(probe, train);
    const double vloss = probe_loss(probe, valid);
    check_finite(grads.loss, epoch, "training");
    check_finite(vloss, epoch, "validation");
    history.push_back({epoch, grads.loss, vloss});
    if (vloss < best_valid) {
      best_valid = vloss;
      best = probe;
      best.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.early_stop_patience && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  best.history = std::move(history);
  return best;
}

inline TrainedProbe train_probe(const ReprArchive& train, const ReprArchive& valid,
                                const ProbeConfig& cfg) {
  auto tr = pool_archive(train);
  auto va = pool_archive(valid, tr.classes);
  return train_probe(tr, va, cfg);
}

inline double evaluate_probe(const TrainedProbe& probe, const ProbeDataset& test) {
  if (test.samples.empty()) throw DataError("evaluate_probe: empty test set");
  detail::check_compatible(probe, test);
  std::size_t correct = 0;
  for (const auto& s : test.samples) correct += probe_predict(probe, s) == s.label;
  return static_cast<double>(correct) / static_cast<double>(test.samples.size());
}

inline double evaluate_probe(const TrainedProbe& probe, const ReprArchive& test) {
  return evaluate_probe(probe, pool_archive(test, probe.classes));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json probe_to_json(const TrainedProbe& p) {
  using nlohmann::json;
  const std::size_t C = p.num_classes();
  json classifier = json::array();
  for (std::size_t d = 0; d < p.dim; ++d) {
    classifier.push_back(std::vector<double>(p.classifier.begin() + d * C,
                                             p.classifier.begin() + (d + 1) * C));
  }
  json history = json::array();
  for (const auto& h : p.history) {
    history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"valid_loss", h.valid_loss}});
  }
  json cfg = {{"learning_rate", p.config.learning_rate},
              {"max_epochs", p.config.max_epochs},
              {"early_stop_patience", p.config.early_stop_patience},
              {"weight_decay", p.config.weight_decay},
              {"seed", p.config.seed},
              {"frozen_weights", p.config.frozen_weights ? weights_to_json(*p.config.frozen_weights)
                                                         : json(nullptr)}};
  return {{"format", "mp3s-probe"},
          {"version", 1},
          {"classes", p.classes},
          {"num_layers", p.num_layers},
          {"dim", p.dim},
          {"classifier", std::move(classifier)},
          {"bias", p.bias},
          {"layer_logits", p.frozen_weights ? json(nullptr) : json(p.layer_logits.p)},
          {"weights", weights_to_json(p.layer_weights())},
          {"best_epoch", p.best_epoch},
          {"history", std::move(history)},
          {"config", std::move(cfg)},
          {"seed", p.config.seed}};
}

inline TrainedProbe probe_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != "mp3s-probe") {
      throw DataError("probe file: missing or wrong 'format' field");
    }
    TrainedProbe p;
    p.classes = j.at("classes").get<std::vector<std::string>>();
    p.num_layers = j.at("num_layers").get<std::size_t>();
    p.dim = j.at("dim").get<std::size_t>();
    const std::size_t C = p.classes.size();
    const auto rows = j.at("classifier").get<std::vector<std::vector<double>>>();
    if (rows.size() != p.dim) throw DataError("probe file: classifier has wrong row count");
    for (const auto& r : rows) {
      if (r.size() != C) throw DataError("probe file: classifier has wrong column count");
      p.classifier.insert(p.classifier.end(), r.begin(), r.end());
    }
    p.bias = j.at("bias").get<std::vector<double>>();
    if (p.bias.size() != C) throw DataError("probe file: bias has wrong length");
    const auto& cfg = j.at("config");
    p.config.learning_rate = cfg.at("learning_rate").get<double>();
    p.config.max_epochs = cfg.at("max_epochs").get<std::size_t>();
    p.config.early_stop_patience = cfg.at("early_stop_patience").get<std::size_t>();
    p.config.weight_decay = cfg.value("weight_decay", 0.0);
    p.config.seed = cfg.at("seed").get<std::uint64_t>();
    if (!cfg.at("frozen_weights").is_null()) {
      p.config.frozen_weights = weights_from_json(cfg.at("frozen_weights"));
      p.frozen_weights = p.config.frozen_weights;
      p.layer_logits.p.assign(p.num_layers, 0.0);
    } else {
      p.layer_logits.p = j.at("layer_logits").get<std::vector<double>>();
      if (p.layer_logits.p.size() != p.num_layers) {
        throw DataError("probe file: layer_logits has wrong length");
      }
    }
    p.best_epoch = j.value("best_epoch", std::size_t{0});
    for (const auto& h : j.value("history", nlohmann::json::array())) {
      p.history.push_back({h.at("epoch").get<std::size_t>(), h.at("train_loss").get<double>(),
                           h.at("valid_loss").get<double>()});
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("probe file: ") + e.what());
  }
}

}  // namespace mp3s

#endif  // MP3S_PROBE_HPP_
