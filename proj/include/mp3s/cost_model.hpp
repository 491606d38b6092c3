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

// Multiply-accumulate counts for declared encoder and probe architectures.
//
// Closed forms for T input frames (only multiply-accumulate pairs count;
// nonlinearities, softmax, normalization and biases are free):
//
//   linear           in * out, times T when per_frame
//   pooling          0
//   conv1d           (T * rate) * kernel * in * out / groups
//   bilstm           2 * T * 4 * hidden * (in + hidden)      output 2 * hidden
//   attention-block  4*T*d^2 + 2*T^2*d + 2*T*d*hidden        d = in_dim
//
// The attention block is one transformer layer: Q/K/V and output
// projections (4 T d^2), scores and the weighted value sum (2 T^2 d, head
// count does not change it), and a two-matrix feed-forward of width
// `hidden` (2 T d hidden). `rate` lets convolutional front-ends run at a
// multiple of the output frame rate.

#ifndef MP3S_COST_MODEL_HPP_
#define MP3S_COST_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mp3s/error.hpp"

namespace mp3s {

enum class LayerKind { kLinear, kBiLstm, kConv1d, kPooling, kAttentionBlock };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kLinear: return "linear";
    case LayerKind::kBiLstm: return "bilstm";
    case LayerKind::kConv1d: return "conv1d";
    case LayerKind::kPooling: return "pooling";
    case LayerKind::kAttentionBlock: return "attention-block";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "linear") return LayerKind::kLinear;
  if (s == "bilstm") return LayerKind::kBiLstm;
  if (s == "conv1d") return LayerKind::kConv1d;
  if (s == "pooling") return LayerKind::kPooling;
  if (s == "attention-block") return LayerKind::kAttentionBlock;
  throw DataError("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::kLinear;
  std::string name;
  std::uint64_t in_dim = 0;
  std::uint64_t out_dim = 0;  // derived for pooling, bilstm, attention-block
  std::uint64_t hidden = 0;   // bilstm cell size / attention feed-forward width
  std::uint64_t kernel = 0;   // conv1d
  std::uint64_t heads = 0;    // attention-block
  std::uint64_t groups = 1;   // conv1d
  std::uint64_t rate = 1;     // conv1d: input frames per output frame
  bool per_frame = true;      // linear

  std::uint64_t output_dim() const {
    switch (kind) {
      case LayerKind::kPooling:
      case LayerKind::kAttentionBlock: return in_dim;
      case LayerKind::kBiLstm: return 2 * hidden;
      default: return out_dim;
    }
  }
};

struct ArchSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::kLinear;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::uint64_t total_macs = 0;
  std::vector<LayerCost> per_layer;
  std::uint64_t frames = 0;
  std::uint64_t encoder_macs = 0;  // pipeline reports only
  std::uint64_t probe_macs = 0;

  double gmacs() const { return static_cast<double>(total_macs) / 1e9; }
};

namespace detail {

inline std::string layer_label(const ArchSpec& spec, std::size_t i) {
  const auto& l = spec.layers[i];
  return "'" + spec.name + "' layer " + std::to_string(i) +
         (l.name.empty() ? "" : " (" + l.name + ")");
}

inline void validate_layer(const ArchSpec& spec, std::size_t i) {
  const auto& l = spec.layers[i];
  auto need = [&](std::uint64_t v, const char* field) {
    if (v < 1) throw DataError(layer_label(spec, i) + ": " + field + " must be >= 1");
  };
  need(l.in_dim, "in_dim");
  switch (l.kind) {
    case LayerKind::kLinear:
      need(l.out_dim, "out_dim");
      break;
    case LayerKind::kConv1d:
      need(l.out_dim, "out_dim");
      need(l.kernel, "kernel");
      need(l.groups, "groups");
      need(l.rate, "rate");
      if (l.in_dim % l.groups || l.out_dim % l.groups) {
        throw DataError(layer_label(spec, i) + ": groups must divide in_dim and out_dim");
      }
      break;
    case LayerKind::kBiLstm:
      need(l.hidden, "hidden");
      if (l.out_dim && l.out_dim != 2 * l.hidden) {
        throw DataError(layer_label(spec, i) + ": bilstm out_dim must be 2 * hidden");
      }
      break;
    case LayerKind::kAttentionBlock:
      need(l.hidden, "hidden");
      need(l.heads, "heads");
      if (l.in_dim % l.heads) {
        throw DataError(layer_label(spec, i) + ": heads must divide in_dim");
      }
      if (l.out_dim && l.out_dim != l.in_dim) {
        throw DataError(layer_label(spec, i) + ": attention-block out_dim must equal in_dim");
      }
      break;
    case LayerKind::kPooling:
      break;
  }
}

}  // namespace detail

inline void validate_arch(const ArchSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    detail::validate_layer(spec, i);
    if (i > 0 && spec.layers[i].in_dim != spec.layers[i - 1].output_dim()) {
      throw DataError(detail::layer_label(spec, i) + ": in_dim " +
                      std::to_string(spec.layers[i].in_dim) + " does not match previous output " +
                      std::to_string(spec.layers[i - 1].output_dim()));
    }
  }
}

inline std::uint64_t layer_macs(const LayerSpec& l, std::uint64_t T) {
  switch (l.kind) {
    case LayerKind::kLinear: return l.in_dim * l.out_dim * (l.per_frame ? T : 1);
    case LayerKind::kPooling: return 0;
    case LayerKind::kConv1d: return T * l.rate * l.kernel * l.in_dim * l.out_dim / l.groups;
    case LayerKind::kBiLstm: return 2 * T * 4 * l.hidden * (l.in_dim + l.hidden);
    case LayerKind::kAttentionBlock: {
      const std::uint64_t d = l.in_dim;
      return 4 * T * d * d + 2 * T * T * d + 2 * T * d * l.hidden;
    }
  }
  return 0;
}

// True when the layer's count scales exactly linearly with T.
inline bool is_frame_linear(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kLinear: return l.per_frame;
    case LayerKind::kAttentionBlock: return false;
    default: return true;
  }
}

inline CostReport probe_macs(const ArchSpec& spec, std::uint64_t T) {
  if (T < 1) throw ArgumentError("probe_macs: T must be >= 1");
  validate_arch(spec);
  CostReport r;
  r.frames = T;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto macs = layer_macs(l, T);
    r.per_layer.push_back({l.name.empty() ? std::string(to_string(l.kind)) + std::to_string(i)
                                          : l.name,
                           l.kind, macs});
    r.total_macs += macs;
  }
  return r;
}

// Encoder rows are prefixed "encoder/", probe rows "probe/".
inline CostReport pipeline_macs(const ArchSpec& encoder, const ArchSpec& probe, std::uint64_t T) {
  const auto enc = probe_macs(encoder, T);
  const auto prb = probe_macs(probe, T);
  if (!encoder.layers.empty() && !probe.layers.empty() &&
      encoder.layers.back().output_dim() != probe.layers.front().in_dim) {
    throw DataError("pipeline: encoder '" + encoder.name + "' outputs " +
                    std::to_string(encoder.layers.back().output_dim()) + " features but probe '" +
                    probe.name + "' expects " + std::to_string(probe.layers.front().in_dim));
  }
  CostReport r;
  r.frames = T;
  r.encoder_macs = enc.total_macs;
  r.probe_macs = prb.total_macs;
  r.total_macs = enc.total_macs + prb.total_macs;
  for (auto c : enc.per_layer) {
    c.name = "encoder/" + c.name;
    r.per_layer.push_back(std::move(c));
  }
  for (auto c : prb.per_layer) {
    c.name = "probe/" + c.name;
    r.per_layer.push_back(std::move(c));
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON: {"name": ..., "layers": [{"kind": "linear", "name": ..., "in_dim": ...,
//        "out_dim": ..., "per_frame": true, ...}, ...]}
// Optional "repeat": n on a layer expands it into n identical copies.

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec spec;
  try {
    spec.name = j.value("name", std::string{});
    if (!j.contains("layers") || !j.at("layers").is_array()) {
      throw DataError("arch spec '" + spec.name + "': missing 'layers' array");
    }
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
      l.name = jl.value("name", std::string{});
      l.in_dim = jl.value("in_dim", std::uint64_t{0});
      l.out_dim = jl.value("out_dim", std::uint64_t{0});
      l.hidden = jl.value("hidden", std::uint64_t{0});
      l.kernel = jl.value("kernel", std::uint64_t{0});
      l.heads = jl.value("heads", std::uint64_t{0});
      l.groups = jl.value("groups", std::uint64_t{1});
      l.rate = jl.value("rate", std::uint64_t{1});
      l.per_frame = jl.value("per_frame", true);
      if (l.kind == LayerKind::kPooling && l.in_dim == 0 && !spec.layers.empty()) {
        l.in_dim = spec.layers.back().output_dim();
      }
      const auto repeat = jl.value("repeat", std::uint64_t{1});
      for (std::uint64_t k = 0; k < repeat; ++k) {
        LayerSpec copy = l;
        if (repeat > 1) copy.name = l.name + "." + std::to_string(k);
        spec.layers.push_back(std::move(copy));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("arch spec '" + spec.name + "': " + e.what());
  }
  validate_arch(spec);
  return spec;
}

inline nlohmann::json arch_to_json(const ArchSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json jl = {{"kind", to_string(l.kind)}, {"name", l.name}, {"in_dim", l.in_dim}};
    switch (l.kind) {
      case LayerKind::kLinear:
        jl["out_dim"] = l.out_dim;
        jl["per_frame"] = l.per_frame;
        break;
      case LayerKind::kConv1d:
        jl["out_dim"] = l.out_dim;
        jl["kernel"] = l.kernel;
        if (l.groups != 1) jl["groups"] = l.groups;
        if (l.rate != 1) jl["rate"] = l.rate;
        break;
      case LayerKind::kBiLstm:
        jl["hidden"] = l.hidden;
        break;
      case LayerKind::kAttentionBlock:
        jl["hidden"] = l.hidden;
        jl["heads"] = l.heads;
        break;
      case LayerKind::kPooling:
        break;
    }
    layers.push_back(std::move(jl));
  }
  return {{"name", spec.name}, {"layers", std::move(layers)}};
}

}  // namespace mp3s

#endif  // MP3S_COST_MODEL_HPP_
