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

// Representation archives: per-utterance layer stacks of frame matrices
// plus manifest metadata, and their on-disk format.
//
// Directory layout:
//   <root>/manifest.json
//   <root>/tensors/<utt_id>.mp3sr
//
// Tensor file (all integers little-endian):
//   bytes 0..5   magic "MP3SR\0"
//   byte  6      version (1)
//   bytes 7..18  u32 L, u32 T, u32 D
//   then L*T*D float32 values, row-major [L][T][D]

#ifndef MP3S_REPR_STORE_HPP_
#define MP3S_REPR_STORE_HPP_

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mp3s/error.hpp"

namespace mp3s {

inline constexpr double kDefaultFrameRateHz = 50.0;

// Read-only T x D window over row-major float storage.
class MatrixView {
 public:
  MatrixView() = default;
  MatrixView(std::span<const float> data, std::size_t frames, std::size_t dim)
      : data_(data), frames_(frames), dim_(dim) {
    if (data.size() != frames * dim) {
      throw ArgumentError("MatrixView: storage size does not match shape");
    }
  }

  std::size_t frames() const { return frames_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> frame(std::size_t t) const {
    return data_.subspan(t * dim_, dim_);
  }
  float operator()(std::size_t t, std::size_t d) const {
    return data_[t * dim_ + d];
  }

 private:
  std::span<const float> data_;
  std::size_t frames_ = 0;
  std::size_t dim_ = 0;
};

// Owning T x D float matrix (one encoder layer for one utterance).
class ReprMatrix {
 public:
  ReprMatrix() = default;
  ReprMatrix(std::size_t frames, std::size_t dim)
      : frames_(frames), dim_(dim), data_(frames * dim, 0.0f) {}
  ReprMatrix(std::size_t frames, std::size_t dim, std::vector<float> data)
      : frames_(frames), dim_(dim), data_(std::move(data)) {
    if (data_.size() != frames * dim) {
      throw ArgumentError("ReprMatrix: data size " +
                          std::to_string(data_.size()) + " != " +
                          std::to_string(frames) + "x" + std::to_string(dim));
    }
  }
  // Rows are frames.
  static ReprMatrix from_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) return {};
    ReprMatrix m(rows.size(), rows.front().size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != m.dim_) {
        throw ArgumentError("ReprMatrix::from_rows: ragged rows");
      }
      std::copy(rows[t].begin(), rows[t].end(), m.mutable_frame(t).begin());
    }
    return m;
  }

  std::size_t frames() const { return frames_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(data_).subspan(t * dim_, dim_);
  }
  std::span<float> mutable_frame(std::size_t t) {
    return std::span<float>(data_).subspan(t * dim_, dim_);
  }
  float operator()(std::size_t t, std::size_t d) const {
    return data_[t * dim_ + d];
  }
  float& operator()(std::size_t t, std::size_t d) { return data_[t * dim_ + d]; }
  MatrixView view() const { return MatrixView(data_, frames_, dim_); }

  bool operator==(const ReprMatrix&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

// Read-only view over a run of frames in every layer of a stack.
class StackView {
 public:
  StackView() = default;
  explicit StackView(std::vector<MatrixView> layers)
      : layers_(std::move(layers)) {}

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t frames() const {
    return layers_.empty() ? 0 : layers_.front().frames();
  }
  std::size_t dim() const { return layers_.empty() ? 0 : layers_.front().dim(); }
  const MatrixView& layer(std::size_t i) const { return layers_.at(i); }

 private:
  std::vector<MatrixView> layers_;
};

// L layers of identical shape. Layer 0 is the lowest (front-end output).
class ReprStack {
 public:
  ReprStack() = default;
  explicit ReprStack(std::vector<ReprMatrix> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ArgumentError("ReprStack: needs at least one layer");
    const auto t = layers_.front().frames();
    const auto d = layers_.front().dim();
    if (t == 0 || d == 0) throw ArgumentError("ReprStack: empty layer shape");
    for (const auto& l : layers_) {
      if (l.frames() != t || l.dim() != d) {
        throw ArgumentError("ReprStack: layers differ in shape");
      }
    }
  }

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t frames() const { return layers_.empty() ? 0 : layers_.front().frames(); }
  std::size_t dim() const { return layers_.empty() ? 0 : layers_.front().dim(); }
  const ReprMatrix& layer(std::size_t i) const { return layers_.at(i); }
  ReprMatrix& mutable_layer(std::size_t i) { return layers_.at(i); }
  const std::vector<ReprMatrix>& layers() const { return layers_; }

  StackView view() const {
    std::vector<MatrixView> v;
    v.reserve(layers_.size());
    for (const auto& l : layers_) v.push_back(l.view());
    return StackView(std::move(v));
  }

  bool operator==(const ReprStack&) const = default;

 private:
  std::vector<ReprMatrix> layers_;
};

// Half-open frame span [start, end) with its label.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;

  bool operator==(const Segment&) const = default;
};

struct UttRecord {
  std::string utt_id;
  ReprStack stack;
  std::optional<std::string> speaker;
  std::optional<std::string> class_label;
  std::vector<Segment> segments;

  bool operator==(const UttRecord&) const = default;
};

struct ArchiveMeta {
  std::string encoder;
  std::size_t num_layers = 1;
  std::size_t dim = 1;
  double frame_rate_hz = kDefaultFrameRateHz;

  bool operator==(const ArchiveMeta&) const = default;
};

// Manifest-level description of one record (no tensor payload).
struct RecordMeta {
  std::string utt_id;
  std::size_t num_frames = 0;
  std::optional<std::string> speaker;
  std::optional<std::string> class_label;
  std::vector<Segment> segments;
  std::string tensor;  // path relative to the archive root

  bool operator==(const RecordMeta&) const = default;
};

struct Manifest {
  ArchiveMeta meta;
  std::vector<RecordMeta> records;
};

namespace detail {

inline void validate_meta(const ArchiveMeta& meta) {
  if (meta.num_layers < 1) throw DataError("archive: num_layers must be >= 1");
  if (meta.dim < 1) throw DataError("archive: dim must be >= 1");
  if (!(meta.frame_rate_hz > 0.0) || !std::isfinite(meta.frame_rate_hz)) {
    throw DataError("archive: frame_rate_hz must be a positive number");
  }
}

inline void validate_segments(const std::string& utt_id,
                              const std::vector<Segment>& segments,
                              std::size_t frames) {
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    if (!(s.start < s.end && s.end <= frames)) {
      throw DataError("utterance '" + utt_id + "': segments[" +
                      std::to_string(k) + "] span [" + std::to_string(s.start) +
                      ", " + std::to_string(s.end) + ") outside [0, " +
                      std::to_string(frames) + ")");
    }
  }
}

inline void validate_finite(const std::string& utt_id, const ReprStack& stack) {
  for (std::size_t l = 0; l < stack.num_layers(); ++l) {
    const auto data = stack.layer(l).data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      if (!std::isfinite(data[k])) {
        throw DataError("utterance '" + utt_id + "': non-finite value at layer " +
                        std::to_string(l) + " frame " +
                        std::to_string(k / stack.dim()) + " dim " +
                        std::to_string(k % stack.dim()));
      }
    }
  }
}

// utt_ids become relative file paths on write; '/' separated components
// are allowed (VoxCeleb-style ids), escapes from the archive root are not.
inline void validate_utt_id(const std::string& utt_id) {
  bool ok = !utt_id.empty() && utt_id.front() != '/' && utt_id.back() != '/' &&
            utt_id.find_first_of("\\ \t\r\n") == std::string::npos;
  if (ok) {
    for (const auto& part : std::filesystem::path(utt_id)) {
      const auto s = part.string();
      if (s.empty() || s == "." || s == "..") ok = false;
    }
  }
  if (!ok) throw DataError("invalid utt_id '" + utt_id + "'");
}

}  // namespace detail

// Utterances keyed by utt_id. Every record shares the archive's L and D.
class ReprArchive {
 public:
  ReprArchive() = default;
  explicit ReprArchive(ArchiveMeta meta) : meta_(std::move(meta)) {
    detail::validate_meta(meta_);
  }

  void add(UttRecord record) {
    detail::validate_utt_id(record.utt_id);
    if (records_.count(record.utt_id)) {
      throw DataError("duplicate utt_id '" + record.utt_id + "'");
    }
    if (record.stack.num_layers() != meta_.num_layers) {
      throw DataError("utterance '" + record.utt_id + "': num_layers " +
                      std::to_string(record.stack.num_layers()) +
                      " != archive num_layers " + std::to_string(meta_.num_layers));
    }
    if (record.stack.dim() != meta_.dim) {
      throw DataError("utterance '" + record.utt_id + "': dim " +
                      std::to_string(record.stack.dim()) + " != archive dim " +
                      std::to_string(meta_.dim));
    }
    detail::validate_finite(record.utt_id, record.stack);
    detail::validate_segments(record.utt_id, record.segments, record.stack.frames());
    auto id = record.utt_id;
    records_.emplace(std::move(id), std::move(record));
  }

  const ArchiveMeta& meta() const { return meta_; }
  const std::map<std::string, UttRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  const UttRecord* find(const std::string& utt_id) const {
    auto it = records_.find(utt_id);
    return it == records_.end() ? nullptr : &it->second;
  }
  const UttRecord& at(const std::string& utt_id) const {
    if (const auto* r = find(utt_id)) return *r;
    throw DataError("unknown utterance '" + utt_id + "'");
  }

  Manifest manifest() const {
    Manifest m{meta_, {}};
    for (const auto& [id, r] : records_) {
      m.records.push_back(RecordMeta{id, r.stack.frames(), r.speaker, r.class_label,
                                     r.segments, "tensors/" + id + ".mp3sr"});
    }
    return m;
  }

  bool operator==(const ReprArchive&) const = default;

 private:
  ArchiveMeta meta_;
  std::map<std::string, UttRecord> records_;
};

// Frames [start, end) of every layer; the view borrows from `record`.
inline StackView segment_view(const UttRecord& record, std::size_t start,
                              std::size_t end) {
  const auto& stack = record.stack;
  if (!(start < end && end <= stack.frames())) {
    throw ArgumentError("segment_view: span [" + std::to_string(start) + ", " +
                        std::to_string(end) + ") invalid for utterance '" +
                        record.utt_id + "' with " + std::to_string(stack.frames()) +
                        " frames");
  }
  const auto d = stack.dim();
  std::vector<MatrixView> layers;
  layers.reserve(stack.num_layers());
  for (const auto& l : stack.layers()) {
    layers.emplace_back(l.data().subspan(start * d, (end - start) * d), end - start, d);
  }
  return StackView(std::move(layers));
}

// ---------------------------------------------------------------------------
// Tensor codec

inline constexpr std::array<char, 6> kTensorMagic = {'M', 'P', '3', 'S', 'R', '\0'};
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 6 + 1 + 3 * 4;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::string encode_tensor(const ReprStack& stack) {
  std::string out(kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(static_cast<char>(kTensorVersion));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.num_layers()));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.frames()));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.dim()));
  out.reserve(out.size() + stack.num_layers() * stack.frames() * stack.dim() * 4);
  for (const auto& layer : stack.layers()) {
    for (float f : layer.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

// `context` names the utterance in error messages.
inline ReprStack decode_tensor(std::span<const unsigned char> bytes,
                               const std::string& context) {
  auto fail = [&](const std::string& what) {
    return DataError("utterance '" + context + "': tensor " + what);
  };
  if (bytes.size() < kTensorHeaderBytes) throw fail("file truncated before header end");
  if (std::memcmp(bytes.data(), kTensorMagic.data(), kTensorMagic.size()) != 0) {
    throw fail("bad magic");
  }
  if (bytes[6] != kTensorVersion) {
    throw fail("unsupported version " + std::to_string(bytes[6]));
  }
  const std::size_t L = detail::get_u32(bytes.data() + 7);
  const std::size_t T = detail::get_u32(bytes.data() + 11);
  const std::size_t D = detail::get_u32(bytes.data() + 15);
  if (L == 0 || T == 0 || D == 0) throw fail("header has a zero dimension");
  const std::size_t expected = kTensorHeaderBytes + L * T * D * 4;
  if (bytes.size() != expected) {
    throw fail("shape mismatch: header [" + std::to_string(L) + "x" + std::to_string(T) +
               "x" + std::to_string(D) + "] needs " + std::to_string(expected) +
               " bytes, file has " + std::to_string(bytes.size()));
  }
  std::vector<ReprMatrix> layers;
  layers.reserve(L);
  const unsigned char* p = bytes.data() + kTensorHeaderBytes;
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<float> data(T * D);
    for (auto& f : data) {
      f = std::bit_cast<float>(detail::get_u32(p));
      p += 4;
    }
    layers.emplace_back(T, D, std::move(data));
  }
  return ReprStack(std::move(layers));
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json jr;
    jr["utt_id"] = r.utt_id;
    jr["num_frames"] = r.num_frames;
    jr["tensor"] = r.tensor;
    if (r.speaker) jr["speaker"] = *r.speaker;
    if (r.class_label) jr["class_label"] = *r.class_label;
    if (!r.segments.empty()) {
      nlohmann::json segs = nlohmann::json::array();
      for (const auto& s : r.segments) segs.push_back({s.start, s.end, s.label});
      jr["segments"] = std::move(segs);
    }
    records.push_back(std::move(jr));
  }
  return {{"encoder", m.meta.encoder},
          {"num_layers", m.meta.num_layers},
          {"dim", m.meta.dim},
          {"frame_rate_hz", m.meta.frame_rate_hz},
          {"records", std::move(records)}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  auto field_error = [](const std::string& where, const std::string& what) {
    return DataError("manifest: " + where + ": " + what);
  };
  if (!j.is_object()) throw field_error("root", "expected an object");
  Manifest m;
  try {
    m.meta.encoder = j.value("encoder", std::string{});
    if (!j.contains("num_layers")) throw field_error("root", "missing 'num_layers'");
    if (!j.contains("dim")) throw field_error("root", "missing 'dim'");
    m.meta.num_layers = j.at("num_layers").get<std::size_t>();
    m.meta.dim = j.at("dim").get<std::size_t>();
    m.meta.frame_rate_hz = j.value("frame_rate_hz", kDefaultFrameRateHz);
  } catch (const nlohmann::json::exception& e) {
    throw field_error("root", e.what());
  }
  detail::validate_meta(m.meta);
  if (!j.contains("records") || !j.at("records").is_array()) {
    throw field_error("root", "missing 'records' array");
  }
  std::size_t index = 0;
  for (const auto& jr : j.at("records")) {
    RecordMeta r;
    const std::string where = "records[" + std::to_string(index++) + "]";
    try {
      if (!jr.contains("utt_id")) throw field_error(where, "missing 'utt_id'");
      r.utt_id = jr.at("utt_id").get<std::string>();
      const std::string rw = where + " (utt_id '" + r.utt_id + "')";
      r.num_frames = jr.value("num_frames", std::size_t{0});
      r.tensor = jr.value("tensor", "tensors/" + r.utt_id + ".mp3sr");
      if (jr.contains("speaker")) r.speaker = jr.at("speaker").get<std::string>();
      if (jr.contains("class_label")) r.class_label = jr.at("class_label").get<std::string>();
      if (jr.contains("segments")) {
        for (const auto& js : jr.at("segments")) {
          if (!js.is_array() || js.size() != 3) {
            throw field_error(rw, "segments entries must be [start, end, \"label\"]");
          }
          r.segments.push_back({js[0].get<std::size_t>(), js[1].get<std::size_t>(),
                                js[2].get<std::string>()});
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw field_error(where, e.what());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

// Reads and validates manifest.json only; tensors are not touched.
inline Manifest read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  if (!std::filesystem::exists(path)) {
    throw DataError("missing manifest: '" + path.string() + "'");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest: invalid JSON: " + std::string(e.what()));
  }
  return manifest_from_json(j);
}

inline ReprArchive load_archive(const std::filesystem::path& root) {
  const Manifest m = read_manifest(root);
  ReprArchive archive(m.meta);
  for (const auto& r : m.records) {
    detail::validate_utt_id(r.utt_id);
    if (archive.find(r.utt_id)) throw DataError("duplicate utt_id '" + r.utt_id + "'");
    const auto tensor_path = root / r.tensor;
    if (!std::filesystem::exists(tensor_path)) {
      throw DataError("utterance '" + r.utt_id + "': tensor file '" +
                      tensor_path.string() + "' not found");
    }
    const std::string bytes = detail::read_file(tensor_path);
    ReprStack stack = decode_tensor(
        std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()),
        r.utt_id);
    if (r.num_frames != 0 && stack.frames() != r.num_frames) {
      throw DataError("utterance '" + r.utt_id + "': shape mismatch: manifest num_frames " +
                      std::to_string(r.num_frames) + " but tensor holds " +
                      std::to_string(stack.frames()) + " frames");
    }
    archive.add(UttRecord{r.utt_id, std::move(stack), r.speaker, r.class_label, r.segments});
  }
  return archive;
}

// Output bytes depend only on archive contents: records are written in
// utt_id order and JSON object keys are sorted.
inline void write_archive(const ReprArchive& archive, const std::filesystem::path& root) {
  detail::validate_meta(archive.meta());
  const Manifest m = archive.manifest();
  std::vector<std::pair<std::filesystem::path, std::string>> tensors;
  for (const auto& [id, r] : archive.records()) {
    detail::validate_utt_id(id);
    detail::validate_finite(id, r.stack);
    tensors.emplace_back(root / "tensors" / (id + ".mp3sr"), encode_tensor(r.stack));
  }
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());
  if (!tensors.empty()) {
    std::filesystem::create_directories(root / "tensors", ec);
    if (ec) throw IoError("cannot create tensors dir: " + ec.message());
  }
  for (const auto& [path, bytes] : tensors) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    detail::write_file(path, bytes);
  }
  detail::write_file(root / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

}  // namespace mp3s

#endif  // MP3S_REPR_STORE_HPP_
