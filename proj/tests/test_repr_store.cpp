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

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "mp3s/repr_store.hpp"
#include "support.hpp"

namespace mp3s {
namespace {

using testing::Rng;
using testing::scratch_dir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

ReprArchive random_archive(std::uint64_t seed, std::size_t n, std::size_t L, std::size_t D) {
  Rng rng(seed);
  ReprArchive a(ArchiveMeta{"rand", L, D, 50.0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t T = 1 + rng.index(7);
    UttRecord r{"u" + std::to_string(i), testing::random_stack(rng, L, T, D), {}, {}, {}};
    if (i % 2) r.speaker = "s" + std::to_string(i % 3);
    if (i % 3) r.class_label = "c" + std::to_string(i % 2);
    if (T >= 2) r.segments = {{0, 1, "a-b-c"}, {1, T, "lbl"}};
    a.add(std::move(r));
  }
  return a;
}

// Hand-assembled tensor bytes, independent of encode_tensor.
std::string tensor_bytes(std::uint32_t L, std::uint32_t T, std::uint32_t D,
                         const std::vector<float>& values) {
  std::string out("MP3SR\0", 6);
  out.push_back(1);
  for (std::uint32_t v : {L, T, D}) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  for (float f : values) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((u >> (8 * k)) & 0xff));
  }
  return out;
}

void write_manifest(const std::filesystem::path& root, const std::string& json) {
  spit(root / "manifest.json", json);
}

TEST(ReprStore, LoadsIdentityPayload) {
  const auto root = scratch_dir("identity");
  write_manifest(root, R"({"encoder":"e","num_layers":1,"dim":2,"records":[{"utt_id":"a","tensor":"tensors/a.mp3sr"}]})");
  spit(root / "tensors/a.mp3sr", tensor_bytes(1, 2, 2, {1, 0, 0, 1}));
  const auto a = load_archive(root);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.meta().frame_rate_hz, 50.0);
  EXPECT_EQ(a.at("a").stack.layer(0), ReprMatrix::from_rows({{1, 0}, {0, 1}}));
}

TEST(ReprStore, HeaderShapeMismatchNamesUtterance) {
  const auto root = scratch_dir("shape");
  write_manifest(root, R"({"num_layers":1,"dim":2,"records":[{"utt_id":"bad_one"}]})");
  spit(root / "tensors/bad_one.mp3sr", tensor_bytes(1, 3, 2, {1, 2, 3, 4}));
  try {
    load_archive(root);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_one"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
  }
}

TEST(ReprStore, ManifestFrameCountMismatch) {
  const auto root = scratch_dir("frames");
  write_manifest(root, R"({"num_layers":1,"dim":2,"records":[{"utt_id":"u","num_frames":3}]})");
  spit(root / "tensors/u.mp3sr", tensor_bytes(1, 2, 2, {1, 2, 3, 4}));
  try {
    load_archive(root);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'u'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("num_frames"), std::string::npos);
  }
}

TEST(ReprStore, LoadErrors) {
  const auto root = scratch_dir("errors");
  EXPECT_THROW(load_archive(root), DataError);  // no manifest

  write_manifest(root, R"({"num_layers":1,"dim":1,"records":[{"utt_id":"n"}]})");
  spit(root / "tensors/n.mp3sr", tensor_bytes(1, 1, 1, {std::nanf("")}));
  try {
    load_archive(root);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }

  write_manifest(root, R"({"num_layers":1,"dim":1,"records":[{"utt_id":"n"},{"utt_id":"n"}]})");
  spit(root / "tensors/n.mp3sr", tensor_bytes(1, 1, 1, {1}));
  try {
    load_archive(root);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate utt_id 'n'"), std::string::npos);
  }

  write_manifest(root, R"({"num_layers":2,"dim":1,"records":[{"utt_id":"n"}]})");
  EXPECT_THROW(load_archive(root), DataError);  // L mismatch with archive

  write_manifest(root, R"({"num_layers":1,"dim":1,"frame_rate_hz":0,"records":[]})");
  EXPECT_THROW(load_archive(root), DataError);

  write_manifest(root, R"({"num_layers":1,"dim":1,"records":[{"utt_id":"n","segments":[[0,2,"x"]]}]})");
  EXPECT_THROW(load_archive(root), DataError);  // span beyond T

  write_manifest(root, R"({"num_layers":1,"dim":1,"records":[{"utt_id":"missing"}]})");
  EXPECT_THROW(load_archive(root), DataError);

  write_manifest(root, "{not json");
  EXPECT_THROW(load_archive(root), DataError);

  auto bytes = tensor_bytes(1, 1, 1, {1});
  bytes[0] = 'X';
  EXPECT_THROW(decode_tensor(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()), "x"),
               DataError);
  bytes = tensor_bytes(1, 1, 1, {1});
  bytes[6] = 2;
  EXPECT_THROW(decode_tensor(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()), "x"),
               DataError);
}

TEST(ReprStore, EncodeMatchesHandLayout) {
  const ReprStack s({ReprMatrix::from_rows({{1.5f, -2.0f}}), ReprMatrix::from_rows({{0.25f, 8.0f}})});
  EXPECT_EQ(encode_tensor(s), tensor_bytes(2, 1, 2, {1.5f, -2.0f, 0.25f, 8.0f}));
}

TEST(ReprStore, RoundTripIsBitExact) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto a = random_archive(seed, 6, 1 + seed % 3, 1 + seed % 4);
    const auto root = scratch_dir("roundtrip");
    write_archive(a, root);
    const auto b = load_archive(root);
    EXPECT_EQ(a.meta(), b.meta());
    EXPECT_EQ(a.records(), b.records());
    EXPECT_EQ(a.manifest().records, b.manifest().records);
    for (const auto& [id, r] : a.records()) {
      EXPECT_EQ(slurp(root / "tensors" / (id + ".mp3sr")), encode_tensor(r.stack));
    }
  }
}

TEST(ReprStore, LoadWriteIsIdentityOnFiles) {
  const auto a = random_archive(9, 5, 2, 3);
  const auto r1 = scratch_dir("lw1");
  const auto r2 = scratch_dir("lw2");
  write_archive(a, r1);
  write_archive(load_archive(r1), r2);
  EXPECT_EQ(slurp(r1 / "manifest.json"), slurp(r2 / "manifest.json"));
  for (const auto& [id, r] : a.records()) {
    EXPECT_EQ(slurp(r1 / "tensors" / (id + ".mp3sr")), slurp(r2 / "tensors" / (id + ".mp3sr")));
  }
}

TEST(ReprStore, WritesAreDeterministic) {
  const auto a = random_archive(3, 4, 2, 2);
  const auto r1 = scratch_dir("det1");
  const auto r2 = scratch_dir("det2");
  write_archive(a, r1);
  write_archive(a, r2);
  EXPECT_EQ(slurp(r1 / "manifest.json"), slurp(r2 / "manifest.json"));
}

TEST(ReprStore, EmptyArchive) {
  const auto root = scratch_dir("empty");
  write_archive(ReprArchive(ArchiveMeta{"e", 2, 3, 50.0}), root);
  EXPECT_FALSE(std::filesystem::exists(root / "tensors"));
  const auto m = read_manifest(root);
  EXPECT_TRUE(m.records.empty());
  EXPECT_EQ(load_archive(root).size(), 0u);
}

TEST(ReprStore, NestedUttIds) {
  Rng rng(4);
  ReprArchive a(ArchiveMeta{"e", 1, 2, 50.0});
  a.add({"id10270/x6uYqmx31kE/00001", testing::random_stack(rng, 1, 3, 2), {}, {}, {}});
  const auto root = scratch_dir("nested");
  write_archive(a, root);
  EXPECT_EQ(load_archive(root).records(), a.records());
  for (const char* bad : {"../x", "a/../b", "/abs", "a b", "", "dir/"}) {
    EXPECT_THROW(a.add({bad, testing::random_stack(rng, 1, 1, 2), {}, {}, {}}), DataError) << bad;
  }
}

TEST(ReprStore, AddValidatesShape) {
  Rng rng(5);
  ReprArchive a(ArchiveMeta{"e", 2, 3, 50.0});
  EXPECT_THROW(a.add({"x", testing::random_stack(rng, 1, 2, 3), {}, {}, {}}), DataError);
  EXPECT_THROW(a.add({"x", testing::random_stack(rng, 2, 2, 4), {}, {}, {}}), DataError);
  a.add({"x", testing::random_stack(rng, 2, 2, 3), {}, {}, {}});
  EXPECT_THROW(a.add({"x", testing::random_stack(rng, 2, 2, 3), {}, {}, {}}), DataError);
  EXPECT_THROW(ReprStack({ReprMatrix(2, 3), ReprMatrix(3, 3)}), ArgumentError);
}

TEST(SegmentView, Spans) {
  Rng rng(6);
  const UttRecord r{"u", testing::random_stack(rng, 3, 3, 2), {}, {}, {}};
  const auto full = segment_view(r, 0, 3);
  ASSERT_EQ(full.num_layers(), 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_TRUE(std::equal(full.layer(l).data().begin(), full.layer(l).data().end(),
                           r.stack.layer(l).data().begin()));
  }
  const auto one = segment_view(r, 1, 2);
  EXPECT_EQ(one.frames(), 1u);
  EXPECT_EQ(one.layer(2)(0, 1), r.stack.layer(2)(1, 1));
  EXPECT_THROW(segment_view(r, 2, 2), ArgumentError);
  EXPECT_THROW(segment_view(r, 1, 4), ArgumentError);
}

TEST(SegmentView, LengthProperty) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.index(10);
    const UttRecord r{"u", testing::random_stack(rng, 2, T, 2), {}, {}, {}};
    const std::size_t a = rng.index(T);
    const std::size_t b = a + 1 + rng.index(T - a);
    EXPECT_EQ(segment_view(r, a, b).frames(), b - a);
  }
}

}  // namespace
}  // namespace mp3s
