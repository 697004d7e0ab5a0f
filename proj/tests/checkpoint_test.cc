// Copyright 2026 The VPConv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vpconv/checkpoint.h"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "test_util.h"
#include "vpconv/error.h"

namespace vpconv {
namespace {

using ::vpconv::testing::TempDir;

std::vector<char> ReadBytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void WriteBytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

ErrorCode CodeOf(const std::filesystem::path& p) {
  try {
    ReadArchive(p);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kInvalidArgument;
}

class ArchiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    a_ = {1.0f, -2.5f, 3.25e-8f, 1e30f};
    b_ = {};
    c_ = {0.5f};
    WriteArchive(path(), {{"k", "v"}, {"n", 3}}, {{"a", &a_}, {"empty", &b_}, {"c", &c_}});
  }
  std::filesystem::path path() const { return dir_.path() / "x.ckpt"; }

  TempDir dir_{"ckpt"};
  std::vector<float> a_, b_, c_;
};

TEST_F(ArchiveTest, RoundTripIsExact) {
  const Archive ar = ReadArchive(path());
  EXPECT_EQ(ar.meta.at("k"), "v");
  EXPECT_EQ(ar.meta.at("n"), 3);
  ASSERT_EQ(ar.tensors.size(), 3u);
  EXPECT_EQ(ar.Get("a"), a_);
  EXPECT_TRUE(ar.Get("empty").empty());
  EXPECT_EQ(ar.Get("c"), c_);
  EXPECT_TRUE(ar.Has("a"));
  EXPECT_FALSE(ar.Has("zz"));
  EXPECT_THROW(ar.Get("zz"), Error);
}

TEST_F(ArchiveTest, LeavesNoTemporaryFile) {
  for (const auto& e : std::filesystem::directory_iterator(dir_.path())) {
    EXPECT_EQ(e.path().filename(), "x.ckpt");
  }
}

TEST_F(ArchiveTest, MissingFileIsIoError) {
  EXPECT_EQ(CodeOf(dir_.path() / "nope.ckpt"), ErrorCode::kNotFound);
}

TEST_F(ArchiveTest, BadMagicIsMalformed) {
  auto b = ReadBytes(path());
  b[0] = 'X';
  WriteBytes(path(), b);
  EXPECT_EQ(CodeOf(path()), ErrorCode::kMalformed);
}

TEST_F(ArchiveTest, VersionMismatchIsReported) {
  auto b = ReadBytes(path());
  const std::uint32_t v = kCheckpointVersion + 1;
  std::memcpy(b.data() + 4, &v, 4);
  WriteBytes(path(), b);
  EXPECT_EQ(CodeOf(path()), ErrorCode::kVersionMismatch);
}

TEST_F(ArchiveTest, TruncationIsMalformed) {
  auto b = ReadBytes(path());
  b.resize(b.size() - 3);
  WriteBytes(path(), b);
  EXPECT_EQ(CodeOf(path()), ErrorCode::kMalformed);
  b.resize(10);
  WriteBytes(path(), b);
  EXPECT_EQ(CodeOf(path()), ErrorCode::kMalformed);
}

TEST_F(ArchiveTest, FlippedPayloadFailsChecksum) {
  auto b = ReadBytes(path());
  b[b.size() - 2] ^= 0x01;
  WriteBytes(path(), b);
  EXPECT_EQ(CodeOf(path()), ErrorCode::kMalformed);
}

TEST(ArchiveWriteTest, UnwritableDirectoryIsIoError) {
  std::vector<float> v = {1.0f};
  try {
    WriteArchive("/nonexistent_dir/x.ckpt", {}, {{"v", &v}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

}  // namespace
}  // namespace vpconv
