/* Copyright 2026 The evchain Authors. All Rights Reserved.

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

#include "evchain/geometry.h"

#include <random>

#include <gtest/gtest.h>

#include "evchain/error.h"

namespace evchain {
namespace {

// Independent oracle: count unit cells covered on an integer raster.
double PixelCountIou(const BoundingBox& a, const BoundingBox& b, int frame) {
  long inter = 0, uni = 0;
  for (int y = 0; y < frame; ++y) {
    for (int x = 0; x < frame; ++x) {
      const bool in_a = x >= a.x1 && x + 1 <= a.x2 && y >= a.y1 && y + 1 <= a.y2;
      const bool in_b = x >= b.x1 && x + 1 <= b.x2 && y >= b.y1 && y + 1 <= b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

BoundingBox RandomIntBox(std::mt19937_64& rng, int frame) {
  std::uniform_int_distribution<int> d(0, frame);
  for (;;) {
    int x1 = d(rng), x2 = d(rng), y1 = d(rng), y2 = d(rng);
    if (x1 == x2 || y1 == y2) continue;
    return {double(std::min(x1, x2)), double(std::min(y1, y2)), double(std::max(x1, x2)),
            double(std::max(y1, y2))};
  }
}

TEST(BoxAreaTest, Examples) {
  EXPECT_EQ(BoxArea({0, 0, 10, 10}), 100.0);
  EXPECT_DOUBLE_EQ(BoxArea({2, 3, 2.5, 5}), 1.0);
  try {
    BoxArea({5, 5, 5, 9});
    FAIL() << "zero-width box accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidBox);
  }
}

TEST(BoxAreaTest, RejectsNonFinite) {
  EXPECT_THROW(BoxArea({0, 0, std::numeric_limits<double>::infinity(), 1}), Error);
  EXPECT_THROW(BoxArea({0, 0, std::nan(""), 1}), Error);
  EXPECT_THROW(BoxArea({3, 3, 1, 1}), Error);
}

TEST(IouTest, Examples) {
  EXPECT_EQ(Iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_EQ(Iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_NEAR(Iou({0, 0, 10, 10}, {5, 5, 15, 15}), 25.0 / 175.0, 1e-12);
  EXPECT_NEAR(PixelCountIou({0, 0, 10, 10}, {5, 5, 15, 15}, 20), 25.0 / 175.0, 1e-12);
}

TEST(IouTest, SharedEdgeIsZero) {
  EXPECT_EQ(Iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
}

TEST(IouTest, InvalidBoxesRejected) {
  EXPECT_THROW(Iou({0, 0, 0, 10}, {0, 0, 10, 10}), Error);
  EXPECT_THROW(Iou({0, 0, 10, 10}, {0, 10, 10, 10}), Error);
}

TEST(IouTest, MatchesPixelCountingOracle) {
  std::mt19937_64 rng(20260101);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox a = RandomIntBox(rng, 64), b = RandomIntBox(rng, 64);
    ASSERT_NEAR(Iou(a, b), PixelCountIou(a, b, 64), 1e-9) << i;
  }
}

TEST(IouTest, SymmetricBoundedAndReflexive) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 2000; ++i) {
    BoundingBox a{u(rng), u(rng), 0, 0}, b{u(rng), u(rng), 0, 0};
    a.x2 = a.x1 + 1 + u(rng);
    a.y2 = a.y1 + 1 + u(rng);
    b.x2 = b.x1 + 1 + u(rng);
    b.y2 = b.y1 + 1 + u(rng);
    const double ab = Iou(a, b);
    EXPECT_EQ(ab, Iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_DOUBLE_EQ(Iou(a, a), 1.0);
  }
}

TEST(CenterInsideTest, Examples) {
  EXPECT_TRUE(CenterInside({4, 4, 6, 6}, {0, 0, 10, 10}));
  EXPECT_FALSE(CenterInside({20, 20, 30, 30}, {0, 0, 10, 10}));
  // Center (10,10) sits on the closed boundary.
  EXPECT_TRUE(CenterInside({5, 5, 15, 15}, {0, 0, 10, 10}));
  EXPECT_FALSE(CenterInside({5, 5, 15.2, 15}, {0, 0, 10, 10}));
  EXPECT_THROW(CenterInside({5, 5, 5, 15}, {0, 0, 10, 10}), Error);
}

TEST(ClipToFrameTest, Examples) {
  EXPECT_EQ(ClipToFrame({-5, 10, 50, 60}, {100, 100}), (BoundingBox{0, 10, 50, 60}));
  EXPECT_EQ(ClipToFrame({10, 10, 20, 20}, {100, 100}), (BoundingBox{10, 10, 20, 20}));
  EXPECT_FALSE(ClipToFrame({150, 150, 200, 200}, {100, 100}).has_value());
  // Touching the frame edge only leaves zero area.
  EXPECT_FALSE(ClipToFrame({100, 0, 120, 10}, {100, 100}).has_value());
  EXPECT_THROW(ClipToFrame({0, 0, 1, 1}, {0, 100}), Error);
}

TEST(ClipToFrameTest, Idempotent) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 150);
  for (int i = 0; i < 1000; ++i) {
    double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    BoundingBox b{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2) + 0.01,
                  std::max(y1, y2) + 0.01};
    auto once = ClipToFrame(b, {100, 80});
    if (!once) continue;
    EXPECT_TRUE(IsInFrame(*once, {100, 80}));
    EXPECT_EQ(ClipToFrame(*once, {100, 80}), once);
  }
}

}  // namespace
}  // namespace evchain
