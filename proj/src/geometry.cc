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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evchain/error.h"

namespace evchain {

bool IsValidBox(const BoundingBox& b) {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 < b.x2 && b.y1 < b.y2;
}

bool IsInFrame(const BoundingBox& b, FrameSize frame) {
  return IsValidBox(b) && b.x1 >= 0 && b.y1 >= 0 && b.x2 <= frame.width &&
         b.y2 <= frame.height;
}

void ValidateBox(const BoundingBox& b) {
  if (IsValidBox(b)) return;
  std::ostringstream os;
  os << "[" << b.x1 << "," << b.y1 << "," << b.x2 << "," << b.y2 << "]";
  throw Error(ErrorCode::kInvalidBox, os.str());
}

double BoxArea(const BoundingBox& b) {
  ValidateBox(b);
  return (b.x2 - b.x1) * (b.y2 - b.y1);
}

double Iou(const BoundingBox& a, const BoundingBox& b) {
  const double area_a = BoxArea(a);
  const double area_b = BoxArea(b);
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

bool CenterInside(const BoundingBox& pred, const BoundingBox& gold) {
  ValidateBox(pred);
  ValidateBox(gold);
  const double cx = (pred.x1 + pred.x2) / 2;
  const double cy = (pred.y1 + pred.y2) / 2;
  return gold.x1 <= cx && cx <= gold.x2 && gold.y1 <= cy && cy <= gold.y2;
}

std::optional<BoundingBox> Intersect(const BoundingBox& a,
                                     const BoundingBox& b) {
  BoundingBox out{std::max(a.x1, b.x1), std::max(a.y1, b.y1),
                  std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
  if (!IsValidBox(out)) return std::nullopt;
  return out;
}

BoundingBox Union(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

std::optional<BoundingBox> ClipToFrame(const BoundingBox& b, FrameSize frame) {
  if (!(frame.width > 0) || !(frame.height > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "frame must have positive size");
  }
  return Intersect(b, {0, 0, frame.width, frame.height});
}

BoundingBox Scale(const BoundingBox& b, double s) {
  return {b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s};
}

}  // namespace evchain
