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

#ifndef EVCHAIN_GEOMETRY_H_
#define EVCHAIN_GEOMETRY_H_

#include <optional>

namespace evchain {

// Axis-aligned rectangle in screenshot pixel coordinates. Origin is the
// top-left corner, x grows rightward and y downward. Membership and clipping
// use closed intervals on all four edges.
struct BoundingBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Raster or frame dimensions in pixels.
struct FrameSize {
  double width = 0;
  double height = 0;

  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

// True when all coordinates are finite and the box has positive area.
bool IsValidBox(const BoundingBox& b);

// True when the box is valid and lies inside [0,W]x[0,H].
bool IsInFrame(const BoundingBox& b, FrameSize frame);

// Throws Error(kInvalidBox) unless IsValidBox(b).
void ValidateBox(const BoundingBox& b);

double BoxArea(const BoundingBox& b);

// Intersection over union; 0 for disjoint boxes and for boxes that only
// share an edge.
double Iou(const BoundingBox& a, const BoundingBox& b);

// Whether the center of `pred` lies in `gold`, edges included.
bool CenterInside(const BoundingBox& pred, const BoundingBox& gold);

// Intersection of two boxes, or nullopt when it has zero area.
std::optional<BoundingBox> Intersect(const BoundingBox& a,
                                     const BoundingBox& b);

// Smallest box containing both.
BoundingBox Union(const BoundingBox& a, const BoundingBox& b);

// Intersection of `b` with [0,0,W,H]; nullopt when nothing of positive area
// remains (the region is out of frame and must be discarded).
std::optional<BoundingBox> ClipToFrame(const BoundingBox& b, FrameSize frame);

// Multiplies every coordinate by `s`.
BoundingBox Scale(const BoundingBox& b, double s);

}  // namespace evchain

#endif  // EVCHAIN_GEOMETRY_H_
