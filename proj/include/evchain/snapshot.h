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

#ifndef EVCHAIN_SNAPSHOT_H_
#define EVCHAIN_SNAPSHOT_H_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/geometry.h"

namespace evchain {

enum class ElementKind { kParagraph, kListItem, kTableCell, kCaption, kInfoboxText };

std::string_view ElementKindName(ElementKind kind);
std::optional<ElementKind> ParseElementKind(std::string_view name);

// A text-bearing element rendered on a page, with one rectangle per rendered
// line in raster pixel coordinates.
struct RenderedElement {
  std::string element_id;
  std::string text;
  ElementKind kind = ElementKind::kParagraph;
  std::vector<BoundingBox> line_rects;

  friend bool operator==(const RenderedElement&, const RenderedElement&) = default;
};

// Throws kInvariantViolation for blank text, no rects or invalid rects.
void ValidateElement(const RenderedElement& e);

// A captured page: full-page raster plus element geometry, both in the same
// raster pixel space.
struct PageSnapshot {
  std::string doc_id;
  std::string url;
  std::string image_path;  // PNG on disk; may be empty while in memory
  std::string png;         // encoded raster; may be empty when loaded from a sidecar
  int width = 0;
  int height = 0;
  double device_pixel_ratio = 1.0;
  std::string captured_at;  // ISO-8601 UTC
  std::vector<RenderedElement> elements;

  FrameSize frame() const { return {double(width), double(height)}; }
};

nlohmann::ordered_json SnapshotToJson(const PageSnapshot& s);
PageSnapshot SnapshotFromJson(const nlohmann::json& j);

// Writes <dir>/<stem>.png and the sidecar <dir>/<stem>.json where stem is
// the doc id with unsafe characters replaced. Returns the sidecar path and
// sets snapshot.image_path.
std::filesystem::path SaveSnapshot(const std::filesystem::path& dir, PageSnapshot& snapshot);
// Reads a sidecar; image_path is resolved relative to the sidecar.
PageSnapshot LoadSnapshot(const std::filesystem::path& sidecar);
// Loads every *.json sidecar in a directory, keyed by doc id.
std::vector<PageSnapshot> LoadSnapshotDir(const std::filesystem::path& dir);

}  // namespace evchain

#endif  // EVCHAIN_SNAPSHOT_H_
