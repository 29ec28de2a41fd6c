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

#include "evchain/snapshot.h"

#include <algorithm>
#include <cctype>

#include "evchain/error.h"
#include "evchain/jsonl.h"
#include "evchain/record.h"

namespace evchain {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

}  // namespace

std::string_view ElementKindName(ElementKind kind) {
  switch (kind) {
    case ElementKind::kParagraph: return "paragraph";
    case ElementKind::kListItem: return "list_item";
    case ElementKind::kTableCell: return "table_cell";
    case ElementKind::kCaption: return "caption";
    case ElementKind::kInfoboxText: return "infobox_text";
  }
  return "";
}

std::optional<ElementKind> ParseElementKind(std::string_view name) {
  for (ElementKind k : {ElementKind::kParagraph, ElementKind::kListItem, ElementKind::kTableCell,
                        ElementKind::kCaption, ElementKind::kInfoboxText}) {
    if (ElementKindName(k) == name) return k;
  }
  return std::nullopt;
}

void ValidateElement(const RenderedElement& e) {
  const bool blank = std::all_of(e.text.begin(), e.text.end(),
                                 [](unsigned char c) { return std::isspace(c); });
  if (blank) throw Error(ErrorCode::kInvariantViolation, "blank text", e.element_id);
  if (e.line_rects.empty()) {
    throw Error(ErrorCode::kInvariantViolation, "no line rects", e.element_id);
  }
  for (const auto& r : e.line_rects) {
    if (!IsValidBox(r)) throw Error(ErrorCode::kInvariantViolation, "invalid line rect", e.element_id);
  }
}

ordered_json SnapshotToJson(const PageSnapshot& s) {
  ordered_json j;
  j["doc_id"] = s.doc_id;
  j["url"] = s.url;
  j["image_path"] = s.image_path;
  j["width"] = s.width;
  j["height"] = s.height;
  j["device_pixel_ratio"] = s.device_pixel_ratio;
  j["captured_at"] = s.captured_at;
  ordered_json elements = ordered_json::array();
  for (const auto& e : s.elements) {
    ordered_json rects = ordered_json::array();
    for (const auto& r : e.line_rects) rects.push_back(BoxToJson(r));
    elements.push_back({{"element_id", e.element_id},
                        {"kind", ElementKindName(e.kind)},
                        {"text", e.text},
                        {"line_rects", std::move(rects)}});
  }
  j["elements"] = std::move(elements);
  return j;
}

PageSnapshot SnapshotFromJson(const json& j) {
  PageSnapshot s;
  try {
    s.doc_id = j.at("doc_id").get<std::string>();
    s.url = j.value("url", std::string());
    s.image_path = j.value("image_path", std::string());
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.device_pixel_ratio = j.value("device_pixel_ratio", 1.0);
    s.captured_at = j.value("captured_at", std::string());
    const json& elements = j.at("elements");
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const json& e = elements[i];
      const std::string path = "elements[" + std::to_string(i) + "]";
      RenderedElement el;
      el.element_id = e.at("element_id").get<std::string>();
      el.text = e.at("text").get<std::string>();
      auto kind = ParseElementKind(e.at("kind").get<std::string>());
      if (!kind) throw Error(ErrorCode::kSchemaViolation, "unknown kind", path + ".kind");
      el.kind = *kind;
      const json& rects = e.at("line_rects");
      for (std::size_t k = 0; k < rects.size(); ++k) {
        el.line_rects.push_back(
            BoxFromJson(rects[k], path + ".line_rects[" + std::to_string(k) + "]"));
      }
      s.elements.push_back(std::move(el));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), "snapshot");
  }
  if (s.width <= 0 || s.height <= 0) {
    throw Error(ErrorCode::kInvariantViolation, "snapshot has no size", s.doc_id);
  }
  return s;
}

std::filesystem::path SaveSnapshot(const std::filesystem::path& dir, PageSnapshot& snapshot) {
  const std::string stem = SafeFileStem(snapshot.doc_id);
  const auto png_path = dir / (stem + ".png");
  const auto sidecar = dir / (stem + ".json");
  if (!snapshot.png.empty()) WriteFile(png_path, snapshot.png);
  snapshot.image_path = png_path.filename().string();
  WriteFile(sidecar, SnapshotToJson(snapshot).dump(1, ' ', false,
                                                   ordered_json::error_handler_t::replace));
  snapshot.image_path = png_path.string();
  return sidecar;
}

PageSnapshot LoadSnapshot(const std::filesystem::path& sidecar) {
  json j = json::parse(ReadFile(sidecar), nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kSchemaViolation, "invalid JSON", sidecar.string());
  }
  PageSnapshot s = SnapshotFromJson(j);
  if (!s.image_path.empty()) {
    std::filesystem::path image = s.image_path;
    if (image.is_relative()) s.image_path = (sidecar.parent_path() / image).string();
  }
  return s;
}

std::vector<PageSnapshot> LoadSnapshotDir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> sidecars;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      sidecars.push_back(entry.path());
    }
  }
  std::sort(sidecars.begin(), sidecars.end());
  std::vector<PageSnapshot> out;
  for (const auto& p : sidecars) out.push_back(LoadSnapshot(p));
  return out;
}

}  // namespace evchain
