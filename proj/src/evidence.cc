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

#include "evchain/evidence.h"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <nlohmann/json.hpp>

#include "evchain/error.h"

namespace evchain {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kLabelPrefix = "img_";

std::string HopPath(std::size_t i) { return "chain[" + std::to_string(i) + "]"; }

[[noreturn]] void Schema(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, what, path);
}

[[noreturn]] void Invariant(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kInvariantViolation, what, path);
}

bool IsBlank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

const json& Field(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) Schema(path, "missing field");
  return *it;
}

BoundingBox ParseCoordinates(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) Schema(path, "expected [x1,y1,x2,y2]");
  double v[4];
  for (std::size_t c = 0; c < 4; ++c) {
    if (!j[c].is_number()) {
      Schema(path + "[" + std::to_string(c) + "]", "coordinate is not a number");
    }
    v[c] = j[c].get<double>();
  }
  return {v[0], v[1], v[2], v[3]};
}

void CheckBox(const BoundingBox& b, const std::string& path) {
  if (!IsValidBox(b)) Invariant(path, "box must be finite with x1<x2 and y1<y2");
}

}  // namespace

std::string ImageLabel(std::size_t index) {
  return std::string(kLabelPrefix) + std::to_string(index);
}

std::optional<std::size_t> ParseImageLabel(std::string_view label) {
  if (!label.starts_with(kLabelPrefix)) return std::nullopt;
  std::string_view digits = label.substr(kLabelPrefix.size());
  if (digits.empty() || (digits.size() > 1 && digits.front() == '0')) {
    return std::nullopt;
  }
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

void ValidateChain(const EvidenceChain& chain) {
  if (chain.hops.empty()) Invariant("chain", "chain must have at least one hop");
  for (std::size_t i = 0; i < chain.hops.size(); ++i) {
    const EvidenceHop& hop = chain.hops[i];
    const std::string path = HopPath(i);
    if (hop.hop_index != static_cast<int>(i) + 1) {
      Invariant(path + ".hop", "hop indices must be 1..T in order");
    }
    if (!ParseImageLabel(hop.image_id)) {
      Invariant(path + ".image_id", "expected img_<k>, got \"" + hop.image_id + "\"");
    }
    if (hop.boxes.empty()) Invariant(path + ".boxes", "hop needs at least one box");
    for (std::size_t k = 0; k < hop.boxes.size(); ++k) {
      CheckBox(hop.boxes[k], path + ".boxes[" + std::to_string(k) + "]");
    }
  }
}

void ValidateModelOutput(const ModelOutput& out) {
  if (IsBlank(out.answer)) Invariant("answer", "answer is empty");
  ValidateChain(out.chain);
}

ModelOutput ParseChain(std::string_view text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) Schema("$", "document is not valid JSON");
  if (!doc.is_object()) Schema("$", "document must be an object");

  ModelOutput out;
  const json& answer = Field(doc, "answer", "answer");
  if (!answer.is_string()) Schema("answer", "expected a string");
  out.answer = answer.get<std::string>();
  if (IsBlank(out.answer)) Invariant("answer", "answer is empty");

  const json& chain = Field(doc, "chain", "chain");
  if (!chain.is_array()) Schema("chain", "expected an array of hops");
  if (chain.empty()) Schema("chain", "chain must have at least one hop");

  for (std::size_t i = 0; i < chain.size(); ++i) {
    const std::string path = HopPath(i);
    const json& h = chain[i];
    if (!h.is_object()) Schema(path, "hop must be an object");
    EvidenceHop hop;

    const json& index = Field(h, "hop", path + ".hop");
    if (!index.is_number_integer()) Schema(path + ".hop", "expected an integer");
    hop.hop_index = index.get<int>();
    if (hop.hop_index != static_cast<int>(i) + 1) {
      Invariant(path + ".hop", "hop indices must be 1..T in order");
    }

    const json& image_id = Field(h, "image_id", path + ".image_id");
    if (!image_id.is_string() || !ParseImageLabel(image_id.get<std::string>())) {
      Schema(path + ".image_id", "expected a label of the form img_<k>");
    }
    hop.image_id = image_id.get<std::string>();

    const json& boxes = Field(h, "boxes", path + ".boxes");
    if (!boxes.is_array()) Schema(path + ".boxes", "expected an array of boxes");
    if (boxes.empty()) Schema(path + ".boxes", "hop needs at least one box");
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      const std::string box_path = path + ".boxes[" + std::to_string(k) + "]";
      BoundingBox b = ParseCoordinates(boxes[k], box_path);
      CheckBox(b, box_path);
      hop.boxes.push_back(b);
    }

    const json& sub_question = Field(h, "sub_question", path + ".sub_question");
    if (!sub_question.is_string()) Schema(path + ".sub_question", "expected a string");
    hop.sub_question = sub_question.get<std::string>();

    out.chain.hops.push_back(std::move(hop));
  }
  return out;
}

std::string EmitChain(const ModelOutput& out) {
  ValidateModelOutput(out);
  ordered_json doc;
  doc["answer"] = out.answer;
  ordered_json chain = ordered_json::array();
  for (const EvidenceHop& hop : out.chain.hops) {
    ordered_json h;
    h["hop"] = hop.hop_index;
    h["image_id"] = hop.image_id;
    ordered_json boxes = ordered_json::array();
    for (const BoundingBox& b : hop.boxes) {
      boxes.push_back(ordered_json::array({b.x1, b.y1, b.x2, b.y2}));
    }
    h["boxes"] = std::move(boxes);
    h["sub_question"] = hop.sub_question;
    chain.push_back(std::move(h));
  }
  doc["chain"] = std::move(chain);
  return doc.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

}  // namespace evchain
