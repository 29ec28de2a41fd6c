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

#include "evchain/record.h"

#include <set>

#include "evchain/error.h"

namespace evchain {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void Schema(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, what, path);
}

const json& Field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) Schema(key, "missing field");
  return *it;
}

std::string StringField(const json& obj, const char* key) {
  const json& v = Field(obj, key);
  if (!v.is_string()) Schema(key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

std::string_view QuestionTypeName(QuestionType type) {
  switch (type) {
    case QuestionType::kComparison: return "comparison";
    case QuestionType::kInference: return "inference";
    case QuestionType::kCompositional: return "compositional";
    case QuestionType::kBridgeComparison: return "bridge_comparison";
  }
  return "";
}

std::optional<QuestionType> ParseQuestionType(std::string_view name) {
  for (QuestionType t : kAllQuestionTypes) {
    if (QuestionTypeName(t) == name) return t;
  }
  return std::nullopt;
}

std::vector<std::string> QARecord::GoldDocs() const {
  std::vector<std::string> docs;
  std::set<std::string> seen;
  for (const GoldHop& hop : gold_chain) {
    if (seen.insert(hop.doc_id).second) docs.push_back(hop.doc_id);
  }
  return docs;
}

std::size_t QARecord::TotalBoxes() const {
  std::size_t n = 0;
  for (const GoldHop& hop : gold_chain) n += hop.boxes.size();
  return n;
}

std::string DefaultEntityChainKey(const std::vector<GoldHop>& chain) {
  std::string key;
  for (const GoldHop& hop : chain) {
    if (!key.empty()) key += "|";
    key += hop.doc_id;
  }
  return key;
}

ordered_json BoxToJson(const BoundingBox& b) {
  return ordered_json::array({b.x1, b.y1, b.x2, b.y2});
}

BoundingBox BoxFromJson(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) Schema(path, "expected [x1,y1,x2,y2]");
  for (std::size_t c = 0; c < 4; ++c) {
    if (!j[c].is_number()) {
      Schema(path + "[" + std::to_string(c) + "]", "coordinate is not a number");
    }
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

ordered_json RecordToJson(const QARecord& r) {
  ordered_json j;
  j["question_id"] = r.question_id;
  j["question"] = r.question;
  j["gold_answers"] = r.gold_answers;
  j["question_type"] = r.question_type;
  j["hop_count"] = r.hop_count;
  j["entity_chain_key"] = r.entity_chain_key;
  ordered_json chain = ordered_json::array();
  for (const GoldHop& hop : r.gold_chain) {
    ordered_json h;
    h["doc_id"] = hop.doc_id;
    ordered_json boxes = ordered_json::array();
    for (const BoundingBox& b : hop.boxes) boxes.push_back(BoxToJson(b));
    h["boxes"] = std::move(boxes);
    chain.push_back(std::move(h));
  }
  j["gold_chain"] = std::move(chain);
  return j;
}

QARecord RecordFromJson(const json& j) {
  if (!j.is_object()) Schema("$", "record must be an object");
  QARecord r;
  r.question_id = StringField(j, "question_id");
  r.question = StringField(j, "question");
  const json& answers = Field(j, "gold_answers");
  if (!answers.is_array() || answers.empty()) {
    Schema("gold_answers", "expected a non-empty array of strings");
  }
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (!answers[i].is_string()) {
      Schema("gold_answers[" + std::to_string(i) + "]", "expected a string");
    }
    r.gold_answers.push_back(answers[i].get<std::string>());
  }
  r.question_type = StringField(j, "question_type");
  const json& hops = Field(j, "hop_count");
  if (!hops.is_number_integer()) Schema("hop_count", "expected an integer");
  r.hop_count = hops.get<int>();
  r.entity_chain_key = StringField(j, "entity_chain_key");

  const json& chain = Field(j, "gold_chain");
  if (!chain.is_array()) Schema("gold_chain", "expected an array");
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const std::string path = "gold_chain[" + std::to_string(i) + "]";
    const json& h = chain[i];
    if (!h.is_object()) Schema(path, "expected an object");
    GoldHop hop;
    auto doc = h.find("doc_id");
    if (doc == h.end() || !doc->is_string()) Schema(path + ".doc_id", "expected a string");
    hop.doc_id = doc->get<std::string>();
    auto boxes = h.find("boxes");
    if (boxes == h.end() || !boxes->is_array()) {
      Schema(path + ".boxes", "expected an array of boxes");
    }
    for (std::size_t k = 0; k < boxes->size(); ++k) {
      hop.boxes.push_back(
          BoxFromJson((*boxes)[k], path + ".boxes[" + std::to_string(k) + "]"));
    }
    r.gold_chain.push_back(std::move(hop));
  }
  return r;
}

}  // namespace evchain
