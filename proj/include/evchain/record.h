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

#ifndef EVCHAIN_RECORD_H_
#define EVCHAIN_RECORD_H_

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/geometry.h"

namespace evchain {

enum class QuestionType { kComparison, kInference, kCompositional, kBridgeComparison };

inline constexpr std::array<QuestionType, 4> kAllQuestionTypes = {
    QuestionType::kComparison, QuestionType::kInference,
    QuestionType::kCompositional, QuestionType::kBridgeComparison};

std::string_view QuestionTypeName(QuestionType type);
std::optional<QuestionType> ParseQuestionType(std::string_view name);

struct GoldHop {
  std::string doc_id;
  std::vector<BoundingBox> boxes;

  friend bool operator==(const GoldHop&, const GoldHop&) = default;
};

// One multi-hop question with its gold evidence chain over document ids.
// `question_type` is kept as text so that datasets with unknown types can be
// loaded and then rejected by validation.
struct QARecord {
  std::string question_id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::string question_type;
  int hop_count = 0;
  std::string entity_chain_key;
  std::vector<GoldHop> gold_chain;

  // Distinct gold doc ids in first-appearance order.
  std::vector<std::string> GoldDocs() const;
  std::size_t TotalBoxes() const;

  friend bool operator==(const QARecord&, const QARecord&) = default;
};

// Ordered concatenation of gold doc ids, used when the source corpus has no
// explicit entity-chain key.
std::string DefaultEntityChainKey(const std::vector<GoldHop>& chain);

nlohmann::ordered_json BoxToJson(const BoundingBox& b);
// Parses [x1,y1,x2,y2] without checking validity. Throws kSchemaViolation.
BoundingBox BoxFromJson(const nlohmann::json& j, const std::string& path);

nlohmann::ordered_json RecordToJson(const QARecord& r);
QARecord RecordFromJson(const nlohmann::json& j);

}  // namespace evchain

#endif  // EVCHAIN_RECORD_H_
