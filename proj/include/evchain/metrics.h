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

#ifndef EVCHAIN_METRICS_H_
#define EVCHAIN_METRICS_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/dataset.h"
#include "evchain/evidence.h"
#include "evchain/record.h"

namespace evchain::metrics {

// How multi-box hops are scored. kAllGold needs every gold box covered by a
// distinct matching prediction; kAnyGold needs at least one.
enum class MultiBoxMode { kAllGold, kAnyGold };

struct MatchConfig {
  double iou_threshold = 0.3;
  bool center_rule_enabled = true;
  bool threshold_inclusive = true;
  MultiBoxMode multi_box = MultiBoxMode::kAllGold;

  void Validate() const;  // kConfigInvalid unless 0 < iou_threshold <= 1
};

nlohmann::ordered_json MatchConfigToJson(const MatchConfig& cfg);

// Lowercase, drop ASCII punctuation, optionally drop the articles a/an/the as
// whole words, collapse whitespace.
std::string NormalizeText(std::string_view text, bool strip_articles);
inline std::string NormalizeAnswer(std::string_view text) { return NormalizeText(text, true); }

// Name of the normalization convention, embedded in report headers.
inline constexpr std::string_view kNormalizationConvention =
    "lower+strip-punct+strip-articles(a,an,the)+collapse-ws";

bool ExactMatch(std::string_view pred, const std::vector<std::string>& golds);

bool BoxMatch(const BoundingBox& pred, const BoundingBox& gold, const MatchConfig& cfg);

struct HopResult {
  bool image_correct = false;
  bool boxes_correct = false;

  friend bool operator==(const HopResult&, const HopResult&) = default;
};

HopResult HopLocalized(const EvidenceHop& pred, const std::string& gold_image_id,
                       const std::vector<BoundingBox>& gold_boxes, const MatchConfig& cfg);

// Ordered document chain equals the gold path (exact length, exact order).
bool ChainAccuracy(const EvidenceChain& pred, const QARecord& gold,
                   const dataset::CandidateSet& candset);

struct ExampleScore {
  std::string question_id;
  bool parse_failed = false;
  bool em = false;
  bool chain_correct = false;
  bool loc_correct = false;
  bool joint_correct = false;
  std::vector<HopResult> per_hop;

  friend bool operator==(const ExampleScore&, const ExampleScore&) = default;
};

// `out` is nullopt for a parse failure, which scores false everywhere.
ExampleScore ScoreExample(const QARecord& record, const dataset::CandidateSet& candset,
                          const std::optional<ModelOutput>& out, const MatchConfig& cfg);

struct Breakdown {
  std::size_t n = 0;
  std::size_t em = 0;
  std::size_t chain = 0;
  std::size_t loc = 0;

  double em_rate() const { return n ? double(em) / double(n) : 0; }
  double chain_rate() const { return n ? double(chain) / double(n) : 0; }
  double loc_rate() const { return n ? double(loc) / double(n) : 0; }
};

struct Report {
  std::size_t n_examples = 0;
  std::size_t n_failed_parses = 0;
  double em_rate = 0;
  double chain_acc = 0;
  double loc_acc = 0;
  double joint_acc = 0;
  // Supplementary per-hop diagnostics over all scored hops.
  std::size_t n_hops_scored = 0;
  double hop_image_rate = 0;
  double hop_box_rate = 0;
  std::map<std::string, Breakdown> by_question_type;
  std::map<int, Breakdown> by_hop_count;
};

// Scores and records are aligned by question_id. Throws kEmptyEvaluation on
// empty input and kMissingQuestion for scores without a record.
Report Aggregate(const std::vector<ExampleScore>& scores,
                 const std::vector<QARecord>& records);

nlohmann::ordered_json ScoreToJson(const ExampleScore& s);
ExampleScore ScoreFromJson(const nlohmann::json& j);
nlohmann::ordered_json ReportToJson(const Report& r, const MatchConfig& cfg);
std::string FormatSummary(const Report& r, const MatchConfig& cfg);

}  // namespace evchain::metrics

#endif  // EVCHAIN_METRICS_H_
