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

#ifndef EVCHAIN_DATASET_H_
#define EVCHAIN_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/geometry.h"
#include "evchain/record.h"

namespace evchain::dataset {

struct CandidateDocument {
  std::string doc_id;
  std::string image_path;
  int width = 0;
  int height = 0;
  std::optional<std::string> group_id;
  std::map<std::string, std::string> source_meta;

  FrameSize frame() const { return {double(width), double(height)}; }
};

// The screenshot corpus. Documents are keyed by doc_id; `groups` lists the
// members of each group (a slide deck) in doc_id order.
class DocumentPool {
 public:
  DocumentPool() = default;
  explicit DocumentPool(std::vector<CandidateDocument> docs);

  // Throws kInvalidArgument on duplicate ids or non-positive dims.
  void Add(CandidateDocument doc);

  const CandidateDocument* Find(const std::string& doc_id) const;
  const CandidateDocument& Get(const std::string& doc_id) const;  // kGoldMissing
  bool Contains(const std::string& doc_id) const { return Find(doc_id) != nullptr; }

  const std::map<std::string, CandidateDocument>& documents() const { return documents_; }
  const std::map<std::string, std::vector<std::string>>& groups() const { return groups_; }
  std::size_t size() const { return documents_.size(); }

 private:
  std::map<std::string, CandidateDocument> documents_;
  std::map<std::string, std::vector<std::string>> groups_;
};

enum class DistractorPolicy { kSameGroup, kGlobalPool };

std::string_view PolicyName(DistractorPolicy policy);
std::optional<DistractorPolicy> ParsePolicy(std::string_view name);

struct CandidateEntry {
  std::string label;
  std::string doc_id;

  friend bool operator==(const CandidateEntry&, const CandidateEntry&) = default;
};

// The shuffled top-k candidates shown to the model. Labels are img_0..img_{k-1}
// in positional order; `gold_map` sends each gold doc id to its label.
struct CandidateSet {
  std::string question_id;
  std::vector<CandidateEntry> ordered;
  std::map<std::string, std::string> gold_map;
  std::uint64_t seed = 0;
  DistractorPolicy policy = DistractorPolicy::kGlobalPool;

  std::size_t k() const { return ordered.size(); }
  // doc id behind a label, or nullptr for unknown labels.
  const std::string* DocForLabel(const std::string& label) const;

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

// Checks labels, duplicates and gold coverage against `record`.
void ValidateCandidateSet(const CandidateSet& set, const QARecord& record);

// Gold docs plus k-|gold| distractors drawn uniformly without replacement,
// then uniformly shuffled. Deterministic in (seed, question_id).
CandidateSet BuildCandidateSet(const QARecord& record, const DocumentPool& pool,
                               std::size_t k, std::uint64_t seed,
                               DistractorPolicy policy);

// Entities (doc ids) ordered by the number of distinct questions that need
// them as evidence, descending; ties alphabetical.
std::vector<std::pair<std::string, std::size_t>> RankEntities(
    const std::vector<std::vector<std::string>>& entities_per_question);
std::vector<std::pair<std::string, std::size_t>> RankEntities(
    const std::vector<QARecord>& records);

struct Split {
  std::vector<QARecord> train;
  std::vector<QARecord> test;
};

// Partitions at the entity_chain_key level so that no key lands on both
// sides. Record order inside each side follows the input order.
Split SplitEntityChain(const std::vector<QARecord>& records, double test_fraction,
                       std::uint64_t seed);

struct DatasetStats {
  std::size_t questions = 0;
  double avg_question_length = 0;  // whitespace tokens
  double avg_answer_length = 0;    // whitespace tokens of the first gold answer
  std::size_t unique_screenshots = 0;
  std::size_t total_boxes = 0;
  double avg_boxes = 0;
  std::map<int, std::size_t> hop_counts;
  std::map<std::string, std::size_t> type_counts;  // all four types present

  double HopPercent(int hops) const;
  double TypePercent(const std::string& type) const;
};

// Table-style statistics; throws kEmptyDataset on empty input.
DatasetStats ComputeStats(const std::vector<QARecord>& records);
nlohmann::ordered_json StatsToJson(const DatasetStats& stats);

struct Rejection {
  std::string question_id;
  std::string reason;  // machine-readable code
  std::string detail;
};

struct ValidationResult {
  std::vector<QARecord> accepted;
  std::vector<Rejection> rejected;
};

// Reason codes: missing-document, hop-count-mismatch, unknown-question-type,
// empty-chain, empty-hop, zero-area, out-of-frame.
ValidationResult ValidateDataset(const std::vector<QARecord>& records,
                                 const DocumentPool& pool);

// File formats (line-delimited JSON).
std::vector<QARecord> LoadDataset(const std::filesystem::path& path);
void SaveDataset(const std::filesystem::path& path, const std::vector<QARecord>& records);

DocumentPool LoadPool(const std::filesystem::path& path);
void SavePool(const std::filesystem::path& path, const DocumentPool& pool);

nlohmann::ordered_json CandidateSetToJson(const CandidateSet& set);
// gold_map is not stored; it is re-derived from `record`.
CandidateSet CandidateSetFromJson(const nlohmann::json& j);
void AttachGoldMap(CandidateSet& set, const QARecord& record);

std::map<std::string, CandidateSet> LoadCandidateSets(
    const std::filesystem::path& path, const std::vector<QARecord>& records);
void SaveCandidateSets(const std::filesystem::path& path,
                       const std::vector<CandidateSet>& sets);

}  // namespace evchain::dataset

#endif  // EVCHAIN_DATASET_H_
