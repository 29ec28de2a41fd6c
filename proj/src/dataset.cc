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

#include "evchain/dataset.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "evchain/error.h"
#include "evchain/evidence.h"
#include "evchain/jsonl.h"
#include "evchain/random.h"

namespace evchain::dataset {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t CountTokens(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n;
}

}  // namespace

DocumentPool::DocumentPool(std::vector<CandidateDocument> docs) {
  for (auto& d : docs) Add(std::move(d));
}

void DocumentPool::Add(CandidateDocument doc) {
  if (doc.width <= 0 || doc.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "document " + doc.doc_id + " has no size");
  }
  if (documents_.count(doc.doc_id)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate doc_id " + doc.doc_id);
  }
  if (doc.group_id) {
    auto& members = groups_[*doc.group_id];
    members.insert(std::lower_bound(members.begin(), members.end(), doc.doc_id),
                   doc.doc_id);
  }
  std::string id = doc.doc_id;
  documents_.emplace(std::move(id), std::move(doc));
}

const CandidateDocument* DocumentPool::Find(const std::string& doc_id) const {
  auto it = documents_.find(doc_id);
  return it == documents_.end() ? nullptr : &it->second;
}

const CandidateDocument& DocumentPool::Get(const std::string& doc_id) const {
  if (const auto* d = Find(doc_id)) return *d;
  throw Error(ErrorCode::kGoldMissing, "document " + doc_id + " not in pool");
}

std::string_view PolicyName(DistractorPolicy policy) {
  return policy == DistractorPolicy::kSameGroup ? "same-group" : "global-pool";
}

std::optional<DistractorPolicy> ParsePolicy(std::string_view name) {
  if (name == "same-group") return DistractorPolicy::kSameGroup;
  if (name == "global-pool") return DistractorPolicy::kGlobalPool;
  return std::nullopt;
}

const std::string* CandidateSet::DocForLabel(const std::string& label) const {
  auto index = ParseImageLabel(label);
  if (!index || *index >= ordered.size()) return nullptr;
  return &ordered[*index].doc_id;
}

void ValidateCandidateSet(const CandidateSet& set, const QARecord& record) {
  std::set<std::string> docs;
  for (std::size_t i = 0; i < set.ordered.size(); ++i) {
    if (set.ordered[i].label != ImageLabel(i)) {
      throw Error(ErrorCode::kInconsistency, "label out of position",
                  "ordered[" + std::to_string(i) + "].label");
    }
    if (!docs.insert(set.ordered[i].doc_id).second) {
      throw Error(ErrorCode::kInconsistency, "duplicate doc " + set.ordered[i].doc_id);
    }
  }
  for (const std::string& doc : record.GoldDocs()) {
    auto it = set.gold_map.find(doc);
    if (it == set.gold_map.end()) {
      throw Error(ErrorCode::kInconsistency, "gold doc " + doc + " has no label");
    }
    const std::string* at = set.DocForLabel(it->second);
    if (at == nullptr || *at != doc) {
      throw Error(ErrorCode::kInconsistency, "gold map disagrees with order for " + doc);
    }
  }
}

CandidateSet BuildCandidateSet(const QARecord& record, const DocumentPool& pool,
                               std::size_t k, std::uint64_t seed,
                               DistractorPolicy policy) {
  const std::vector<std::string> gold = record.GoldDocs();
  if (gold.empty()) {
    throw Error(ErrorCode::kInvalidArgument, record.question_id + " has no gold docs");
  }
  if (k < gold.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k=" + std::to_string(k) + " is smaller than the gold chain");
  }
  for (const std::string& doc : gold) pool.Get(doc);

  const std::set<std::string> gold_set(gold.begin(), gold.end());
  std::vector<std::string> eligible;
  if (policy == DistractorPolicy::kGlobalPool) {
    for (const auto& [id, doc] : pool.documents()) {
      if (!gold_set.count(id)) eligible.push_back(id);
    }
  } else {
    std::set<std::string> members;
    for (const std::string& doc : gold) {
      const auto& group = pool.Get(doc).group_id;
      if (!group) {
        throw Error(ErrorCode::kInsufficientPool,
                    "gold doc " + doc + " has no group for same-group sampling");
      }
      const auto& ids = pool.groups().at(*group);
      members.insert(ids.begin(), ids.end());
    }
    for (const std::string& id : members) {
      if (!gold_set.count(id)) eligible.push_back(id);
    }
  }
  const std::size_t needed = k - gold.size();
  if (eligible.size() < needed) {
    throw Error(ErrorCode::kInsufficientPool,
                "need " + std::to_string(needed) + " distractors for " +
                    record.question_id + ", have " + std::to_string(eligible.size()));
  }

  auto rng = MakeRng(seed, record.question_id);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  std::vector<std::string> docs = gold;
  docs.insert(docs.end(), eligible.begin(),
              eligible.begin() + static_cast<std::ptrdiff_t>(needed));
  std::shuffle(docs.begin(), docs.end(), rng);

  CandidateSet set;
  set.question_id = record.question_id;
  set.seed = seed;
  set.policy = policy;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    set.ordered.push_back({ImageLabel(i), docs[i]});
    if (gold_set.count(docs[i])) set.gold_map[docs[i]] = ImageLabel(i);
  }
  return set;
}

std::vector<std::pair<std::string, std::size_t>> RankEntities(
    const std::vector<std::vector<std::string>>& entities_per_question) {
  std::map<std::string, std::size_t> counts;
  for (const auto& entities : entities_per_question) {
    std::set<std::string> distinct(entities.begin(), entities.end());
    for (const auto& e : distinct) ++counts[e];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

std::vector<std::pair<std::string, std::size_t>> RankEntities(
    const std::vector<QARecord>& records) {
  std::vector<std::vector<std::string>> entities;
  entities.reserve(records.size());
  for (const auto& r : records) entities.push_back(r.GoldDocs());
  return RankEntities(entities);
}

Split SplitEntityChain(const std::vector<QARecord>& records, double test_fraction,
                       std::uint64_t seed) {
  if (!(test_fraction >= 0 && test_fraction <= 1)) {
    throw Error(ErrorCode::kInvalidArgument, "test_fraction must be in [0,1]");
  }
  std::map<std::string, std::size_t> key_sizes;
  for (const auto& r : records) ++key_sizes[r.entity_chain_key];

  std::vector<std::string> keys;
  keys.reserve(key_sizes.size());
  for (const auto& [key, n] : key_sizes) keys.push_back(key);
  auto rng = MakeRng(seed, "entity-chain-split");
  std::shuffle(keys.begin(), keys.end(), rng);

  // Greedy fill in shuffled order: a key goes to test whenever that moves the
  // test size closer to the target.
  const double target = test_fraction * static_cast<double>(records.size());
  double test_size = 0;
  std::set<std::string> test_keys;
  for (const auto& key : keys) {
    const double with = test_size + static_cast<double>(key_sizes[key]);
    if (std::abs(with - target) < std::abs(test_size - target)) {
      test_keys.insert(key);
      test_size = with;
    }
  }

  Split split;
  for (const auto& r : records) {
    (test_keys.count(r.entity_chain_key) ? split.test : split.train).push_back(r);
  }
  return split;
}

double DatasetStats::HopPercent(int hops) const {
  auto it = hop_counts.find(hops);
  if (it == hop_counts.end() || questions == 0) return 0;
  return 100.0 * static_cast<double>(it->second) / static_cast<double>(questions);
}

double DatasetStats::TypePercent(const std::string& type) const {
  auto it = type_counts.find(type);
  if (it == type_counts.end() || questions == 0) return 0;
  return 100.0 * static_cast<double>(it->second) / static_cast<double>(questions);
}

DatasetStats ComputeStats(const std::vector<QARecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyDataset, "no records");
  DatasetStats s;
  for (QuestionType t : kAllQuestionTypes) s.type_counts[std::string(QuestionTypeName(t))] = 0;
  std::size_t question_tokens = 0;
  std::size_t answer_tokens = 0;
  std::set<std::string> screenshots;
  for (const auto& r : records) {
    question_tokens += CountTokens(r.question);
    if (!r.gold_answers.empty()) answer_tokens += CountTokens(r.gold_answers.front());
    for (const auto& hop : r.gold_chain) screenshots.insert(hop.doc_id);
    s.total_boxes += r.TotalBoxes();
    ++s.hop_counts[r.hop_count];
    ++s.type_counts[r.question_type];
  }
  s.questions = records.size();
  const double n = static_cast<double>(records.size());
  s.avg_question_length = static_cast<double>(question_tokens) / n;
  s.avg_answer_length = static_cast<double>(answer_tokens) / n;
  s.unique_screenshots = screenshots.size();
  s.avg_boxes = static_cast<double>(s.total_boxes) / n;
  return s;
}

ordered_json StatsToJson(const DatasetStats& s) {
  ordered_json j;
  j["questions"] = s.questions;
  j["avg_question_length"] = s.avg_question_length;
  j["avg_answer_length"] = s.avg_answer_length;
  j["unique_evidence_screenshots"] = s.unique_screenshots;
  j["total_boxes"] = s.total_boxes;
  j["avg_boxes"] = s.avg_boxes;
  ordered_json hops = ordered_json::object();
  for (const auto& [h, n] : s.hop_counts) {
    hops[std::to_string(h)] = {{"count", n}, {"percent", s.HopPercent(h)}};
  }
  j["hop_distribution"] = std::move(hops);
  ordered_json types = ordered_json::object();
  for (const auto& [t, n] : s.type_counts) {
    types[t] = {{"count", n}, {"percent", s.TypePercent(t)}};
  }
  j["type_distribution"] = std::move(types);
  return j;
}

ValidationResult ValidateDataset(const std::vector<QARecord>& records,
                                 const DocumentPool& pool) {
  ValidationResult result;
  for (const auto& r : records) {
    std::optional<Rejection> why;
    auto reject = [&](std::string reason, std::string detail) {
      if (!why) why = Rejection{r.question_id, std::move(reason), std::move(detail)};
    };
    if (!ParseQuestionType(r.question_type)) {
      reject("unknown-question-type", r.question_type);
    }
    if (r.gold_chain.empty()) reject("empty-chain", "");
    if (r.hop_count != static_cast<int>(r.gold_chain.size())) {
      reject("hop-count-mismatch", std::to_string(r.hop_count) + " vs " +
                                       std::to_string(r.gold_chain.size()));
    }
    for (std::size_t t = 0; t < r.gold_chain.size() && !why; ++t) {
      const GoldHop& hop = r.gold_chain[t];
      const CandidateDocument* doc = pool.Find(hop.doc_id);
      if (doc == nullptr) {
        reject("missing-document", hop.doc_id);
        break;
      }
      if (hop.boxes.empty()) reject("empty-hop", "gold_chain[" + std::to_string(t) + "]");
      for (std::size_t k = 0; k < hop.boxes.size(); ++k) {
        const BoundingBox& b = hop.boxes[k];
        const std::string where =
            "gold_chain[" + std::to_string(t) + "].boxes[" + std::to_string(k) + "]";
        if (!IsValidBox(b)) {
          reject("zero-area", where);
        } else if (!IsInFrame(b, doc->frame())) {
          reject("out-of-frame", where);
        }
      }
    }
    if (why) {
      result.rejected.push_back(std::move(*why));
    } else {
      result.accepted.push_back(r);
    }
  }
  return result;
}

std::vector<QARecord> LoadDataset(const std::filesystem::path& path) {
  std::vector<QARecord> records;
  std::size_t line = 0;
  for (const auto& j : ReadJsonLines(path)) {
    ++line;
    try {
      records.push_back(RecordFromJson(j));
    } catch (const Error& e) {
      throw Error(e.code(), e.message() + " (record " + std::to_string(line) + " of " +
                                path.string() + ")",
                  e.path());
    }
  }
  return records;
}

void SaveDataset(const std::filesystem::path& path, const std::vector<QARecord>& records) {
  std::vector<ordered_json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(RecordToJson(r));
  WriteJsonLines(path, lines);
}

DocumentPool LoadPool(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  DocumentPool pool;
  for (const auto& j : ReadJsonLines(path)) {
    CandidateDocument d;
    try {
      d.doc_id = j.at("doc_id").get<std::string>();
      std::filesystem::path image = j.at("image_path").get<std::string>();
      d.image_path = (image.is_relative() ? base / image : image).string();
      d.width = j.at("width").get<int>();
      d.height = j.at("height").get<int>();
      if (j.contains("group_id") && !j["group_id"].is_null()) {
        d.group_id = j["group_id"].get<std::string>();
      }
      if (j.contains("source_meta")) {
        d.source_meta = j["source_meta"].get<std::map<std::string, std::string>>();
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaViolation, e.what(), "pool manifest " + path.string());
    }
    pool.Add(std::move(d));
  }
  return pool;
}

void SavePool(const std::filesystem::path& path, const DocumentPool& pool) {
  const auto base = path.parent_path();
  std::vector<ordered_json> lines;
  for (const auto& [id, d] : pool.documents()) {
    ordered_json j;
    j["doc_id"] = d.doc_id;
    std::filesystem::path image = d.image_path;
    if (!base.empty() && image.is_absolute() == std::filesystem::path(base).is_absolute()) {
      auto rel = image.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") image = rel;
    }
    j["image_path"] = image.string();
    j["width"] = d.width;
    j["height"] = d.height;
    if (d.group_id) j["group_id"] = *d.group_id;
    if (!d.source_meta.empty()) j["source_meta"] = d.source_meta;
    lines.push_back(std::move(j));
  }
  WriteJsonLines(path, lines);
}

ordered_json CandidateSetToJson(const CandidateSet& set) {
  ordered_json j;
  j["question_id"] = set.question_id;
  ordered_json ordered = ordered_json::array();
  for (const auto& e : set.ordered) {
    ordered.push_back({{"label", e.label}, {"doc_id", e.doc_id}});
  }
  j["ordered"] = std::move(ordered);
  j["seed"] = set.seed;
  j["policy"] = PolicyName(set.policy);
  return j;
}

CandidateSet CandidateSetFromJson(const json& j) {
  CandidateSet set;
  try {
    set.question_id = j.at("question_id").get<std::string>();
    for (const auto& e : j.at("ordered")) {
      set.ordered.push_back({e.at("label").get<std::string>(), e.at("doc_id").get<std::string>()});
    }
    set.seed = j.value("seed", std::uint64_t{0});
    auto policy = ParsePolicy(j.value("policy", std::string("global-pool")));
    if (!policy) throw Error(ErrorCode::kSchemaViolation, "unknown policy", "policy");
    set.policy = *policy;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), "candidate set");
  }
  return set;
}

void AttachGoldMap(CandidateSet& set, const QARecord& record) {
  set.gold_map.clear();
  std::map<std::string, std::string> label_of;
  for (const auto& e : set.ordered) label_of[e.doc_id] = e.label;
  for (const auto& doc : record.GoldDocs()) {
    auto it = label_of.find(doc);
    if (it == label_of.end()) {
      throw Error(ErrorCode::kInconsistency,
                  "candidate set for " + record.question_id + " lacks gold doc " + doc);
    }
    set.gold_map[doc] = it->second;
  }
  ValidateCandidateSet(set, record);
}

std::map<std::string, CandidateSet> LoadCandidateSets(
    const std::filesystem::path& path, const std::vector<QARecord>& records) {
  std::map<std::string, const QARecord*> by_id;
  for (const auto& r : records) by_id[r.question_id] = &r;
  std::map<std::string, CandidateSet> sets;
  for (const auto& j : ReadJsonLines(path)) {
    CandidateSet set = CandidateSetFromJson(j);
    auto it = by_id.find(set.question_id);
    if (it != by_id.end()) AttachGoldMap(set, *it->second);
    std::string id = set.question_id;
    sets.emplace(std::move(id), std::move(set));
  }
  return sets;
}

void SaveCandidateSets(const std::filesystem::path& path,
                       const std::vector<CandidateSet>& sets) {
  std::vector<ordered_json> lines;
  lines.reserve(sets.size());
  for (const auto& s : sets) lines.push_back(CandidateSetToJson(s));
  WriteJsonLines(path, lines);
}

}  // namespace evchain::dataset
