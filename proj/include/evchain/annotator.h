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

#ifndef EVCHAIN_ANNOTATOR_H_
#define EVCHAIN_ANNOTATOR_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/record.h"
#include "evchain/snapshot.h"

namespace evchain::annotate {

struct AnnotatorConfig {
  double min_overlap_score = 0.75;
  int min_token_count = 3;

  void Validate() const;
};

// Answer normalization without article removal; articles matter in sentences.
std::string NormalizeSentence(std::string_view text);

// Similarity in [0,1] between two texts after normalization. When both sides
// have at least `min_token_count` tokens this is the larger of token-multiset
// F1 and character-bigram Dice; otherwise bigram Dice alone. Symmetric. Two
// empty texts score 0.
double TextSimilarity(std::string_view a, std::string_view b, int min_token_count = 3);

double TokenF1(std::string_view a, std::string_view b);
double BigramDice(std::string_view a, std::string_view b);

enum class MatchMethod { kExact, kOverlap };

struct MatchResult {
  std::size_t element_index = 0;
  std::string element_id;
  MatchMethod method = MatchMethod::kExact;
  double score = 0;
  BoundingBox box;  // tight union of the element's line rects, not clipped
};

// Exact containment (first element in document order) beats any overlap
// match; otherwise the best-scoring element at or above the threshold,
// earliest on ties. An element scores the best of its whole text and each of
// its sentences.
std::optional<MatchResult> MatchSentence(std::string_view sentence,
                                         const std::vector<RenderedElement>& elements,
                                         const AnnotatorConfig& cfg);

// Tight union of line rects clipped to the frame, nullopt when nothing of
// the element is in frame.
std::optional<BoundingBox> ElementBox(const RenderedElement& e, FrameSize frame);

// A question from the source corpus before boxes are attached.
struct SourceQuestion {
  std::string question_id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::string question_type;
  std::string entity_chain_key;  // empty: derived from the gold docs
  std::vector<std::pair<std::string, std::string>> supporting_facts;  // (doc_id, sentence)
};

SourceQuestion SourceQuestionFromJson(const nlohmann::json& j);
std::vector<SourceQuestion> LoadSourceQuestions(const std::filesystem::path& path);

struct FactMatch {
  std::string doc_id;
  std::string sentence;
  MatchResult match;
  BoundingBox box;  // clipped, in frame
};

struct AnnotatedRecord {
  QARecord record;
  std::vector<FactMatch> matches;  // one per supporting fact, in order
};

struct AnnotationRejection {
  std::string question_id;
  std::string doc_id;
  std::string sentence;
  std::string reason;  // "no-match" or "box-rejected"
};

using AnnotationOutcome = std::variant<AnnotatedRecord, AnnotationRejection>;

// All-or-nothing: every supporting fact must resolve to an in-frame box.
// Hops are the distinct docs in supporting-fact order; boxes are grouped per
// doc in fact order, identical boxes kept once. Throws kMissingSnapshot when
// a fact's doc has no snapshot.
AnnotationOutcome AnnotateRecord(const SourceQuestion& question,
                                 const std::map<std::string, PageSnapshot>& snapshots,
                                 const AnnotatorConfig& cfg);

nlohmann::ordered_json RejectionToJson(const AnnotationRejection& r);

}  // namespace evchain::annotate

#endif  // EVCHAIN_ANNOTATOR_H_
