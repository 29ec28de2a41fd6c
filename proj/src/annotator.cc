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

#include "evchain/annotator.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "evchain/error.h"
#include "evchain/jsonl.h"
#include "evchain/metrics.h"

namespace evchain::annotate {
namespace {

using nlohmann::json;

std::vector<std::string> Tokens(const std::string& normalized) {
  std::istringstream in(normalized);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double TokenF1Normalized(const std::string& a, const std::string& b) {
  std::vector<std::string> ta = Tokens(a), tb = Tokens(b);
  if (ta.empty() || tb.empty()) return 0;
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<std::string> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
  return 2.0 * double(common.size()) / double(ta.size() + tb.size());
}

std::set<std::string> Bigrams(const std::string& s) {
  std::set<std::string> out;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) out.insert(s.substr(i, 2));
  return out;
}

double BigramDiceNormalized(const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) return 0;
  if (a == b) return 1;
  const auto ba = Bigrams(a), bb = Bigrams(b);
  if (ba.empty() || bb.empty()) return 0;
  std::size_t common = 0;
  for (const auto& g : ba) common += bb.count(g);
  return 2.0 * double(common) / double(ba.size() + bb.size());
}

bool ContainsPhrase(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return false;
  return (" " + haystack + " ").find(" " + needle + " ") != std::string::npos;
}

// Sentence-sized pieces of an element's raw text, split after . ! or ?
// followed by whitespace.
std::vector<std::string_view> Segments(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      out.push_back(text.substr(start, i + 1 - start));
      start = i + 1;
    }
  }
  if (start < text.size()) out.push_back(text.substr(start));
  return out;
}

}  // namespace

void AnnotatorConfig::Validate() const {
  if (!(min_overlap_score > 0 && min_overlap_score <= 1)) {
    throw Error(ErrorCode::kConfigInvalid, "min_overlap_score must be in (0,1]");
  }
  if (min_token_count < 0) throw Error(ErrorCode::kConfigInvalid, "min_token_count < 0");
}

std::string NormalizeSentence(std::string_view text) {
  return metrics::NormalizeText(text, /*strip_articles=*/false);
}

double TokenF1(std::string_view a, std::string_view b) {
  return TokenF1Normalized(NormalizeSentence(a), NormalizeSentence(b));
}

double BigramDice(std::string_view a, std::string_view b) {
  return BigramDiceNormalized(NormalizeSentence(a), NormalizeSentence(b));
}

double TextSimilarity(std::string_view a, std::string_view b, int min_token_count) {
  const std::string na = NormalizeSentence(a), nb = NormalizeSentence(b);
  const double dice = BigramDiceNormalized(na, nb);
  const auto short_side = static_cast<std::size_t>(std::max(min_token_count, 0));
  if (Tokens(na).size() < short_side || Tokens(nb).size() < short_side) return dice;
  return std::max(TokenF1Normalized(na, nb), dice);
}

std::optional<MatchResult> MatchSentence(std::string_view sentence,
                                         const std::vector<RenderedElement>& elements,
                                         const AnnotatorConfig& cfg) {
  const std::string target = NormalizeSentence(sentence);
  if (target.empty()) return std::nullopt;

  auto make = [&](std::size_t i, MatchMethod method, double score) {
    const RenderedElement& e = elements[i];
    MatchResult m{i, e.element_id, method, score, {}};
    if (!e.line_rects.empty()) {
      m.box = e.line_rects.front();
      for (const auto& r : e.line_rects) m.box = Union(m.box, r);
    }
    return m;
  };

  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (ContainsPhrase(NormalizeSentence(elements[i].text), target)) {
      return make(i, MatchMethod::kExact, 1.0);
    }
  }
  std::optional<std::size_t> best;
  double best_score = -1;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    double s = TextSimilarity(sentence, elements[i].text, cfg.min_token_count);
    const auto pieces = Segments(elements[i].text);
    if (pieces.size() > 1) {
      for (std::string_view piece : pieces) {
        s = std::max(s, TextSimilarity(sentence, piece, cfg.min_token_count));
      }
    }
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  if (!best || best_score < cfg.min_overlap_score) return std::nullopt;
  return make(*best, MatchMethod::kOverlap, best_score);
}

std::optional<BoundingBox> ElementBox(const RenderedElement& e, FrameSize frame) {
  ValidateElement(e);
  BoundingBox box = e.line_rects.front();
  for (const auto& r : e.line_rects) box = Union(box, r);
  return ClipToFrame(box, frame);
}

SourceQuestion SourceQuestionFromJson(const json& j) {
  SourceQuestion q;
  try {
    q.question_id = j.at("question_id").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
    q.question_type = j.at("question_type").get<std::string>();
    q.entity_chain_key = j.value("entity_chain_key", std::string());
    for (const auto& fact : j.at("supporting_facts")) {
      if (fact.is_array() && fact.size() == 2) {
        q.supporting_facts.emplace_back(fact[0].get<std::string>(), fact[1].get<std::string>());
      } else {
        q.supporting_facts.emplace_back(fact.at("doc_id").get<std::string>(),
                                        fact.at("sentence").get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), "source question");
  }
  if (q.gold_answers.empty()) {
    throw Error(ErrorCode::kSchemaViolation, "no gold answers", "gold_answers");
  }
  return q;
}

std::vector<SourceQuestion> LoadSourceQuestions(const std::filesystem::path& path) {
  std::vector<SourceQuestion> out;
  for (const auto& j : ReadJsonLines(path)) out.push_back(SourceQuestionFromJson(j));
  return out;
}

AnnotationOutcome AnnotateRecord(const SourceQuestion& question,
                                 const std::map<std::string, PageSnapshot>& snapshots,
                                 const AnnotatorConfig& cfg) {
  cfg.Validate();
  for (const auto& [doc, sentence] : question.supporting_facts) {
    if (!snapshots.count(doc)) {
      throw Error(ErrorCode::kMissingSnapshot, "no snapshot for " + doc, question.question_id);
    }
  }

  AnnotatedRecord out;
  QARecord& r = out.record;
  r.question_id = question.question_id;
  r.question = question.question;
  r.gold_answers = question.gold_answers;
  r.question_type = question.question_type;

  for (const auto& [doc, sentence] : question.supporting_facts) {
    const PageSnapshot& snap = snapshots.at(doc);
    auto match = MatchSentence(sentence, snap.elements, cfg);
    if (!match) return AnnotationRejection{question.question_id, doc, sentence, "no-match"};
    auto box = ElementBox(snap.elements[match->element_index], snap.frame());
    if (!box) return AnnotationRejection{question.question_id, doc, sentence, "box-rejected"};

    auto hop = std::find_if(r.gold_chain.begin(), r.gold_chain.end(),
                            [&](const GoldHop& h) { return h.doc_id == doc; });
    if (hop == r.gold_chain.end()) {
      r.gold_chain.push_back({doc, {}});
      hop = std::prev(r.gold_chain.end());
    }
    if (std::find(hop->boxes.begin(), hop->boxes.end(), *box) == hop->boxes.end()) {
      hop->boxes.push_back(*box);
    }
    out.matches.push_back({doc, sentence, *match, *box});
  }
  if (r.gold_chain.empty()) {
    return AnnotationRejection{question.question_id, "", "", "no-match"};
  }
  r.hop_count = static_cast<int>(r.gold_chain.size());
  r.entity_chain_key = question.entity_chain_key.empty()
                           ? DefaultEntityChainKey(r.gold_chain)
                           : question.entity_chain_key;
  return out;
}

nlohmann::ordered_json RejectionToJson(const AnnotationRejection& r) {
  return {{"question_id", r.question_id},
          {"doc_id", r.doc_id},
          {"sentence", r.sentence},
          {"reason", r.reason}};
}

}  // namespace evchain::annotate
