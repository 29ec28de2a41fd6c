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

#include "evchain/metrics.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <tuple>

#include "evchain/error.h"

namespace evchain::metrics {
namespace {

using nlohmann::ordered_json;

bool IsArticle(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

void Tally(Breakdown& b, const ExampleScore& s) {
  ++b.n;
  b.em += s.em;
  b.chain += s.chain_correct;
  b.loc += s.loc_correct;
}

ordered_json BreakdownToJson(const Breakdown& b) {
  return {{"n", b.n}, {"em", b.em_rate()}, {"chain_acc", b.chain_rate()},
          {"loc_acc", b.loc_rate()}};
}

}  // namespace

void MatchConfig::Validate() const {
  if (!(iou_threshold > 0 && iou_threshold <= 1)) {
    throw Error(ErrorCode::kConfigInvalid, "iou_threshold must be in (0,1]");
  }
}

ordered_json MatchConfigToJson(const MatchConfig& cfg) {
  return {{"iou_threshold", cfg.iou_threshold},
          {"center_rule_enabled", cfg.center_rule_enabled},
          {"threshold_inclusive", cfg.threshold_inclusive},
          {"multi_box", cfg.multi_box == MultiBoxMode::kAllGold ? "all-gold" : "any-gold"}};
}

std::string NormalizeText(std::string_view text, bool strip_articles) {
  std::string stripped;
  stripped.reserve(text.size());
  for (unsigned char c : text) {
    if (c < 0x80 && std::ispunct(c)) continue;
    stripped.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  std::istringstream words(stripped);
  std::string out;
  std::string w;
  while (words >> w) {
    if (strip_articles && IsArticle(w)) continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

bool ExactMatch(std::string_view pred, const std::vector<std::string>& golds) {
  const std::string p = NormalizeAnswer(pred);
  return std::any_of(golds.begin(), golds.end(),
                     [&](const std::string& g) { return NormalizeAnswer(g) == p; });
}

bool BoxMatch(const BoundingBox& pred, const BoundingBox& gold, const MatchConfig& cfg) {
  const double iou = Iou(pred, gold);
  const bool by_overlap =
      cfg.threshold_inclusive ? iou >= cfg.iou_threshold : iou > cfg.iou_threshold;
  return by_overlap || (cfg.center_rule_enabled && CenterInside(pred, gold));
}

HopResult HopLocalized(const EvidenceHop& pred, const std::string& gold_image_id,
                       const std::vector<BoundingBox>& gold_boxes, const MatchConfig& cfg) {
  HopResult r;
  r.image_correct = pred.image_id == gold_image_id;
  if (!r.image_correct || gold_boxes.empty()) return r;

  // Greedy one-to-one assignment over matching pairs: repeatedly take the
  // highest-IoU pair, ties by lower pred index then lower gold index.
  struct Pair {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < pred.boxes.size(); ++p) {
    for (std::size_t g = 0; g < gold_boxes.size(); ++g) {
      if (BoxMatch(pred.boxes[p], gold_boxes[g], cfg)) {
        pairs.push_back({Iou(pred.boxes[p], gold_boxes[g]), p, g});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::make_tuple(-a.iou, a.p, a.g) < std::make_tuple(-b.iou, b.p, b.g);
  });
  std::vector<bool> pred_used(pred.boxes.size(), false);
  std::vector<bool> gold_used(gold_boxes.size(), false);
  std::size_t covered = 0;
  for (const Pair& pr : pairs) {
    if (pred_used[pr.p] || gold_used[pr.g]) continue;
    pred_used[pr.p] = gold_used[pr.g] = true;
    ++covered;
  }
  r.boxes_correct = cfg.multi_box == MultiBoxMode::kAllGold ? covered == gold_boxes.size()
                                                            : covered > 0;
  return r;
}

bool ChainAccuracy(const EvidenceChain& pred, const QARecord& gold,
                   const dataset::CandidateSet& candset) {
  if (pred.hops.size() != gold.gold_chain.size() ||
      static_cast<int>(pred.hops.size()) != gold.hop_count) {
    return false;
  }
  for (std::size_t t = 0; t < pred.hops.size(); ++t) {
    auto it = candset.gold_map.find(gold.gold_chain[t].doc_id);
    if (it == candset.gold_map.end() || pred.hops[t].image_id != it->second) return false;
  }
  return true;
}

ExampleScore ScoreExample(const QARecord& record, const dataset::CandidateSet& candset,
                          const std::optional<ModelOutput>& out, const MatchConfig& cfg) {
  ExampleScore s;
  s.question_id = record.question_id;
  if (!out) {
    s.parse_failed = true;
    return s;
  }
  s.em = ExactMatch(out->answer, record.gold_answers);
  s.chain_correct = ChainAccuracy(out->chain, record, candset);

  const std::size_t n = std::min(out->chain.hops.size(), record.gold_chain.size());
  bool all_hops = true;
  for (std::size_t t = 0; t < n; ++t) {
    const GoldHop& gold = record.gold_chain[t];
    auto it = candset.gold_map.find(gold.doc_id);
    if (it == candset.gold_map.end()) {
      throw Error(ErrorCode::kInconsistency,
                  "candidate set lacks gold doc " + gold.doc_id + " for " + record.question_id);
    }
    HopResult h = HopLocalized(out->chain.hops[t], it->second, gold.boxes, cfg);
    all_hops = all_hops && h.boxes_correct;
    s.per_hop.push_back(h);
  }
  s.loc_correct = s.chain_correct && all_hops;
  s.joint_correct = s.loc_correct;
  return s;
}

Report Aggregate(const std::vector<ExampleScore>& scores,
                 const std::vector<QARecord>& records) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyEvaluation, "no scores to aggregate");
  std::map<std::string, const QARecord*> by_id;
  for (const auto& r : records) by_id[r.question_id] = &r;

  Report rep;
  for (QuestionType t : kAllQuestionTypes) {
    rep.by_question_type[std::string(QuestionTypeName(t))];
  }
  std::size_t em = 0, chain = 0, loc = 0, joint = 0, hop_img = 0, hop_box = 0;
  for (const ExampleScore& s : scores) {
    auto it = by_id.find(s.question_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kMissingQuestion, "no record for " + s.question_id);
    }
    ++rep.n_examples;
    rep.n_failed_parses += s.parse_failed;
    em += s.em;
    chain += s.chain_correct;
    loc += s.loc_correct;
    joint += s.joint_correct;
    for (const HopResult& h : s.per_hop) {
      ++rep.n_hops_scored;
      hop_img += h.image_correct;
      hop_box += h.boxes_correct;
    }
    Tally(rep.by_question_type[it->second->question_type], s);
    Tally(rep.by_hop_count[it->second->hop_count], s);
  }
  const double n = static_cast<double>(rep.n_examples);
  rep.em_rate = double(em) / n;
  rep.chain_acc = double(chain) / n;
  rep.loc_acc = double(loc) / n;
  rep.joint_acc = double(joint) / n;
  if (rep.n_hops_scored) {
    rep.hop_image_rate = double(hop_img) / double(rep.n_hops_scored);
    rep.hop_box_rate = double(hop_box) / double(rep.n_hops_scored);
  }
  return rep;
}

ordered_json ScoreToJson(const ExampleScore& s) {
  ordered_json hops = ordered_json::array();
  for (const HopResult& h : s.per_hop) {
    hops.push_back({{"image_correct", h.image_correct}, {"boxes_correct", h.boxes_correct}});
  }
  return {{"question_id", s.question_id},
          {"parse_failed", s.parse_failed},
          {"em", s.em},
          {"chain_correct", s.chain_correct},
          {"loc_correct", s.loc_correct},
          {"joint_correct", s.joint_correct},
          {"per_hop", std::move(hops)}};
}

ExampleScore ScoreFromJson(const nlohmann::json& j) {
  ExampleScore s;
  s.question_id = j.at("question_id").get<std::string>();
  s.parse_failed = j.at("parse_failed").get<bool>();
  s.em = j.at("em").get<bool>();
  s.chain_correct = j.at("chain_correct").get<bool>();
  s.loc_correct = j.at("loc_correct").get<bool>();
  s.joint_correct = j.at("joint_correct").get<bool>();
  for (const auto& h : j.at("per_hop")) {
    s.per_hop.push_back({h.at("image_correct").get<bool>(), h.at("boxes_correct").get<bool>()});
  }
  return s;
}

ordered_json ReportToJson(const Report& r, const MatchConfig& cfg) {
  ordered_json j;
  j["match_config"] = MatchConfigToJson(cfg);
  j["answer_normalization"] = kNormalizationConvention;
  j["n_examples"] = r.n_examples;
  j["n_failed_parses"] = r.n_failed_parses;
  j["em"] = r.em_rate;
  j["chain_acc"] = r.chain_acc;
  j["loc_acc"] = r.loc_acc;
  j["joint_acc"] = r.joint_acc;
  j["per_hop"] = {{"n_hops", r.n_hops_scored},
                  {"image_rate", r.hop_image_rate},
                  {"box_rate", r.hop_box_rate}};
  ordered_json types = ordered_json::object();
  for (const auto& [t, b] : r.by_question_type) types[t] = BreakdownToJson(b);
  j["by_question_type"] = std::move(types);
  ordered_json hops = ordered_json::object();
  for (const auto& [h, b] : r.by_hop_count) hops[std::to_string(h)] = BreakdownToJson(b);
  j["by_hop_count"] = std::move(hops);
  return j;
}

std::string FormatSummary(const Report& r, const MatchConfig& cfg) {
  std::ostringstream os;
  char line[160];
  os << "match: iou>" << (cfg.threshold_inclusive ? "=" : "") << cfg.iou_threshold
     << (cfg.center_rule_enabled ? " or center-inside" : "") << ", multi-box "
     << (cfg.multi_box == MultiBoxMode::kAllGold ? "all-gold" : "any-gold") << "\n";
  os << "answer normalization: " << kNormalizationConvention << "\n";
  os << "examples: " << r.n_examples << " (failed parses: " << r.n_failed_parses << ")\n\n";
  std::snprintf(line, sizeof line, "%-22s %6s %8s %8s %8s\n", "slice", "n", "EM", "Chain", "Loc");
  os << line;
  auto row = [&](const std::string& name, std::size_t n, double em, double ch, double lo) {
    std::snprintf(line, sizeof line, "%-22s %6zu %8.1f %8.1f %8.1f\n", name.c_str(), n,
                  100 * em, 100 * ch, 100 * lo);
    os << line;
  };
  row("all", r.n_examples, r.em_rate, r.chain_acc, r.loc_acc);
  for (const auto& [t, b] : r.by_question_type) {
    row("type:" + t, b.n, b.em_rate(), b.chain_rate(), b.loc_rate());
  }
  for (const auto& [h, b] : r.by_hop_count) {
    row("hops:" + std::to_string(h), b.n, b.em_rate(), b.chain_rate(), b.loc_rate());
  }
  return os.str();
}

}  // namespace evchain::metrics
