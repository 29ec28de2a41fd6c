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
#include <numeric>
#include <random>
#include <regex>

#include <gtest/gtest.h>

#include "evchain/error.h"
#include "test_support.h"

namespace evchain::metrics {
namespace {

using dataset::CandidateSet;

// Regex-based reference for the normalization rules.
std::string ReferenceNormalize(const std::string& text) {
  std::string s;
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    s += static_cast<char>(std::tolower(c));
  }
  s = std::regex_replace(s, std::regex("(^|\\s)(a|an|the)(?=\\s|$)"), "$1");
  s = std::regex_replace(s, std::regex("\\s+"), " ");
  s = std::regex_replace(s, std::regex("^ | $"), "");
  return s;
}

TEST(NormalizeAnswer, Examples) {
  EXPECT_EQ(NormalizeAnswer("The United States!"), "united states");
  EXPECT_EQ(NormalizeAnswer("christopher nolan"), "christopher nolan");
  EXPECT_EQ(NormalizeAnswer("  A  An THE  "), "");
  EXPECT_EQ(NormalizeAnswer(""), "");
  EXPECT_EQ(NormalizeAnswer("theatre anthem"), "theatre anthem");
}

TEST(NormalizeAnswer, MatchesReferenceOnRandomStrings) {
  const std::string alphabet = "aAnNtThHeE .,!?'-\t";
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(0, 24), pick(0, int(alphabet.size()) - 1);
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    for (int n = len(rng); n > 0; --n) s += alphabet[pick(rng)];
    ASSERT_EQ(NormalizeAnswer(s), ReferenceNormalize(s)) << "input: [" << s << "]";
  }
}

TEST(ExactMatch, Examples) {
  EXPECT_TRUE(ExactMatch("The 1987 film", {"1987 film"}));
  EXPECT_FALSE(ExactMatch("London", {"Paris"}));
  EXPECT_TRUE(ExactMatch("Paris ", {"paris", "Paris, France"}));
}

TEST(BoxMatch, Examples) {
  const MatchConfig cfg;
  EXPECT_TRUE(BoxMatch({0, 0, 10, 3}, {0, 0, 10, 10}, cfg));
  EXPECT_TRUE(BoxMatch({5, 5, 15, 15}, {0, 0, 10, 10}, cfg));
  EXPECT_FALSE(BoxMatch({11, 0, 21, 10}, {0, 0, 10, 10}, cfg));
}

TEST(BoxMatch, ExactThresholdPair) {
  MatchConfig cfg;
  cfg.center_rule_enabled = false;
  EXPECT_TRUE(BoxMatch({0, 0, 10, 3}, {0, 0, 10, 10}, cfg));
  cfg.iou_threshold = 0.31;
  EXPECT_FALSE(BoxMatch({0, 0, 10, 3}, {0, 0, 10, 10}, cfg));
  cfg.iou_threshold = 0.3;
  cfg.threshold_inclusive = false;
  EXPECT_FALSE(BoxMatch({0, 0, 10, 3}, {0, 0, 10, 10}, cfg));
  // The nested box's center (5, 1.5) is inside gold, so the center rule rescues it.
  cfg.center_rule_enabled = true;
  EXPECT_TRUE(BoxMatch({0, 0, 10, 3}, {0, 0, 10, 10}, cfg));
}

TEST(BoxMatch, RejectsInvalidBoxes) {
  EXPECT_THROW(BoxMatch({5, 0, 5, 10}, {0, 0, 10, 10}, MatchConfig{}), Error);
}

TEST(MatchConfig, Validate) {
  MatchConfig cfg;
  cfg.iou_threshold = 0;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg.iou_threshold = 1.0;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.iou_threshold = 1.01;
  EXPECT_THROW(cfg.Validate(), Error);
}

EvidenceHop Hop(const std::string& image, std::vector<BoundingBox> boxes) {
  return {1, image, std::move(boxes), "q"};
}

TEST(HopLocalized, Examples) {
  const MatchConfig cfg;
  EXPECT_EQ(HopLocalized(Hop("img_1", {{0, 0, 10, 10}}), "img_1", {{0, 0, 10, 9}}, cfg),
            (HopResult{true, true}));
  EXPECT_EQ(HopLocalized(Hop("img_2", {{0, 0, 10, 10}}), "img_1", {{0, 0, 10, 10}}, cfg),
            (HopResult{false, false}));
  EXPECT_EQ(HopLocalized(Hop("img_1", {{0, 0, 10, 10}}), "img_1",
                         {{0, 0, 10, 10}, {50, 50, 60, 60}}, cfg),
            (HopResult{true, false}));
}

TEST(HopLocalized, OnePredictionCannotCoverTwoGolds) {
  // Both gold boxes overlap the single prediction, but assignment is one-to-one.
  const MatchConfig cfg;
  EXPECT_EQ(HopLocalized(Hop("img_0", {{0, 0, 20, 10}}), "img_0",
                         {{0, 0, 10, 10}, {10, 0, 20, 10}}, cfg),
            (HopResult{true, false}));
  EXPECT_EQ(HopLocalized(Hop("img_0", {{0, 0, 10, 10}, {10, 0, 20, 10}}), "img_0",
                         {{0, 0, 10, 10}, {10, 0, 20, 10}}, cfg),
            (HopResult{true, true}));
}

TEST(HopLocalized, ExtraPredictionsDoNotHurt) {
  const MatchConfig cfg;
  EXPECT_TRUE(HopLocalized(Hop("img_0", {{100, 100, 120, 120}, {0, 0, 10, 10}}), "img_0",
                           {{0, 0, 10, 10}}, cfg)
                  .boxes_correct);
}

TEST(HopLocalized, AnyGoldMode) {
  MatchConfig cfg;
  cfg.multi_box = MultiBoxMode::kAnyGold;
  EXPECT_EQ(HopLocalized(Hop("img_1", {{0, 0, 10, 10}}), "img_1",
                         {{0, 0, 10, 10}, {50, 50, 60, 60}}, cfg),
            (HopResult{true, true}));
}

// Two-hop record over docs A and B, candidate order puts A at img_3, B at img_0.
struct ChainFixture {
  QARecord record;
  CandidateSet candset;

  ChainFixture() {
    record.question_id = "q1";
    record.question = "Who?";
    record.gold_answers = {"Nolan"};
    record.question_type = "compositional";
    record.gold_chain = {{"A", {{0, 0, 10, 10}}}, {"B", {{20, 20, 40, 30}}}};
    record.hop_count = 2;
    record.entity_chain_key = "A|B";
    candset.question_id = "q1";
    candset.ordered = {{"img_0", "B"}, {"img_1", "X"}, {"img_2", "Y"}, {"img_3", "A"}};
    candset.gold_map = {{"A", "img_3"}, {"B", "img_0"}};
  }

  EvidenceChain ChainOf(std::vector<std::string> labels) const {
    EvidenceChain c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      c.hops.push_back({int(i) + 1, labels[i], {{0, 0, 10, 10}}, "s"});
    }
    return c;
  }
};

TEST(ChainAccuracy, Examples) {
  ChainFixture f;
  EXPECT_TRUE(ChainAccuracy(f.ChainOf({"img_3", "img_0"}), f.record, f.candset));
  EXPECT_FALSE(ChainAccuracy(f.ChainOf({"img_0", "img_3"}), f.record, f.candset));
  EXPECT_FALSE(ChainAccuracy(f.ChainOf({"img_3", "img_0", "img_1"}), f.record, f.candset));
  EXPECT_FALSE(ChainAccuracy(f.ChainOf({"img_3"}), f.record, f.candset));
  EXPECT_FALSE(ChainAccuracy(f.ChainOf({"img_3", "img_9"}), f.record, f.candset));
}

TEST(ScoreExample, GoldReplayShiftAndParseFailure) {
  ChainFixture f;
  const MatchConfig cfg;
  const ModelOutput gold = testing_support::GoldReplay(f.record, f.candset);

  const ExampleScore s = ScoreExample(f.record, f.candset, gold, cfg);
  EXPECT_TRUE(s.em && s.chain_correct && s.loc_correct && s.joint_correct);
  ASSERT_EQ(s.per_hop.size(), 2u);

  const ExampleScore shifted =
      ScoreExample(f.record, f.candset, testing_support::ShiftBoxesRight(gold), cfg);
  EXPECT_TRUE(shifted.em);
  EXPECT_TRUE(shifted.chain_correct);
  EXPECT_FALSE(shifted.loc_correct);
  EXPECT_FALSE(shifted.joint_correct);

  const ExampleScore failed = ScoreExample(f.record, f.candset, std::nullopt, cfg);
  EXPECT_TRUE(failed.parse_failed);
  EXPECT_FALSE(failed.em || failed.chain_correct || failed.loc_correct || failed.joint_correct);
  EXPECT_TRUE(failed.per_hop.empty());
}

TEST(ScoreExample, GoldMissingFromCandidateSetIsInconsistent) {
  ChainFixture f;
  f.candset.gold_map.erase("B");
  EXPECT_THROW(ScoreExample(f.record, f.candset,
                            ModelOutput{"x", f.ChainOf({"img_3", "img_0"})}, MatchConfig{}),
               Error);
}

QARecord SimpleRecord(const std::string& qid, const std::string& type, int hops) {
  QARecord r;
  r.question_id = qid;
  r.question = "q";
  r.gold_answers = {"a"};
  r.question_type = type;
  r.hop_count = hops;
  for (int t = 0; t < hops; ++t) r.gold_chain.push_back({"d" + std::to_string(t), {{0, 0, 1, 1}}});
  return r;
}

ExampleScore Flags(const std::string& qid, bool em, bool chain, bool loc) {
  ExampleScore s;
  s.question_id = qid;
  s.em = em;
  s.chain_correct = chain;
  s.loc_correct = loc;
  s.joint_correct = loc;
  return s;
}

TEST(Aggregate, Examples) {
  const std::vector<QARecord> recs = {SimpleRecord("a", "comparison", 2),
                                      SimpleRecord("b", "inference", 2)};
  const Report r = Aggregate({Flags("a", true, true, true), Flags("b", false, false, false)}, recs);
  EXPECT_EQ(r.n_examples, 2u);
  EXPECT_DOUBLE_EQ(r.em_rate, 0.5);
  EXPECT_DOUBLE_EQ(r.chain_acc, 0.5);
  EXPECT_DOUBLE_EQ(r.loc_acc, 0.5);
  EXPECT_DOUBLE_EQ(r.joint_acc, 0.5);
  EXPECT_EQ(r.by_question_type.size(), 4u);
  EXPECT_EQ(r.by_question_type.at("bridge_comparison").n, 0u);

  const std::vector<QARecord> four = {
      SimpleRecord("w", "comparison", 2), SimpleRecord("x", "comparison", 2),
      SimpleRecord("y", "comparison", 4), SimpleRecord("z", "comparison", 4)};
  const Report h = Aggregate({Flags("w", 1, 1, 1), Flags("x", 1, 1, 1), Flags("y", 1, 1, 1),
                              Flags("z", 1, 1, 1)},
                             four);
  ASSERT_EQ(h.by_hop_count.size(), 2u);
  EXPECT_EQ(h.by_hop_count.at(2).n, 2u);
  EXPECT_EQ(h.by_hop_count.at(4).n, 2u);
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(Aggregate({}, {}), Error);
  try {
    Aggregate({Flags("missing", true, true, true)}, {SimpleRecord("a", "comparison", 2)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingQuestion);
  }
}

TEST(Aggregate, MatchesNaiveRecount) {
  std::mt19937_64 rng(11);
  const char* types[] = {"comparison", "inference", "compositional", "bridge_comparison"};
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    std::vector<QARecord> recs;
    std::vector<ExampleScore> scores;
    for (int i = 0; i < n; ++i) {
      const std::string qid = "q" + std::to_string(i);
      recs.push_back(SimpleRecord(qid, types[rng() % 4], (rng() % 2) ? 2 : 4));
      const bool chain = rng() % 2;
      const bool loc = chain && (rng() % 2);
      ExampleScore s = Flags(qid, rng() % 2, chain, loc);
      if (rng() % 10 == 0) s = Flags(qid, false, false, false), s.parse_failed = true;
      scores.push_back(s);
    }
    std::shuffle(scores.begin(), scores.end(), rng);
    const Report r = Aggregate(scores, recs);

    std::size_t em = 0, chain = 0, loc = 0, failed = 0;
    std::map<std::string, std::size_t> type_loc, type_n;
    for (const auto& s : scores) {
      em += s.em;
      chain += s.chain_correct;
      loc += s.loc_correct;
      failed += s.parse_failed;
      const auto it = std::find_if(recs.begin(), recs.end(),
                                   [&](const QARecord& q) { return q.question_id == s.question_id; });
      type_n[it->question_type]++;
      type_loc[it->question_type] += s.loc_correct;
    }
    EXPECT_EQ(r.n_examples, scores.size());
    EXPECT_EQ(r.n_failed_parses, failed);
    EXPECT_DOUBLE_EQ(r.em_rate, double(em) / n);
    EXPECT_DOUBLE_EQ(r.chain_acc, double(chain) / n);
    EXPECT_DOUBLE_EQ(r.loc_acc, double(loc) / n);
    EXPECT_LE(r.loc_acc, r.chain_acc);
    for (const auto& [type, count] : type_n) {
      EXPECT_EQ(r.by_question_type.at(type).n, count);
      EXPECT_EQ(r.by_question_type.at(type).loc, type_loc[type]);
    }
  }
}

// Random predictions near the gold chain: jittered integer boxes, occasional
// wrong labels, wrong answers and dropped hops.
ModelOutput NoisyPrediction(const QARecord& rec, const CandidateSet& cs, std::mt19937_64& rng) {
  ModelOutput out = testing_support::GoldReplay(rec, cs);
  std::uniform_int_distribution<int> jitter(-6, 6), die(0, 9);
  if (die(rng) == 0) out.answer = "something else";
  for (auto& hop : out.chain.hops) {
    if (die(rng) == 0) hop.image_id = cs.ordered[rng() % cs.k()].label;
    for (auto& b : hop.boxes) {
      const int dx = jitter(rng), dy = jitter(rng);
      b = {b.x1 + dx, b.y1 + dy, b.x2 + dx + std::max(1, jitter(rng) + 6), b.y2 + dy + 1};
    }
    if (die(rng) == 0) hop.boxes.push_back({200, 200, 210, 210});
  }
  if (die(rng) == 0 && out.chain.hops.size() > 1) out.chain.hops.pop_back();
  return out;
}

TEST(Invariance, CandidateRelabeling) {
  testing_support::TempDir dir;
  const auto corpus = testing_support::MakeSyntheticCorpus(dir.path(), 20, 5);
  std::mt19937_64 rng(99);
  const MatchConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const QARecord& rec = corpus.records[trial % corpus.records.size()];
    const CandidateSet cs =
        dataset::BuildCandidateSet(rec, corpus.pool, 5, trial, dataset::DistractorPolicy::kGlobalPool);
    const ModelOutput pred = NoisyPrediction(rec, cs, rng);
    const ExampleScore base = ScoreExample(rec, cs, pred, cfg);

    std::vector<std::size_t> perm(cs.k());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CandidateSet relabeled = cs;
    std::map<std::string, std::string> old_to_new;
    for (std::size_t i = 0; i < cs.k(); ++i) {
      relabeled.ordered[perm[i]] = {ImageLabel(perm[i]), cs.ordered[i].doc_id};
      old_to_new[cs.ordered[i].label] = ImageLabel(perm[i]);
    }
    for (auto& [doc, label] : relabeled.gold_map) label = old_to_new.at(label);
    ModelOutput moved = pred;
    for (auto& hop : moved.chain.hops) hop.image_id = old_to_new.at(hop.image_id);

    ASSERT_EQ(ScoreExample(rec, relabeled, moved, cfg), base) << "trial " << trial;
  }
}

TEST(Invariance, UniformScaling) {
  testing_support::TempDir dir;
  const auto corpus = testing_support::MakeSyntheticCorpus(dir.path(), 30, 8);
  std::mt19937_64 rng(3);
  const MatchConfig cfg;
  auto scale_boxes = [](std::vector<BoundingBox>& boxes, double s) {
    for (auto& b : boxes) b = Scale(b, s);
  };
  for (const QARecord& rec : corpus.records) {
    const CandidateSet cs =
        dataset::BuildCandidateSet(rec, corpus.pool, 5, 1, dataset::DistractorPolicy::kGlobalPool);
    for (int rep = 0; rep < 10; ++rep) {
      const ModelOutput pred = NoisyPrediction(rec, cs, rng);
      const ExampleScore base = ScoreExample(rec, cs, pred, cfg);
      for (double s : {0.5, 2.0, 3.0}) {
        QARecord r2 = rec;
        for (auto& hop : r2.gold_chain) scale_boxes(hop.boxes, s);
        ModelOutput p2 = pred;
        for (auto& hop : p2.chain.hops) scale_boxes(hop.boxes, s);
        ASSERT_EQ(ScoreExample(r2, cs, p2, cfg), base) << rec.question_id << " s=" << s;
      }
    }
  }
}

TEST(Serialization, ScoreRoundTripAndReportHeader) {
  ExampleScore s = Flags("q9", true, true, false);
  s.per_hop = {{true, true}, {true, false}};
  EXPECT_EQ(ScoreFromJson(nlohmann::json::parse(ScoreToJson(s).dump())), s);

  const Report r = Aggregate({s}, {SimpleRecord("q9", "inference", 2)});
  const auto j = ReportToJson(r, MatchConfig{});
  EXPECT_DOUBLE_EQ(j.at("match_config").at("iou_threshold").get<double>(), 0.3);
  EXPECT_EQ(j.at("answer_normalization").get<std::string>(), kNormalizationConvention);
  EXPECT_NE(FormatSummary(r, MatchConfig{}).find("Loc"), std::string::npos);
}

}  // namespace
}  // namespace evchain::metrics
