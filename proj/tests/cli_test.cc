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

#include "evchain/cli.h"

#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "evchain/jsonl.h"
#include "evchain/raster.h"
#include "evchain/snapshot.h"
#include "test_support.h"

namespace evchain::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing_support::StubChatServer;
using testing_support::TempDir;

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "evchain");
  std::ostringstream out, err;
  CliRun r;
  r.status = RunCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json ReadJson(const fs::path& p) { return json::parse(ReadFile(p)); }

class CliCorpus : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus_ = testing_support::MakeSyntheticCorpus(dir_.path() / "corpus", 12, 5);
  }

  std::string Path(const std::string& name) const { return (dir_.path() / name).string(); }

  std::map<std::string, dataset::CandidateSet> CandidateSets(const fs::path& file) const {
    return dataset::LoadCandidateSets(file, corpus_.records);
  }

  void WritePredictions(const fs::path& file,
                        const std::function<std::optional<ModelOutput>(const QARecord&,
                                                                       const dataset::CandidateSet&)>& make,
                        const fs::path& candsets) const {
    const auto sets = CandidateSets(candsets);
    std::vector<nlohmann::ordered_json> lines;
    for (const auto& r : corpus_.records) {
      const auto out = make(r, sets.at(r.question_id));
      lines.push_back({{"question_id", r.question_id},
                       {"output", out ? nlohmann::ordered_json::parse(EmitChain(*out))
                                      : nlohmann::ordered_json(nullptr)}});
    }
    WriteJsonLines(file, lines);
  }

  TempDir dir_;
  testing_support::SyntheticCorpus corpus_;
};

TEST(CliBasicsTest, UsageErrorsAreConfigInvalid) {
  EXPECT_EQ(Cli({}).status, kExitConfigInvalid);
  EXPECT_EQ(Cli({"stats"}).status, kExitConfigInvalid);
  EXPECT_EQ(Cli({"frobnicate"}).status, kExitConfigInvalid);
  EXPECT_EQ(Cli({"--help"}).status, kExitOk);
  const CliRun v = Cli({"--version"});
  EXPECT_EQ(v.status, kExitOk);
  EXPECT_EQ(v.out, std::string(ToolVersion()) + "\n");
}

TEST(CliBasicsTest, ExitCodePolicy) {
  EXPECT_EQ(ExitCodeFor(ErrorCode::kEndpointUnreachable), kExitInfrastructure);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kAuthFailure), kExitInfrastructure);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kConfigInvalid), kExitConfigInvalid);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kSchemaViolation), kExitConfigInvalid);
}

TEST(CliBasicsTest, Sha256KnownVectors) {
  EXPECT_EQ(Sha256Hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(Sha256Hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(CliStatsTest, FixtureMatchesHandCounts) {
  TempDir dir;
  const std::string fixture = std::string(EVCHAIN_FIXTURE_DIR) + "/stats_dataset.jsonl";
  const CliRun r = Cli({"stats", "--dataset", fixture, "--output-dir", dir.path().string()});
  ASSERT_EQ(r.status, kExitOk) << r.err;
  EXPECT_EQ(ReadJson(dir.path() / "stats.json"),
            ReadJson(std::string(EVCHAIN_FIXTURE_DIR) + "/stats_expected.json"));
  EXPECT_NE(r.out.find("Avg. question length"), std::string::npos);
  EXPECT_NE(r.out.find("5.75"), std::string::npos);
  EXPECT_NE(r.out.find("3 (75.0%)"), std::string::npos);

  const json manifest = ReadJson(dir.path() / "manifest.json");
  EXPECT_EQ(manifest["command"], "stats");
  EXPECT_EQ(manifest["tool_version"], std::string(ToolVersion()));
  EXPECT_EQ(manifest["config_sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(manifest["inputs"]["dataset"]["sha256"], Sha256Hex(ReadFile(fixture)));
}

TEST(CliStatsTest, EmptyDatasetIsConfigInvalid) {
  TempDir dir;
  WriteFile(dir.path() / "empty.jsonl", "");
  const CliRun r = Cli({"stats", "--dataset", (dir.path() / "empty.jsonl").string()});
  EXPECT_EQ(r.status, kExitConfigInvalid);
  EXPECT_NE(r.err.find("empty"), std::string::npos);
  EXPECT_EQ(Cli({"stats", "--dataset", (dir.path() / "missing.jsonl").string()}).status,
            kExitConfigInvalid);
}

TEST_F(CliCorpus, CandidatesAreReproducible) {
  for (const char* out : {"c1", "c2"}) {
    ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                   corpus_.pool_path.string(), "--seed", "17", "--output-dir", Path(out)})
                  .status,
              kExitOk);
  }
  EXPECT_EQ(ReadFile(Path("c1") + "/candsets.jsonl"), ReadFile(Path("c2") + "/candsets.jsonl"));
  const json m1 = ReadJson(Path("c1") + "/manifest.json");
  const json m2 = ReadJson(Path("c2") + "/manifest.json");
  EXPECT_EQ(m1["seeds"]["candidate_seed"], 17);
  EXPECT_EQ(m1["config_sha256"], m2["config_sha256"]);  // output_dir is not in the config
  ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--seed", "18", "--output-dir", Path("c3")})
                .status,
            kExitOk);
  EXPECT_NE(ReadFile(Path("c1") + "/candsets.jsonl"), ReadFile(Path("c3") + "/candsets.jsonl"));
  const auto sets = CandidateSets(Path("c1") + "/candsets.jsonl");
  EXPECT_EQ(sets.size(), corpus_.records.size());
  for (const auto& [_, s] : sets) EXPECT_EQ(s.k(), 5u);
}

TEST_F(CliCorpus, EmitTrainingPhaseCardinalities) {
  std::vector<QARecord> two_hop;
  for (const auto& r : corpus_.records) {
    if (r.gold_chain.size() == 2) two_hop.push_back(r);
  }
  ASSERT_FALSE(two_hop.empty());
  dataset::SaveDataset(Path("two_hop.jsonl"), {two_hop[0]});
  ASSERT_EQ(Cli({"emit-training", "--dataset", Path("two_hop.jsonl"), "--pool",
                 corpus_.pool_path.string(), "--phase", "1", "--output-dir", Path("p1")})
                .status,
            kExitOk);
  EXPECT_EQ(ReadJsonLines(Path("p1") + "/samples.jsonl").size(), 2u);
  EXPECT_EQ(ReadJson(Path("p1") + "/manifest.json")["template_version"], "grounding-v1");

  const CliRun r = Cli({"emit-training", "--dataset", corpus_.dataset_path.string(), "--pool",
                        corpus_.pool_path.string(), "--phase", "2", "--augment", "--permute",
                        "--longest-side", "128", "--seed", "3", "--output-dir", Path("p2")});
  ASSERT_EQ(r.status, kExitOk) << r.err;
  const auto samples = ReadJsonLines(Path("p2") + "/samples.jsonl");
  ASSERT_EQ(samples.size(), corpus_.records.size());
  for (const auto& j : samples) {
    const auto s = augment::SampleFromJson(j);
    EXPECT_EQ(s.phase, 2);
    EXPECT_EQ(s.image_refs.size(), 5u);
    for (const auto& ref : s.image_refs) EXPECT_TRUE(fs::exists(ref.image_path)) << ref.image_path;
  }
  EXPECT_EQ(Cli({"emit-training", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--phase", "3", "--output-dir", Path("p3")})
                .status,
            kExitConfigInvalid);
}

TEST_F(CliCorpus, EvaluateGoldReplayScoreRoundTrip) {
  ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--seed", "9", "--output-dir", Path("cand")})
                .status,
            kExitOk);
  StubChatServer server(corpus_.records, CandidateSets(Path("cand") + "/candsets.jsonl"),
                        StubChatServer::Mode::kGoldReplay);
  auto evaluate = [&](const std::string& out) {
    return Cli({"evaluate", "--dataset", corpus_.dataset_path.string(), "--pool",
                corpus_.pool_path.string(), "--candsets", Path("cand") + "/candsets.jsonl",
                "--endpoint-url", server.base_url(), "--model", "stub", "--concurrency", "3",
                "--output-dir", Path(out)});
  };
  const CliRun first = evaluate("eval1");
  ASSERT_EQ(first.status, kExitOk) << first.err;
  const json report = ReadJson(Path("eval1") + "/report.json");
  EXPECT_EQ(report["n_examples"], corpus_.records.size());
  EXPECT_EQ(report["em"], 1.0);
  EXPECT_EQ(report["chain_acc"], 1.0);
  EXPECT_EQ(report["loc_acc"], 1.0);
  for (const char* f : {"scores.jsonl", "predictions.jsonl", "summary.txt", "inference_log.jsonl",
                        "candsets.jsonl", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(Path("eval1") + "/" + f)) << f;
  }
  const json manifest = ReadJson(Path("eval1") + "/manifest.json");
  EXPECT_EQ(manifest["template_version"], "chain-v1");
  EXPECT_EQ(manifest["config"]["endpoint"]["model_name"], "stub");

  ASSERT_EQ(evaluate("eval2").status, kExitOk);
  EXPECT_EQ(ReadFile(Path("eval1") + "/scores.jsonl"), ReadFile(Path("eval2") + "/scores.jsonl"));
  EXPECT_EQ(ReadFile(Path("eval1") + "/predictions.jsonl"),
            ReadFile(Path("eval2") + "/predictions.jsonl"));

  const CliRun scored = Cli({"score", "--predictions", Path("eval1") + "/predictions.jsonl",
                             "--dataset", corpus_.dataset_path.string(), "--candsets",
                             Path("eval1") + "/candsets.jsonl", "--output-dir", Path("score")});
  ASSERT_EQ(scored.status, kExitOk) << scored.err;
  EXPECT_EQ(ReadFile(Path("eval1") + "/report.json"), ReadFile(Path("score") + "/report.json"));
  EXPECT_EQ(ReadFile(Path("eval1") + "/scores.jsonl"), ReadFile(Path("score") + "/scores.jsonl"));
}

TEST_F(CliCorpus, EvaluateCountsModelFailuresAndAbortsOnInfrastructure) {
  ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--output-dir", Path("cand")})
                .status,
            kExitOk);
  StubChatServer server(corpus_.records, CandidateSets(Path("cand") + "/candsets.jsonl"),
                        StubChatServer::Mode::kMalformed);
  std::vector<std::string> args = {"evaluate", "--dataset", corpus_.dataset_path.string(),
                                   "--pool", corpus_.pool_path.string(), "--candsets",
                                   Path("cand") + "/candsets.jsonl", "--endpoint-url",
                                   server.base_url(), "--model", "stub", "--retry-backoff", "0.01"};
  auto with_out = [&](const std::string& out) {
    auto a = args;
    a.push_back("--output-dir");
    a.push_back(Path(out));
    return a;
  };
  ASSERT_EQ(Cli(with_out("bad")).status, kExitOk);
  const json report = ReadJson(Path("bad") + "/report.json");
  EXPECT_EQ(report["n_failed_parses"], corpus_.records.size());
  EXPECT_EQ(report["em"], 0.0);

  server.FailNext(1000, 503);
  auto retry_args = with_out("down");
  retry_args.insert(retry_args.end(), {"--max-retries", "1"});
  const CliRun down = Cli(retry_args);
  EXPECT_EQ(down.status, kExitInfrastructure);
  EXPECT_NE(down.err.find("endpoint-unreachable"), std::string::npos) << down.err;

  server.FailNext(1000, 401);
  EXPECT_EQ(Cli(with_out("auth")).status, kExitInfrastructure);
  server.FailNext(0, 200);

  auto bad_cfg = with_out("cfg");
  bad_cfg.insert(bad_cfg.end(), {"--iou-threshold", "1.5"});
  EXPECT_EQ(Cli(bad_cfg).status, kExitConfigInvalid);
}

TEST_F(CliCorpus, ConfigFileWithFlagPrecedence) {
  StubChatServer server(corpus_.records, {}, StubChatServer::Mode::kGoldReplay);
  WriteFile(Path("run.toml"),
            "[candidates]\n"
            "dataset = \"" + corpus_.dataset_path.string() + "\"\n"
            "pool = \"" + corpus_.pool_path.string() + "\"\n"
            "k = 6\n"
            "seed = 4\n");
  const CliRun from_file = Cli({"--config", Path("run.toml"), "candidates", "--output-dir", Path("a")});
  ASSERT_EQ(from_file.status, kExitOk) << from_file.err;
  ASSERT_EQ(Cli({"--config", Path("run.toml"), "candidates", "--k", "7", "--output-dir", Path("b")})
                .status,
            kExitOk);
  EXPECT_EQ(ReadJson(Path("a") + "/manifest.json")["config"]["k"], 6);
  EXPECT_EQ(ReadJson(Path("a") + "/manifest.json")["config"]["seed"], 4);
  EXPECT_EQ(ReadJson(Path("b") + "/manifest.json")["config"]["k"], 7);
  EXPECT_EQ(ReadJson(Path("b") + "/manifest.json")["config"]["seed"], 4);

  WriteFile(Path("bad.toml"), "[candidates]\nno_such_option = 1\n");
  EXPECT_EQ(Cli({"--config", Path("bad.toml"), "candidates", "--dataset",
                 corpus_.dataset_path.string(), "--pool", corpus_.pool_path.string(),
                 "--output-dir", Path("c")})
                .status,
            kExitConfigInvalid);
}

TEST_F(CliCorpus, EndpointFileIsOverriddenByFlags) {
  ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--output-dir", Path("cand")})
                .status,
            kExitOk);
  StubChatServer server(corpus_.records, CandidateSets(Path("cand") + "/candsets.jsonl"),
                        StubChatServer::Mode::kGoldReplay);
  WriteFile(Path("endpoint.json"),
            json{{"base_url", "http://127.0.0.1:1"}, {"model_name", "from-file"}, {"max_retries", 0}}
                .dump());
  const CliRun r = Cli({"evaluate", "--dataset", corpus_.dataset_path.string(), "--pool",
                        corpus_.pool_path.string(), "--candsets", Path("cand") + "/candsets.jsonl",
                        "--endpoint-config", Path("endpoint.json"), "--endpoint-url",
                        server.base_url(), "--output-dir", Path("eval")});
  ASSERT_EQ(r.status, kExitOk) << r.err;
  const json endpoint = ReadJson(Path("eval") + "/manifest.json")["config"]["endpoint"];
  EXPECT_EQ(endpoint["model_name"], "from-file");
  EXPECT_EQ(endpoint["base_url"], server.base_url());
  EXPECT_EQ(endpoint["max_retries"], 0);
}

TEST_F(CliCorpus, ScoreThresholdSweepAndCenterRule) {
  ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--output-dir", Path("cand")})
                .status,
            kExitOk);
  const fs::path candsets = Path("cand") + "/candsets.jsonl";
  // Each box moved by half its size along both axes: IoU = 1/7 and the
  // predicted center sits on the gold corner.
  WritePredictions(
      Path("half.jsonl"),
      [](const QARecord& r, const dataset::CandidateSet& cs) {
        ModelOutput out = testing_support::GoldReplay(r, cs);
        for (auto& hop : out.chain.hops) {
          for (auto& b : hop.boxes) {
            const double hw = b.width() / 2, hh = b.height() / 2;
            b = {b.x1 + hw, b.y1 + hh, b.x2 + hw, b.y2 + hh};
          }
        }
        return std::optional<ModelOutput>(out);
      },
      candsets);
  auto score = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args = {"score", "--predictions", Path("half.jsonl"), "--dataset",
                                     corpus_.dataset_path.string(), "--candsets", candsets.string(),
                                     "--output-dir", Path(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(Cli(args).status, kExitOk);
    return ReadJson(Path(out) + "/report.json");
  };
  EXPECT_EQ(score("with_center", {})["loc_acc"], 1.0);
  EXPECT_EQ(score("no_center", {"--no-center-rule"})["loc_acc"], 0.0);

  WritePredictions(
      Path("gold.jsonl"),
      [](const QARecord& r, const dataset::CandidateSet& cs) {
        ModelOutput out = testing_support::GoldReplay(r, cs);
        for (auto& hop : out.chain.hops) {
          for (auto& b : hop.boxes) b = {b.x1, b.y1, b.x2, b.y1 + b.height() * 0.6};
        }
        return std::optional<ModelOutput>(out);
      },
      candsets);
  double last = 2;
  for (const char* tau : {"0.3", "0.5", "0.6", "0.7", "0.9"}) {
    std::vector<std::string> args = {"score", "--predictions", Path("gold.jsonl"), "--dataset",
                                     corpus_.dataset_path.string(), "--candsets", candsets.string(),
                                     "--no-center-rule", "--iou-threshold", tau, "--output-dir",
                                     Path(std::string("tau") + tau)};
    ASSERT_EQ(Cli(args).status, kExitOk);
    const double loc = ReadJson(Path(std::string("tau") + tau) + "/report.json")["loc_acc"];
    EXPECT_LE(loc, last);
    last = loc;
  }
  EXPECT_EQ(last, 0.0);
}

TEST_F(CliCorpus, ScoreReportsUnknownAndMissingPredictions) {
  ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                 corpus_.pool_path.string(), "--output-dir", Path("cand")})
                .status,
            kExitOk);
  const auto sets = CandidateSets(Path("cand") + "/candsets.jsonl");
  const auto& first = corpus_.records[0];
  WriteJsonLines(Path("preds.jsonl"),
                 {{{"question_id", first.question_id},
                   {"output", nlohmann::ordered_json::parse(
                                  EmitChain(testing_support::GoldReplay(first, sets.at(first.question_id))))}},
                  {{"question_id", "nobody"}, {"output", nullptr}},
                  {{"question_id", corpus_.records[1].question_id},
                   {"raw_text", "no structure here"}}});
  const CliRun r = Cli({"score", "--predictions", Path("preds.jsonl"), "--dataset",
                        corpus_.dataset_path.string(), "--candsets", Path("cand") + "/candsets.jsonl",
                        "--output-dir", Path("score")});
  ASSERT_EQ(r.status, kExitOk) << r.err;
  const json issues = ReadJson(Path("score") + "/issues.json");
  EXPECT_EQ(issues["unknown_prediction_ids"], json::array({"nobody"}));
  EXPECT_EQ(issues["missing_predictions"].size(), corpus_.records.size() - 2);
  const json report = ReadJson(Path("score") + "/report.json");
  EXPECT_DOUBLE_EQ(report["em"].get<double>(), 1.0 / corpus_.records.size());
  EXPECT_EQ(report["n_failed_parses"], corpus_.records.size() - 1);
}

class CliOverlay : public CliCorpus {
 protected:
  void SetUp() override {
    CliCorpus::SetUp();
    ASSERT_EQ(Cli({"candidates", "--dataset", corpus_.dataset_path.string(), "--pool",
                   corpus_.pool_path.string(), "--output-dir", Path("cand")})
                  .status,
              kExitOk);
  }

  CliRun Overlay(const QARecord& r, const std::string& preds, const std::string& out) {
    return Cli({"overlay", "--question-id", r.question_id, "--dataset",
                corpus_.dataset_path.string(), "--pool", corpus_.pool_path.string(), "--candsets",
                Path("cand") + "/candsets.jsonl", "--predictions", Path(preds), "--output-dir",
                Path(out)});
  }

  static int CountColor(const Raster& img, Rgb c) {
    int n = 0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) n += img.at(x, y) == c;
    }
    return n;
  }
};

TEST_F(CliOverlay, GoldReplayStrokesCoincide) {
  WritePredictions(
      Path("gold.jsonl"),
      [](const QARecord& r, const dataset::CandidateSet& cs) {
        return std::optional<ModelOutput>(testing_support::GoldReplay(r, cs));
      },
      Path("cand") + "/candsets.jsonl");
  const QARecord* four_hop = nullptr;
  for (const auto& r : corpus_.records) {
    if (r.gold_chain.size() == 4) four_hop = &r;
  }
  ASSERT_NE(four_hop, nullptr);
  const CliRun r = Overlay(*four_hop, "gold.jsonl", "ov");
  ASSERT_EQ(r.status, kExitOk) << r.err;
  for (int t = 1; t <= 4; ++t) {
    const fs::path png = Path("ov") + "/hop_" + std::to_string(t) + ".png";
    ASSERT_TRUE(fs::exists(png));
    // Dashed prediction strokes lie on the solid gold strokes, so the image
    // shows a single panel with both colors.
    const Raster img = ReadPng(png);
    EXPECT_GT(CountColor(img, {220, 0, 0}), 0);
    EXPECT_GT(CountColor(img, {0, 160, 0}), 0);
  }
  EXPECT_FALSE(fs::exists(Path("ov") + "/hop_5.png"));
  const json index = ReadJson(Path("ov") + "/index.json");
  ASSERT_EQ(index["hops"].size(), 4u);
  for (const auto& h : index["hops"]) {
    EXPECT_TRUE(h["image_correct"].get<bool>());
    EXPECT_TRUE(h["boxes_correct"].get<bool>());
    EXPECT_EQ(h["gold"]["label"], h["pred"]["label"]);
  }
  EXPECT_TRUE(fs::exists(Path("ov") + "/index.html"));
}

TEST_F(CliOverlay, ShiftedBoxesAreDisjointAndWrongImagesGetTheirOwnPanel) {
  const auto& rec = corpus_.records[0];
  WritePredictions(
      Path("shift.jsonl"),
      [](const QARecord& r, const dataset::CandidateSet& cs) {
        return std::optional<ModelOutput>(
            testing_support::ShiftBoxesRight(testing_support::GoldReplay(r, cs)));
      },
      Path("cand") + "/candsets.jsonl");
  ASSERT_EQ(Overlay(rec, "shift.jsonl", "shift").status, kExitOk);
  const json index = ReadJson(Path("shift") + "/index.json");
  EXPECT_TRUE(index["hops"][0]["image_correct"].get<bool>());
  EXPECT_FALSE(index["hops"][0]["boxes_correct"].get<bool>());
  const auto& gold_box = index["hops"][0]["gold"]["boxes"][0];
  const auto& pred_box = index["hops"][0]["pred"]["boxes"][0];
  EXPECT_GE(pred_box[0].get<double>(), gold_box[2].get<double>());

  WritePredictions(
      Path("rev.jsonl"),
      [](const QARecord& r, const dataset::CandidateSet& cs) {
        return std::optional<ModelOutput>(
            testing_support::ReverseHops(testing_support::GoldReplay(r, cs)));
      },
      Path("cand") + "/candsets.jsonl");
  ASSERT_EQ(Overlay(rec, "rev.jsonl", "rev").status, kExitOk);
  const Raster single = ReadPng(Path("rev") + "/hop_1.png");
  const auto& doc = corpus_.pool.Get(rec.gold_chain[0].doc_id);
  EXPECT_GT(single.width(), 2 * doc.width);  // gold and predicted panels side by side
}

TEST_F(CliOverlay, MissingQuestion) {
  WriteJsonLines(Path("none.jsonl"), {});
  QARecord ghost = corpus_.records[0];
  ghost.question_id = "ghost";
  const CliRun r = Overlay(ghost, "none.jsonl", "x");
  EXPECT_EQ(r.status, kExitConfigInvalid);
  EXPECT_NE(r.err.find("missing-question"), std::string::npos) << r.err;
  EXPECT_EQ(Overlay(corpus_.records[0], "none.jsonl", "y").status, kExitConfigInvalid);
}

// Source questions whose supporting sentences are drawn from fixture pages.
struct BuildFixture {
  std::vector<testing_support::FixturePage> pages;
  std::vector<annotate::SourceQuestion> questions;
};

BuildFixture MakeBuildFixture() {
  BuildFixture f;
  for (int d = 0; d < 6; ++d) {
    f.pages.push_back(testing_support::MakeFixturePage("page" + std::to_string(d), 6, 100 + d));
  }
  static const char* kTypes[] = {"comparison", "inference", "compositional", "bridge_comparison"};
  for (int q = 0; q < 8; ++q) {
    const auto& a = f.pages[q % 6];
    const auto& b = f.pages[(q + 1) % 6];
    annotate::SourceQuestion sq;
    sq.question_id = "q" + std::to_string(q);
    sq.question = "Which fact links " + a.snapshot.doc_id + " and " + b.snapshot.doc_id + "?";
    sq.gold_answers = {"answer " + std::to_string(q)};
    sq.question_type = kTypes[q % 4];
    sq.supporting_facts = {{a.snapshot.doc_id, a.sentences[q % a.sentences.size()].text},
                           {b.snapshot.doc_id, b.sentences[0].text}};
    f.questions.push_back(sq);
  }
  annotate::SourceQuestion lost;
  lost.question_id = "q-lost";
  lost.question = "Which page does not exist?";
  lost.gold_answers = {"none"};
  lost.question_type = "comparison";
  lost.supporting_facts = {{"page0", "A sentence that appears nowhere at all in the page."},
                           {"page1", f.pages[1].sentences[0].text}};
  f.questions.push_back(lost);
  return f;
}

void WriteQuestions(const fs::path& path, const std::vector<annotate::SourceQuestion>& qs) {
  std::vector<nlohmann::ordered_json> lines;
  for (const auto& q : qs) {
    nlohmann::ordered_json facts = nlohmann::ordered_json::array();
    for (const auto& [doc, sentence] : q.supporting_facts) facts.push_back({doc, sentence});
    lines.push_back({{"question_id", q.question_id},
                     {"question", q.question},
                     {"gold_answers", q.gold_answers},
                     {"question_type", q.question_type},
                     {"supporting_facts", facts}});
  }
  WriteJsonLines(path, lines);
}

TEST(CliBuildTest, AnnotatesFromSnapshotDirectory) {
  TempDir dir;
  BuildFixture f = MakeBuildFixture();
  for (auto& page : f.pages) SaveSnapshot(dir.path() / "snaps", page.snapshot);
  WriteQuestions(dir.path() / "questions.jsonl", f.questions);
  const CliRun r = Cli({"build", "--questions", (dir.path() / "questions.jsonl").string(),
                        "--snapshot-dir", (dir.path() / "snaps").string(), "--test-fraction",
                        "0.25", "--output-dir", (dir.path() / "out").string()});
  ASSERT_EQ(r.status, kExitOk) << r.err;
  const auto records = dataset::LoadDataset(dir.path() / "out" / "dataset.jsonl");
  EXPECT_EQ(records.size(), 8u);
  const auto pool = dataset::LoadPool(dir.path() / "out" / "pool.jsonl");
  EXPECT_EQ(pool.size(), 6u);
  EXPECT_TRUE(dataset::ValidateDataset(records, pool).rejected.empty());
  const auto rejections = ReadJsonLines(dir.path() / "out" / "rejections.jsonl");
  ASSERT_EQ(rejections.size(), 1u);
  EXPECT_EQ(rejections[0]["question_id"], "q-lost");
  EXPECT_EQ(rejections[0]["reason"], "no-match");

  const auto train = dataset::LoadDataset(dir.path() / "out" / "train.jsonl");
  const auto test = dataset::LoadDataset(dir.path() / "out" / "test.jsonl");
  EXPECT_EQ(train.size() + test.size(), records.size());
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "stats.json"));
  EXPECT_EQ(ReadJson(dir.path() / "out" / "manifest.json")["seeds"]["split_seed"], 0);

  // The box of each hop is the matched element's line-rect union.
  const auto& q0 = f.questions[0];
  const auto& page0 = f.pages[0];
  const auto& element =
      page0.snapshot.elements[page0.sentences[0].element_index];
  BoundingBox expect = element.line_rects[0];
  for (const auto& lr : element.line_rects) expect = Union(expect, lr);
  ASSERT_EQ(records[0].question_id, q0.question_id);
  EXPECT_EQ(records[0].gold_chain[0].boxes.at(0), expect);
}

TEST(CliBuildTest, CapturesThroughWebDriverInPriorityOrder) {
  TempDir dir;
  BuildFixture f = MakeBuildFixture();
  std::map<std::string, testing_support::FakePage> pages;
  std::vector<nlohmann::ordered_json> urls;
  for (const auto& page : f.pages) {
    testing_support::FakePage fake;
    fake.doc_height = page.snapshot.height;
    for (const auto& e : page.snapshot.elements) {
      fake.elements.push_back({std::string(ElementKindName(e.kind)), e.text, e.line_rects});
    }
    const std::string url = "http://fixture/" + page.snapshot.doc_id;
    pages[url] = fake;
    urls.push_back({{"doc_id", page.snapshot.doc_id}, {"url", url}, {"group_id", "deck"}});
  }
  urls.push_back({{"doc_id", "orphan"}, {"url", "http://fixture/orphan-missing"}});
  testing_support::FakeWebDriver driver(pages);
  WriteJsonLines(dir.path() / "urls.jsonl", urls);
  WriteQuestions(dir.path() / "questions.jsonl", f.questions);

  const CliRun r =
      Cli({"build", "--questions", (dir.path() / "questions.jsonl").string(), "--snapshot-dir",
           (dir.path() / "snaps").string(), "--urls", (dir.path() / "urls.jsonl").string(),
           "--capture", "--webdriver-url", driver.base_url(), "--settle-delay-ms", "0",
           "--viewport-width", "1100", "--concurrency", "1", "--output-dir",
           (dir.path() / "out").string()});
  ASSERT_EQ(r.status, kExitOk) << r.err;
  // page1 backs five questions and page0 four; the orphan no question needs
  // goes last.
  const auto nav = driver.navigations();
  ASSERT_EQ(nav.size(), 7u);
  EXPECT_EQ(nav.front(), "http://fixture/page1");
  EXPECT_EQ(nav.back(), "http://fixture/orphan-missing");
  const auto failures = ReadJsonLines(dir.path() / "out" / "capture_failures.jsonl");
  ASSERT_EQ(failures.size(), 1u);
  EXPECT_EQ(failures[0]["doc_id"], "orphan");

  const auto records = dataset::LoadDataset(dir.path() / "out" / "dataset.jsonl");
  EXPECT_EQ(records.size(), 8u);
  const auto pool = dataset::LoadPool(dir.path() / "out" / "pool.jsonl");
  EXPECT_EQ(pool.Get("page2").group_id, std::optional<std::string>("deck"));
  EXPECT_EQ(pool.Get("page2").source_meta.at("url"), "http://fixture/page2");

  // A second run finds every page on disk and captures nothing.
  ASSERT_EQ(Cli({"build", "--questions", (dir.path() / "questions.jsonl").string(),
                 "--snapshot-dir", (dir.path() / "snaps").string(), "--urls",
                 (dir.path() / "urls.jsonl").string(), "--capture", "--webdriver-url",
                 driver.base_url(), "--settle-delay-ms", "0", "--max-pages", "6", "--output-dir",
                 (dir.path() / "out2").string()})
                .status,
            kExitOk);
  EXPECT_EQ(driver.navigations().size(), 7u);
  EXPECT_EQ(ReadFile(dir.path() / "out" / "dataset.jsonl"),
            ReadFile(dir.path() / "out2" / "dataset.jsonl"));
}

}  // namespace
}  // namespace evchain::cli
