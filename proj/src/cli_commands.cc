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

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "evchain/cli.h"
#include "evchain/jsonl.h"
#include "evchain/prompt.h"
#include "evchain/raster.h"
#include "evchain/snapshot.h"

namespace evchain::cli {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void RequireFile(const fs::path& path, const std::string& field) {
  if (path.empty()) throw Error(ErrorCode::kConfigInvalid, "is required", field);
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorCode::kConfigInvalid, "no such file: " + path.string(), field);
  }
}

std::vector<QARecord> LoadRecords(const fs::path& path) {
  RequireFile(path, "dataset");
  auto records = dataset::LoadDataset(path);
  if (records.empty()) throw Error(ErrorCode::kConfigInvalid, "dataset is empty", path.string());
  return records;
}

dataset::DocumentPool LoadPool(const fs::path& path) {
  RequireFile(path, "pool");
  return dataset::LoadPool(path);
}

void PrepareOutputDir(const fs::path& dir) {
  if (dir.empty()) throw Error(ErrorCode::kConfigInvalid, "is required", "output_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".write-probe";
  std::ofstream f(probe);
  if (ec || !f) throw Error(ErrorCode::kConfigInvalid, "not writable: " + dir.string(), "output_dir");
  f.close();
  fs::remove(probe, ec);
}

std::map<std::string, dataset::CandidateSet> ObtainCandidateSets(
    const std::vector<QARecord>& records, const dataset::DocumentPool& pool,
    const std::optional<fs::path>& path, std::size_t k, std::uint64_t seed,
    dataset::DistractorPolicy policy) {
  std::map<std::string, dataset::CandidateSet> sets;
  if (path) {
    RequireFile(*path, "candsets");
    sets = dataset::LoadCandidateSets(*path, records);
  } else {
    for (const auto& r : records) {
      sets.emplace(r.question_id, dataset::BuildCandidateSet(r, pool, k, seed, policy));
    }
  }
  for (const auto& r : records) {
    auto it = sets.find(r.question_id);
    if (it == sets.end()) {
      throw Error(ErrorCode::kConfigInvalid, "no candidate set for question", r.question_id);
    }
    dataset::ValidateCandidateSet(it->second, r);
  }
  return sets;
}

std::vector<dataset::CandidateSet> InRecordOrder(
    const std::vector<QARecord>& records,
    const std::map<std::string, dataset::CandidateSet>& sets) {
  std::vector<dataset::CandidateSet> out;
  for (const auto& r : records) out.push_back(sets.at(r.question_id));
  return out;
}

ordered_json PathOrNull(const std::optional<fs::path>& p) {
  return p ? ordered_json(p->string()) : ordered_json(nullptr);
}

struct PredictionSet {
  std::map<std::string, std::optional<ModelOutput>> outputs;
  std::vector<std::string> invalid_outputs;
};

// A stored output is trusted only if it passes the schema; lines without one
// fall back to parsing raw_text the same way evaluate does.
PredictionSet LoadPredictions(const fs::path& path) {
  RequireFile(path, "predictions");
  PredictionSet set;
  std::size_t line = 0;
  for (const auto& j : ReadJsonLines(path)) {
    ++line;
    if (!j.is_object() || !j.contains("question_id") || !j["question_id"].is_string()) {
      throw Error(ErrorCode::kSchemaViolation, "prediction without question_id",
                  "line " + std::to_string(line));
    }
    const std::string qid = j["question_id"].get<std::string>();
    if (set.outputs.count(qid)) {
      throw Error(ErrorCode::kSchemaViolation, "duplicate prediction for " + qid,
                  "line " + std::to_string(line));
    }
    std::optional<ModelOutput> out;
    if (j.contains("output") && !j["output"].is_null()) {
      try {
        out = ParseChain(j["output"].dump());
      } catch (const Error&) {
        set.invalid_outputs.push_back(qid);
      }
    } else if (j.contains("raw_text") && j["raw_text"].is_string()) {
      out = model::ParseModelText(j["raw_text"].get<std::string>()).output;
    }
    set.outputs.emplace(qid, std::move(out));
  }
  return set;
}

ordered_json PredictionToJson(const model::InferenceResult& r) {
  ordered_json j;
  j["question_id"] = r.question_id;
  j["parse_ok"] = r.output.has_value();
  j["output"] = r.output ? ordered_json::parse(EmitChain(*r.output)) : ordered_json(nullptr);
  j["failure_reason"] = r.failure_reason;
  j["raw_text"] = r.raw_text;
  return j;
}

void WriteReport(const fs::path& dir, const std::vector<metrics::ExampleScore>& scores,
                 const metrics::Report& report, const metrics::MatchConfig& match) {
  std::vector<ordered_json> lines;
  for (const auto& s : scores) lines.push_back(metrics::ScoreToJson(s));
  WriteJsonLines(dir / "scores.jsonl", lines);
  WriteFile(dir / "report.json", metrics::ReportToJson(report, match).dump(2) + "\n");
  WriteFile(dir / "summary.txt", metrics::FormatSummary(report, match));
}

std::string Hex(const unsigned char* data, std::size_t n) {
  static const char kDigits[] = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += kDigits[data[i] >> 4];
    s += kDigits[data[i] & 15];
  }
  return s;
}

}  // namespace

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEndpointUnreachable:
    case ErrorCode::kAuthFailure:
    case ErrorCode::kRequestRejected:
    case ErrorCode::kNavigationTimeout:
    case ErrorCode::kCaptureFailed:
    case ErrorCode::kScriptFailure:
      return kExitInfrastructure;
    case ErrorCode::kInvariantViolation:
      return kExitFailure;
    default:
      return kExitConfigInvalid;
  }
}

std::string_view ToolVersion() { return EVCHAIN_VERSION; }

std::string Sha256Hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "SHA-256 failed");
  }
  return Hex(md, len);
}

ordered_json MakeManifest(const std::string& command, const ordered_json& config,
                          const ordered_json& seeds,
                          const std::optional<std::string>& template_version,
                          const std::vector<std::pair<std::string, fs::path>>& inputs) {
  ordered_json m;
  m["tool"] = "evchain";
  m["tool_version"] = ToolVersion();
  m["command"] = command;
  m["config"] = config;
  m["config_sha256"] = Sha256Hex(config.dump());
  m["seeds"] = seeds;
  m["template_version"] = template_version ? ordered_json(*template_version) : ordered_json(nullptr);
  ordered_json in = ordered_json::object();
  for (const auto& [name, path] : inputs) {
    in[name] = {{"path", path.string()}, {"sha256", Sha256Hex(ReadFile(path))}};
  }
  m["inputs"] = std::move(in);
  m["created_at"] = UtcTimestamp();
  return m;
}

void WriteManifest(const fs::path& output_dir, const ordered_json& manifest) {
  WriteFile(output_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string FormatStats(const dataset::DatasetStats& s) {
  std::ostringstream os;
  char line[160];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(line, sizeof line, "%-30s %14s\n", name, value.c_str());
    os << line;
  };
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto share = [](std::size_t n, double pct) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%zu (%.1f%%)", n, pct);
    return std::string(buf);
  };
  row("Questions", std::to_string(s.questions));
  row("Avg. question length", fixed(s.avg_question_length));
  row("Avg. answer length", fixed(s.avg_answer_length));
  row("Unique evidence screenshots", std::to_string(s.unique_screenshots));
  row("Total boxes", std::to_string(s.total_boxes));
  row("Avg. boxes", fixed(s.avg_boxes));
  for (const auto& [hops, n] : s.hop_counts) {
    row((std::to_string(hops) + "-hop").c_str(), share(n, s.HopPercent(hops)));
  }
  for (const auto& [type, n] : s.type_counts) {
    row(("Type: " + type).c_str(), share(n, s.TypePercent(type)));
  }
  return os.str();
}

void RunStats(const StatsOptions& options, std::ostream& out) {
  const auto records = LoadRecords(options.dataset);
  const dataset::DatasetStats stats = dataset::ComputeStats(records);
  out << FormatStats(stats);
  if (!options.output_dir) return;
  PrepareOutputDir(*options.output_dir);
  WriteFile(*options.output_dir / "stats.json", dataset::StatsToJson(stats).dump(2) + "\n");
  const ordered_json config = {{"dataset", options.dataset.string()}};
  WriteManifest(*options.output_dir, MakeManifest("stats", config, ordered_json::object(),
                                                  std::nullopt, {{"dataset", options.dataset}}));
}

void RunCandidates(const CandidatesOptions& options, std::ostream& out) {
  const auto records = LoadRecords(options.dataset);
  const auto pool = LoadPool(options.pool);
  PrepareOutputDir(options.output_dir);
  const auto sets =
      ObtainCandidateSets(records, pool, std::nullopt, options.k, options.seed, options.policy);
  dataset::SaveCandidateSets(options.output_dir / "candsets.jsonl", InRecordOrder(records, sets));
  const ordered_json config = {{"dataset", options.dataset.string()},
                               {"pool", options.pool.string()},
                               {"k", options.k},
                               {"seed", options.seed},
                               {"policy", dataset::PolicyName(options.policy)}};
  WriteManifest(options.output_dir,
                MakeManifest("candidates", config, {{"candidate_seed", options.seed}}, std::nullopt,
                             {{"dataset", options.dataset}, {"pool", options.pool}}));
  out << "wrote " << sets.size() << " candidate sets (k=" << options.k << ")\n";
}

void RunEmitTraining(const EmitTrainingOptions& options, std::ostream& out) {
  if (options.phase != 1 && options.phase != 2) {
    throw Error(ErrorCode::kConfigInvalid, "must be 1 or 2", "phase");
  }
  if (options.longest_side && *options.longest_side <= 0) {
    throw Error(ErrorCode::kConfigInvalid, "must be positive", "longest_side");
  }
  options.augment_config.Validate();
  const auto records = LoadRecords(options.dataset);
  const auto pool = LoadPool(options.pool);
  PrepareOutputDir(options.output_dir);

  augment::EmitOptions emit;
  emit.output_dir = options.output_dir;
  emit.augment = options.augment;
  emit.augment_config = options.augment_config;
  emit.permute = options.permute;
  emit.longest_side = options.longest_side;

  std::vector<ordered_json> lines;
  if (options.phase == 1) {
    for (const auto& r : records) {
      for (const auto& s : augment::EmitPhase1(r, pool, options.seed, emit)) {
        lines.push_back(augment::SampleToJson(s));
      }
    }
  } else {
    const auto sets = ObtainCandidateSets(records, pool, options.candsets, options.k,
                                          options.candidate_seed, options.policy);
    for (const auto& r : records) {
      lines.push_back(augment::SampleToJson(
          augment::EmitPhase2(r, sets.at(r.question_id), pool, options.seed, emit)));
    }
  }
  WriteJsonLines(options.output_dir / "samples.jsonl", lines);

  ordered_json config = {{"dataset", options.dataset.string()},
                         {"pool", options.pool.string()},
                         {"candsets", PathOrNull(options.candsets)},
                         {"phase", options.phase},
                         {"seed", options.seed},
                         {"k", options.k},
                         {"candidate_seed", options.candidate_seed},
                         {"policy", dataset::PolicyName(options.policy)},
                         {"augment", options.augment},
                         {"augment_config", augment::AugmentConfigToJson(options.augment_config)},
                         {"permute", options.permute},
                         {"longest_side", options.longest_side ? ordered_json(*options.longest_side)
                                                               : ordered_json(nullptr)}};
  std::vector<std::pair<std::string, fs::path>> inputs = {{"dataset", options.dataset},
                                                          {"pool", options.pool}};
  if (options.candsets) inputs.emplace_back("candsets", *options.candsets);
  WriteManifest(options.output_dir,
                MakeManifest("emit-training", config,
                             {{"seed", options.seed}, {"candidate_seed", options.candidate_seed}},
                             options.phase == 1 ? DefaultGroundingPrompt().version
                                                : DefaultChainPrompt().version,
                             inputs));
  out << "wrote " << lines.size() << " phase " << options.phase << " samples\n";
}

void RunConfig::Validate() const {
  match.Validate();
  endpoint.Validate();
  if (k == 0) throw Error(ErrorCode::kConfigInvalid, "must be positive", "k");
  if (concurrency_limit <= 0) {
    throw Error(ErrorCode::kConfigInvalid, "must be positive", "concurrency_limit");
  }
}

ordered_json RunConfigToJson(const RunConfig& cfg) {
  return {{"dataset", cfg.dataset.string()},
          {"pool", cfg.pool.string()},
          {"candsets", PathOrNull(cfg.candsets)},
          {"candidate_seed", cfg.candidate_seed},
          {"k", cfg.k},
          {"policy", dataset::PolicyName(cfg.policy)},
          {"match", metrics::MatchConfigToJson(cfg.match)},
          {"endpoint", model::EndpointConfigToJson(cfg.endpoint)},
          {"output_dir", cfg.output_dir.string()},
          {"concurrency_limit", cfg.concurrency_limit}};
}

metrics::Report RunEvaluate(const RunConfig& cfg, std::ostream& out) {
  cfg.Validate();
  const auto records = LoadRecords(cfg.dataset);
  const auto pool = LoadPool(cfg.pool);
  PrepareOutputDir(cfg.output_dir);
  const auto sets =
      ObtainCandidateSets(records, pool, cfg.candsets, cfg.k, cfg.candidate_seed, cfg.policy);
  dataset::SaveCandidateSets(cfg.output_dir / "candsets.jsonl", InRecordOrder(records, sets));

  std::mutex log_mu;
  std::ofstream log(cfg.output_dir / "inference_log.jsonl");
  auto append_log = [&](const ordered_json& entry) {
    std::lock_guard<std::mutex> lock(log_mu);
    log << entry.dump(-1, ' ', false, ordered_json::error_handler_t::replace) << '\n';
  };
  model::ChatClient client(cfg.endpoint, append_log);
  const PromptTemplate tmpl = DefaultChainPrompt();

  std::vector<std::optional<model::InferenceResult>> results(records.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size() && !abort; i = next++) {
      try {
        const auto& r = records[i];
        results[i] = client.Infer(r, sets.at(r.question_id), pool, tmpl);
        append_log({{"id", r.question_id},
                    {"event", "result"},
                    {"parse_ok", results[i]->output.has_value()},
                    {"attempts", results[i]->attempts},
                    {"latency_seconds", results[i]->latency_seconds}});
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        abort = true;
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.concurrency_limit), records.size());
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  log.close();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<metrics::ExampleScore> scores;
  std::vector<ordered_json> predictions;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    scores.push_back(metrics::ScoreExample(r, sets.at(r.question_id), results[i]->output, cfg.match));
    predictions.push_back(PredictionToJson(*results[i]));
  }
  const metrics::Report report = metrics::Aggregate(scores, records);
  WriteJsonLines(cfg.output_dir / "predictions.jsonl", predictions);
  WriteReport(cfg.output_dir, scores, report, cfg.match);

  std::vector<std::pair<std::string, fs::path>> inputs = {{"dataset", cfg.dataset},
                                                          {"pool", cfg.pool}};
  if (cfg.candsets) inputs.emplace_back("candsets", *cfg.candsets);
  WriteManifest(cfg.output_dir, MakeManifest("evaluate", RunConfigToJson(cfg),
                                             {{"candidate_seed", cfg.candidate_seed}},
                                             tmpl.version, inputs));
  out << metrics::FormatSummary(report, cfg.match);
  return report;
}

metrics::Report RunScore(const ScoreOptions& options, std::ostream& out) {
  options.match.Validate();
  const auto records = LoadRecords(options.dataset);
  RequireFile(options.candsets, "candsets");
  const auto sets = dataset::LoadCandidateSets(options.candsets, records);
  const PredictionSet preds = LoadPredictions(options.predictions);
  PrepareOutputDir(options.output_dir);

  std::set<std::string> known;
  std::vector<std::string> missing;
  std::vector<metrics::ExampleScore> scores;
  for (const auto& r : records) {
    known.insert(r.question_id);
    auto cs = sets.find(r.question_id);
    if (cs == sets.end()) {
      throw Error(ErrorCode::kConfigInvalid, "no candidate set for question", r.question_id);
    }
    auto p = preds.outputs.find(r.question_id);
    if (p == preds.outputs.end()) missing.push_back(r.question_id);
    const std::optional<ModelOutput> output =
        p == preds.outputs.end() ? std::nullopt : p->second;
    scores.push_back(metrics::ScoreExample(r, cs->second, output, options.match));
  }
  std::vector<std::string> unknown;
  for (const auto& [qid, _] : preds.outputs) {
    if (!known.count(qid)) unknown.push_back(qid);
  }

  const metrics::Report report = metrics::Aggregate(scores, records);
  WriteReport(options.output_dir, scores, report, options.match);
  WriteFile(options.output_dir / "issues.json",
            ordered_json{{"unknown_prediction_ids", unknown},
                         {"missing_predictions", missing},
                         {"invalid_outputs", preds.invalid_outputs}}
                    .dump(2) +
                "\n");
  const ordered_json config = {{"predictions", options.predictions.string()},
                               {"dataset", options.dataset.string()},
                               {"candsets", options.candsets.string()},
                               {"match", metrics::MatchConfigToJson(options.match)},
                               {"output_dir", options.output_dir.string()}};
  WriteManifest(options.output_dir,
                MakeManifest("score", config, ordered_json::object(), std::nullopt,
                             {{"predictions", options.predictions},
                              {"dataset", options.dataset},
                              {"candsets", options.candsets}}));
  if (!unknown.empty()) out << unknown.size() << " predictions for unknown questions ignored\n";
  if (!missing.empty()) out << missing.size() << " questions without a prediction scored false\n";
  out << metrics::FormatSummary(report, options.match);
  return report;
}

namespace {

constexpr Rgb kGoldColor = {0, 160, 0};
constexpr Rgb kPredColor = {220, 0, 0};
constexpr Rgb kInkColor = {20, 20, 20};
constexpr int kHeader = 24;
constexpr int kGap = 8;

struct Panel {
  std::string caption;
  Raster image;
};

Raster LoadDocImage(const dataset::DocumentPool& pool, const std::string& doc_id) {
  const auto* doc = pool.Find(doc_id);
  if (!doc) throw Error(ErrorCode::kMissingImage, "document not in pool", doc_id);
  try {
    return ReadPng(doc->image_path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kMissingImage, e.message(), doc->image_path);
  }
}

Raster Compose(const std::string& title, const std::vector<Panel>& panels) {
  int width = 0, height = 0;
  for (const auto& p : panels) {
    width += p.image.width() + (width ? kGap : 0);
    height = std::max(height, p.image.height());
  }
  Raster canvas(std::max(width, 160), height + 2 * kHeader, {235, 235, 235});
  canvas.DrawText(4, 4, title, kInkColor, 3);
  int x0 = 0;
  for (const auto& p : panels) {
    canvas.DrawText(x0 + 4, kHeader + 4, p.caption, kInkColor, 3);
    for (int y = 0; y < p.image.height(); ++y) {
      for (int x = 0; x < p.image.width(); ++x) canvas.set(x0 + x, 2 * kHeader + y, p.image.at(x, y));
    }
    x0 += p.image.width() + kGap;
  }
  return canvas;
}

ordered_json BoxesJson(const std::vector<BoundingBox>& boxes) {
  ordered_json a = ordered_json::array();
  for (const auto& b : boxes) a.push_back(BoxToJson(b));
  return a;
}

std::string HtmlEscape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void RunOverlay(const OverlayOptions& options, std::ostream& out) {
  const auto records = LoadRecords(options.dataset);
  const auto pool = LoadPool(options.pool);
  const auto rec = std::find_if(records.begin(), records.end(), [&](const QARecord& r) {
    return r.question_id == options.question_id;
  });
  if (rec == records.end()) {
    throw Error(ErrorCode::kMissingQuestion, "not in dataset", options.question_id);
  }
  RequireFile(options.candsets, "candsets");
  const auto sets = dataset::LoadCandidateSets(options.candsets, records);
  const auto cs = sets.find(options.question_id);
  if (cs == sets.end()) {
    throw Error(ErrorCode::kMissingQuestion, "not in candidate sets", options.question_id);
  }
  const PredictionSet preds = LoadPredictions(options.predictions);
  const auto pit = preds.outputs.find(options.question_id);
  if (pit == preds.outputs.end()) {
    throw Error(ErrorCode::kMissingQuestion, "not in predictions", options.question_id);
  }
  const std::optional<ModelOutput>& pred = pit->second;
  PrepareOutputDir(options.output_dir);

  const std::size_t n_gold = rec->gold_chain.size();
  const std::size_t n_pred = pred ? pred->chain.size() : 0;
  const std::size_t n_hops = std::max(n_gold, n_pred);
  ordered_json hops = ordered_json::array();
  std::string rows;
  for (std::size_t t = 0; t < n_hops; ++t) {
    const std::string title = "HOP " + std::to_string(t + 1);
    std::vector<Panel> panels;
    ordered_json entry;
    entry["hop"] = t + 1;

    const GoldHop* gold = t < n_gold ? &rec->gold_chain[t] : nullptr;
    const EvidenceHop* hop = t < n_pred ? &pred->chain.hops[t] : nullptr;
    const std::string* pred_doc = hop ? cs->second.DocForLabel(hop->image_id) : nullptr;

    if (gold) {
      Raster img = LoadDocImage(pool, gold->doc_id);
      for (const auto& b : gold->boxes) img.StrokeBox(b, kGoldColor, 3);
      if (pred_doc && *pred_doc == gold->doc_id) {
        for (const auto& b : hop->boxes) img.StrokeBox(b, kPredColor, 2, 6);
      }
      panels.push_back({pred_doc && *pred_doc == gold->doc_id ? "GOLD PRED" : "GOLD", std::move(img)});
      entry["gold"] = {{"label", cs->second.gold_map.at(gold->doc_id)},
                       {"doc_id", gold->doc_id},
                       {"boxes", BoxesJson(gold->boxes)}};
    } else {
      entry["gold"] = nullptr;
    }
    if (pred_doc && (!gold || *pred_doc != gold->doc_id)) {
      Raster img = LoadDocImage(pool, *pred_doc);
      for (const auto& b : hop->boxes) img.StrokeBox(b, kPredColor, 2, 6);
      panels.push_back({"PRED", std::move(img)});
    }
    if (hop) {
      entry["pred"] = {{"label", hop->image_id},
                       {"doc_id", pred_doc ? ordered_json(*pred_doc) : ordered_json(nullptr)},
                       {"boxes", BoxesJson(hop->boxes)}};
    } else {
      entry["pred"] = nullptr;
    }
    if (gold && hop) {
      const auto res = metrics::HopLocalized(*hop, cs->second.gold_map.at(gold->doc_id),
                                             gold->boxes, metrics::MatchConfig{});
      entry["image_correct"] = res.image_correct;
      entry["boxes_correct"] = res.boxes_correct;
    } else {
      entry["image_correct"] = false;
      entry["boxes_correct"] = false;
    }
    const std::string file = "hop_" + std::to_string(t + 1) + ".png";
    WritePng(options.output_dir / file, Compose(title, panels));
    entry["image"] = file;

    rows += "<tr><td>" + std::to_string(t + 1) + "</td><td>" +
            (gold ? HtmlEscape(entry["gold"]["label"].get<std::string>() + " (" + gold->doc_id + ")")
                  : std::string("-")) +
            "</td><td>" +
            (hop ? HtmlEscape(hop->image_id + (pred_doc ? " (" + *pred_doc + ")" : "")) + "<br>" +
                       HtmlEscape(hop->sub_question)
                 : std::string("-")) +
            "</td><td>" + (entry["image_correct"].get<bool>() ? "yes" : "no") + " / " +
            (entry["boxes_correct"].get<bool>() ? "yes" : "no") + "</td><td><img src=\"" + file +
            "\" width=\"480\"></td></tr>\n";
    hops.push_back(std::move(entry));
  }

  ordered_json index;
  index["question_id"] = rec->question_id;
  index["question"] = rec->question;
  index["gold_answers"] = rec->gold_answers;
  index["predicted_answer"] = pred ? ordered_json(pred->answer) : ordered_json(nullptr);
  index["legend"] = {{"gold", "solid green"}, {"pred", "dashed red"}};
  index["hops"] = hops;
  WriteFile(options.output_dir / "index.json", index.dump(2) + "\n");

  std::string html = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>" +
                     HtmlEscape(rec->question_id) + "</title></head><body>\n<h1>" +
                     HtmlEscape(rec->question) + "</h1>\n<p>Gold answer: " +
                     HtmlEscape(rec->gold_answers.empty() ? "" : rec->gold_answers[0]) +
                     "<br>Predicted answer: " + HtmlEscape(pred ? pred->answer : "(parse failure)") +
                     "</p>\n<p>Gold boxes solid green, predicted boxes dashed red.</p>\n"
                     "<table border=\"1\"><tr><th>hop</th><th>gold</th><th>predicted</th>"
                     "<th>image / boxes</th><th>overlay</th></tr>\n" +
                     rows + "</table></body></html>\n";
  WriteFile(options.output_dir / "index.html", html);
  out << "wrote " << n_hops << " hop overlays for " << rec->question_id << "\n";
}

void RunBuild(const BuildOptions& options, std::ostream& out) {
  options.annotator.Validate();
  if (!(options.test_fraction >= 0 && options.test_fraction < 1)) {
    throw Error(ErrorCode::kConfigInvalid, "must be in [0, 1)", "test_fraction");
  }
  RequireFile(options.questions, "questions");
  const auto sources = annotate::LoadSourceQuestions(options.questions);
  if (sources.empty()) throw Error(ErrorCode::kConfigInvalid, "no source questions", "questions");
  PrepareOutputDir(options.output_dir);
  if (options.snapshot_dir.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "is required", "snapshot_dir");
  }

  std::map<std::string, capture::CaptureTarget> url_of;
  std::map<std::string, std::string> group_of;
  if (options.urls) {
    RequireFile(*options.urls, "urls");
    std::size_t line = 0;
    for (const auto& j : ReadJsonLines(*options.urls)) {
      ++line;
      try {
        const std::string id = j.at("doc_id").get<std::string>();
        url_of[id] = {id, j.at("url").get<std::string>()};
        if (j.contains("group_id") && j["group_id"].is_string()) group_of[id] = j["group_id"];
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kSchemaViolation, e.what(), "urls line " + std::to_string(line));
      }
    }
  }

  std::size_t n_captured = 0, n_capture_failures = 0;
  if (options.capture) {
    if (!options.urls) throw Error(ErrorCode::kConfigInvalid, "capture needs a url list", "urls");
    options.session.Validate();
    // Pages needed by more questions come first; pages no question needs
    // trail in id order.
    std::vector<std::vector<std::string>> per_question;
    for (const auto& q : sources) {
      std::vector<std::string> docs;
      for (const auto& [doc, _] : q.supporting_facts) {
        if (std::find(docs.begin(), docs.end(), doc) == docs.end()) docs.push_back(doc);
      }
      per_question.push_back(std::move(docs));
    }
    std::vector<capture::CaptureTarget> targets;
    std::set<std::string> queued;
    for (const auto& [doc, _] : dataset::RankEntities(per_question)) {
      if (url_of.count(doc)) {
        targets.push_back(url_of[doc]);
        queued.insert(doc);
      }
    }
    for (const auto& [doc, target] : url_of) {
      if (!queued.count(doc)) targets.push_back(target);
    }
    if (options.max_pages && targets.size() > *options.max_pages) targets.resize(*options.max_pages);
    std::erase_if(targets, [&](const capture::CaptureTarget& t) {
      return fs::exists(options.snapshot_dir / (SafeFileStem(t.doc_id) + ".json"));
    });

    capture::BatchOptions batch;
    batch.concurrency_limit = options.concurrency_limit;
    batch.output_dir = options.snapshot_dir;
    const auto result = capture::SnapshotBatch(targets, options.session, batch);
    std::vector<ordered_json> failures;
    for (const auto& f : result.failures) {
      failures.push_back({{"doc_id", f.doc_id},
                          {"url", f.url},
                          {"code", ErrorCodeName(f.code)},
                          {"reason", f.reason}});
    }
    WriteJsonLines(options.output_dir / "capture_failures.jsonl", failures);
    n_captured = result.snapshots.size();
    n_capture_failures = failures.size();
    out << "captured " << n_captured << " pages, " << n_capture_failures << " failed\n";
  }

  if (!fs::is_directory(options.snapshot_dir)) {
    throw Error(ErrorCode::kConfigInvalid, "no such directory: " + options.snapshot_dir.string(),
                "snapshot_dir");
  }
  std::map<std::string, PageSnapshot> snapshots;
  dataset::DocumentPool pool;
  for (auto& s : LoadSnapshotDir(options.snapshot_dir)) {
    dataset::CandidateDocument doc;
    doc.doc_id = s.doc_id;
    doc.image_path = s.image_path;
    doc.width = s.width;
    doc.height = s.height;
    if (auto g = group_of.find(s.doc_id); g != group_of.end()) doc.group_id = g->second;
    if (!s.url.empty()) doc.source_meta["url"] = s.url;
    pool.Add(std::move(doc));
    std::string id = s.doc_id;
    snapshots.emplace(std::move(id), std::move(s));
  }

  std::vector<QARecord> annotated;
  std::vector<ordered_json> rejections;
  for (const auto& q : sources) {
    try {
      auto outcome = annotate::AnnotateRecord(q, snapshots, options.annotator);
      if (auto* ok = std::get_if<annotate::AnnotatedRecord>(&outcome)) {
        annotated.push_back(std::move(ok->record));
      } else {
        ordered_json j = annotate::RejectionToJson(std::get<annotate::AnnotationRejection>(outcome));
        j["stage"] = "annotate";
        rejections.push_back(std::move(j));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingSnapshot) throw;
      rejections.push_back({{"question_id", q.question_id},
                            {"doc_id", e.path()},
                            {"reason", "missing-snapshot"},
                            {"stage", "annotate"}});
    }
  }
  const auto validated = dataset::ValidateDataset(annotated, pool);
  for (const auto& r : validated.rejected) {
    rejections.push_back(
        {{"question_id", r.question_id}, {"reason", r.reason}, {"detail", r.detail}, {"stage", "validate"}});
  }

  dataset::SaveDataset(options.output_dir / "dataset.jsonl", validated.accepted);
  dataset::SavePool(options.output_dir / "pool.jsonl", pool);
  WriteJsonLines(options.output_dir / "rejections.jsonl", rejections);
  if (options.test_fraction > 0 && !validated.accepted.empty()) {
    const auto split =
        dataset::SplitEntityChain(validated.accepted, options.test_fraction, options.split_seed);
    dataset::SaveDataset(options.output_dir / "train.jsonl", split.train);
    dataset::SaveDataset(options.output_dir / "test.jsonl", split.test);
    out << "split: " << split.train.size() << " train, " << split.test.size() << " test\n";
  }
  if (!validated.accepted.empty()) {
    const auto stats = dataset::ComputeStats(validated.accepted);
    WriteFile(options.output_dir / "stats.json", dataset::StatsToJson(stats).dump(2) + "\n");
    out << FormatStats(stats);
  }

  ordered_json config = {{"questions", options.questions.string()},
                         {"snapshot_dir", options.snapshot_dir.string()},
                         {"urls", PathOrNull(options.urls)},
                         {"capture", options.capture},
                         {"max_pages", options.max_pages ? ordered_json(*options.max_pages)
                                                         : ordered_json(nullptr)},
                         {"session", capture::SessionConfigToJson(options.session)},
                         {"concurrency_limit", options.concurrency_limit},
                         {"min_overlap_score", options.annotator.min_overlap_score},
                         {"min_token_count", options.annotator.min_token_count},
                         {"test_fraction", options.test_fraction},
                         {"split_seed", options.split_seed}};
  std::vector<std::pair<std::string, fs::path>> inputs = {{"questions", options.questions}};
  if (options.urls) inputs.emplace_back("urls", *options.urls);
  WriteManifest(options.output_dir, MakeManifest("build", config, {{"split_seed", options.split_seed}},
                                                 std::nullopt, inputs));
  out << "accepted " << validated.accepted.size() << " of " << sources.size() << " questions, "
      << rejections.size() << " rejected; pool has " << pool.size() << " documents\n";
}

}  // namespace evchain::cli
