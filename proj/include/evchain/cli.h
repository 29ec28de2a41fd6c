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

#ifndef EVCHAIN_CLI_H_
#define EVCHAIN_CLI_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/annotator.h"
#include "evchain/augment.h"
#include "evchain/capture.h"
#include "evchain/dataset.h"
#include "evchain/error.h"
#include "evchain/metrics.h"
#include "evchain/model_client.h"

namespace evchain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;         // unexpected internal error
inline constexpr int kExitConfigInvalid = 2;   // bad flags, config or input files
inline constexpr int kExitInfrastructure = 3;  // endpoint, browser or auth trouble

int ExitCodeFor(ErrorCode code);

std::string_view ToolVersion();
std::string Sha256Hex(std::string_view bytes);

// {tool, tool_version, command, config, config_sha256, seeds,
// template_version, inputs: {name: {path, sha256}}, created_at}. The hash
// covers the config object only, so it is stable across reruns.
nlohmann::ordered_json MakeManifest(
    const std::string& command, const nlohmann::ordered_json& config,
    const nlohmann::ordered_json& seeds, const std::optional<std::string>& template_version,
    const std::vector<std::pair<std::string, std::filesystem::path>>& inputs);
void WriteManifest(const std::filesystem::path& output_dir, const nlohmann::ordered_json& manifest);

struct StatsOptions {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> output_dir;  // stats.json + manifest
};

struct CandidatesOptions {
  std::filesystem::path dataset;
  std::filesystem::path pool;
  std::filesystem::path output_dir;  // candsets.jsonl + manifest
  std::size_t k = 5;
  std::uint64_t seed = 0;
  dataset::DistractorPolicy policy = dataset::DistractorPolicy::kGlobalPool;
};

struct EmitTrainingOptions {
  std::filesystem::path dataset;
  std::filesystem::path pool;
  std::optional<std::filesystem::path> candsets;  // phase 2; built when absent
  std::filesystem::path output_dir;               // samples.jsonl, images/, manifest
  int phase = 2;
  std::uint64_t seed = 0;
  std::size_t k = 5;
  std::uint64_t candidate_seed = 0;
  dataset::DistractorPolicy policy = dataset::DistractorPolicy::kGlobalPool;
  bool augment = false;
  augment::AugmentConfig augment_config;
  bool permute = false;
  std::optional<int> longest_side;
};

// The evaluate run configuration.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path pool;
  std::optional<std::filesystem::path> candsets;  // built from the seed when absent
  std::uint64_t candidate_seed = 0;
  std::size_t k = 5;
  dataset::DistractorPolicy policy = dataset::DistractorPolicy::kGlobalPool;
  metrics::MatchConfig match;
  model::EndpointConfig endpoint;
  std::filesystem::path output_dir;
  int concurrency_limit = 4;

  void Validate() const;  // kConfigInvalid
};

nlohmann::ordered_json RunConfigToJson(const RunConfig& cfg);

struct ScoreOptions {
  std::filesystem::path predictions;
  std::filesystem::path dataset;
  std::filesystem::path candsets;
  metrics::MatchConfig match;
  std::filesystem::path output_dir;  // scores.jsonl, report.json, summary.txt, manifest
};

struct OverlayOptions {
  std::string question_id;
  std::filesystem::path dataset;
  std::filesystem::path pool;
  std::filesystem::path candsets;
  std::filesystem::path predictions;
  std::filesystem::path output_dir;  // hop_<t>.png, index.json, index.html
};

struct BuildOptions {
  std::filesystem::path questions;      // source questions with supporting facts
  std::filesystem::path snapshot_dir;   // read, and written when capturing
  std::optional<std::filesystem::path> urls;  // {doc_id, url[, group_id]} lines
  bool capture = false;                 // capture `urls` before annotating
  std::optional<std::size_t> max_pages;  // priority sampling budget
  capture::SessionConfig session;
  int concurrency_limit = 2;
  annotate::AnnotatorConfig annotator;
  double test_fraction = 0;
  std::uint64_t split_seed = 0;
  std::filesystem::path output_dir;  // dataset.jsonl, pool.jsonl, rejections.jsonl, ...
};

// Each command writes its outputs and a manifest, and throws evchain::Error
// on failure. `out` receives the human-readable summary.
void RunStats(const StatsOptions& options, std::ostream& out);
void RunCandidates(const CandidatesOptions& options, std::ostream& out);
void RunEmitTraining(const EmitTrainingOptions& options, std::ostream& out);
// Model failures are scored, not raised; only infrastructure errors throw.
metrics::Report RunEvaluate(const RunConfig& cfg, std::ostream& out);
metrics::Report RunScore(const ScoreOptions& options, std::ostream& out);
void RunOverlay(const OverlayOptions& options, std::ostream& out);
void RunBuild(const BuildOptions& options, std::ostream& out);

// Table-style rendering of dataset statistics.
std::string FormatStats(const dataset::DatasetStats& stats);

// Parses argv-style arguments (args[0] is the program name), runs the
// subcommand and returns the process exit status.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evchain::cli

#endif  // EVCHAIN_CLI_H_
