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

#include <ostream>

#include <CLI11.hpp>

#include "evchain/cli.h"
#include "evchain/jsonl.h"

namespace evchain::cli {
namespace {

namespace fs = std::filesystem;

const std::map<std::string, dataset::DistractorPolicy> kPolicies = {
    {"global-pool", dataset::DistractorPolicy::kGlobalPool},
    {"same-group", dataset::DistractorPolicy::kSameGroup}};

const std::map<std::string, metrics::MultiBoxMode> kMultiBox = {
    {"all-gold", metrics::MultiBoxMode::kAllGold}, {"any-gold", metrics::MultiBoxMode::kAnyGold}};

void AddMatchOptions(CLI::App* cmd, metrics::MatchConfig& m) {
  cmd->add_option("--iou-threshold", m.iou_threshold, "IoU threshold for a box match")
      ->capture_default_str();
  cmd->add_flag("!--no-center-rule", m.center_rule_enabled,
                "Disable the predicted-center-inside-gold rule");
  cmd->add_flag("!--exclusive-threshold", m.threshold_inclusive, "Require IoU > threshold");
  cmd->add_option("--multi-box", m.multi_box, "How hops with several gold boxes are matched")
      ->transform(CLI::CheckedTransformer(kMultiBox, CLI::ignore_case).description(""))
      ->option_text("{all-gold,any-gold}");
}

void AddCandidateOptions(CLI::App* cmd, std::size_t& k, std::uint64_t& seed,
                         dataset::DistractorPolicy& policy, const std::string& seed_flag) {
  cmd->add_option("--k", k, "Candidates per question")->capture_default_str();
  cmd->add_option(seed_flag, seed, "Candidate sampling seed")->capture_default_str();
  cmd->add_option("--policy", policy, "Where distractors come from")
      ->transform(CLI::CheckedTransformer(kPolicies, CLI::ignore_case).description(""))
      ->option_text("{global-pool,same-group}");
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evidence-chain dataset, training-data and evaluation harness", "evchain"};
  app.set_version_flag("--version", std::string(ToolVersion()));
  app.set_config("--config", "", "TOML config file; [command] sections, flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  std::function<void()> action;

  StatsOptions stats;
  auto* cmd_stats = app.add_subcommand("stats", "Dataset statistics table");
  cmd_stats->add_option("--dataset", stats.dataset, "Dataset JSONL")->required();
  cmd_stats->add_option("--output-dir", stats.output_dir, "Write stats.json and a manifest here");
  cmd_stats->callback([&] { action = [&] { RunStats(stats, out); }; });

  CandidatesOptions cand;
  auto* cmd_cand = app.add_subcommand("candidates", "Build shuffled top-k candidate sets");
  cmd_cand->add_option("--dataset", cand.dataset)->required();
  cmd_cand->add_option("--pool", cand.pool, "Document pool JSONL")->required();
  cmd_cand->add_option("--output-dir", cand.output_dir)->required();
  AddCandidateOptions(cmd_cand, cand.k, cand.seed, cand.policy, "--seed");
  cmd_cand->callback([&] { action = [&] { RunCandidates(cand, out); }; });

  EmitTrainingOptions emit;
  auto* cmd_emit = app.add_subcommand("emit-training", "Emit phase 1 or phase 2 training samples");
  cmd_emit->add_option("--dataset", emit.dataset)->required();
  cmd_emit->add_option("--pool", emit.pool)->required();
  cmd_emit->add_option("--candsets", emit.candsets, "Candidate sets for phase 2");
  cmd_emit->add_option("--output-dir", emit.output_dir)->required();
  cmd_emit->add_option("--phase", emit.phase)->check(CLI::IsMember({1, 2}))->capture_default_str();
  cmd_emit->add_option("--seed", emit.seed, "Augmentation and permutation seed")->capture_default_str();
  AddCandidateOptions(cmd_emit, emit.k, emit.candidate_seed, emit.policy, "--candidate-seed");
  cmd_emit->add_flag("--augment", emit.augment, "Random crop, translation and aspect jitter");
  cmd_emit->add_option("--crop-min-fraction", emit.augment_config.crop_min_fraction)
      ->capture_default_str();
  cmd_emit->add_option("--max-translate-fraction", emit.augment_config.max_translate_fraction)
      ->capture_default_str();
  cmd_emit->add_option("--max-aspect-jitter", emit.augment_config.max_aspect_jitter)
      ->capture_default_str();
  cmd_emit->add_flag("--permute", emit.permute, "Shuffle candidate order (phase 2)");
  cmd_emit->add_option("--longest-side", emit.longest_side, "Resize so the longer side is this");
  cmd_emit->callback([&] { action = [&] { RunEmitTraining(emit, out); }; });

  RunConfig run;
  std::optional<fs::path> endpoint_file;
  auto* cmd_eval = app.add_subcommand("evaluate", "Run a model endpoint over a dataset and score it");
  cmd_eval->add_option("--dataset", run.dataset)->required();
  cmd_eval->add_option("--pool", run.pool)->required();
  cmd_eval->add_option("--candsets", run.candsets, "Use these candidate sets instead of sampling");
  cmd_eval->add_option("--output-dir", run.output_dir)->required();
  cmd_eval->add_option("--concurrency", run.concurrency_limit, "Records in flight")
      ->capture_default_str();
  AddCandidateOptions(cmd_eval, run.k, run.candidate_seed, run.policy, "--candidate-seed");
  AddMatchOptions(cmd_eval, run.match);
  cmd_eval->add_option("--endpoint-config", endpoint_file, "JSON endpoint settings; flags override");
  auto* opt_url = cmd_eval->add_option("--endpoint-url", run.endpoint.base_url);
  auto* opt_path = cmd_eval->add_option("--endpoint-path", run.endpoint.path)
      ->capture_default_str();
  auto* opt_model = cmd_eval->add_option("--model", run.endpoint.model_name);
  auto* opt_token = cmd_eval->add_option("--token-env", run.endpoint.auth_token_env,
                                         "Environment variable holding the API token")
      ->capture_default_str();
  auto* opt_timeout = cmd_eval->add_option("--timeout", run.endpoint.timeout_seconds)
      ->capture_default_str();
  auto* opt_retries = cmd_eval->add_option("--max-retries", run.endpoint.max_retries)
      ->capture_default_str();
  auto* opt_backoff = cmd_eval->add_option("--retry-backoff", run.endpoint.retry_backoff_base)
      ->capture_default_str();
  auto* opt_tokens = cmd_eval->add_option("--max-output-tokens", run.endpoint.max_output_tokens)
      ->capture_default_str();
  auto* opt_temp = cmd_eval->add_option("--temperature", run.endpoint.temperature)
      ->capture_default_str();
  auto* opt_inflight = cmd_eval->add_option("--max-in-flight", run.endpoint.max_in_flight)
      ->capture_default_str();
  cmd_eval->callback([&] {
    action = [&, opt_url, opt_path, opt_model, opt_token, opt_timeout, opt_retries, opt_backoff,
              opt_tokens, opt_temp, opt_inflight] {
      if (endpoint_file) {
        const model::EndpointConfig flags = run.endpoint;
        run.endpoint = model::EndpointConfigFromJson(nlohmann::json::parse(ReadFile(*endpoint_file)));
        if (opt_url->count()) run.endpoint.base_url = flags.base_url;
        if (opt_path->count()) run.endpoint.path = flags.path;
        if (opt_model->count()) run.endpoint.model_name = flags.model_name;
        if (opt_token->count()) run.endpoint.auth_token_env = flags.auth_token_env;
        if (opt_timeout->count()) run.endpoint.timeout_seconds = flags.timeout_seconds;
        if (opt_retries->count()) run.endpoint.max_retries = flags.max_retries;
        if (opt_backoff->count()) run.endpoint.retry_backoff_base = flags.retry_backoff_base;
        if (opt_tokens->count()) run.endpoint.max_output_tokens = flags.max_output_tokens;
        if (opt_temp->count()) run.endpoint.temperature = flags.temperature;
        if (opt_inflight->count()) run.endpoint.max_in_flight = flags.max_in_flight;
      }
      RunEvaluate(run, out);
    };
  });

  ScoreOptions score;
  auto* cmd_score = app.add_subcommand("score", "Re-score stored predictions");
  cmd_score->add_option("--predictions", score.predictions)->required();
  cmd_score->add_option("--dataset", score.dataset)->required();
  cmd_score->add_option("--candsets", score.candsets)->required();
  cmd_score->add_option("--output-dir", score.output_dir)->required();
  AddMatchOptions(cmd_score, score.match);
  cmd_score->callback([&] { action = [&] { RunScore(score, out); }; });

  OverlayOptions overlay;
  auto* cmd_overlay = app.add_subcommand("overlay", "Render gold and predicted boxes per hop");
  cmd_overlay->add_option("--question-id", overlay.question_id)->required();
  cmd_overlay->add_option("--dataset", overlay.dataset)->required();
  cmd_overlay->add_option("--pool", overlay.pool)->required();
  cmd_overlay->add_option("--candsets", overlay.candsets)->required();
  cmd_overlay->add_option("--predictions", overlay.predictions)->required();
  cmd_overlay->add_option("--output-dir", overlay.output_dir)->required();
  cmd_overlay->callback([&] { action = [&] { RunOverlay(overlay, out); }; });

  BuildOptions build;
  auto* cmd_build = app.add_subcommand("build", "Capture pages, annotate boxes, validate and split");
  cmd_build->add_option("--questions", build.questions, "Source questions with supporting facts")
      ->required();
  cmd_build->add_option("--snapshot-dir", build.snapshot_dir)->required();
  cmd_build->add_option("--output-dir", build.output_dir)->required();
  cmd_build->add_option("--urls", build.urls, "Lines of {doc_id, url[, group_id]}");
  cmd_build->add_flag("--capture", build.capture, "Capture the url list before annotating");
  cmd_build->add_option("--max-pages", build.max_pages, "Capture budget, highest priority first");
  cmd_build->add_option("--webdriver-url", build.session.webdriver_url)->capture_default_str();
  cmd_build->add_option("--viewport-width", build.session.viewport_width)->capture_default_str();
  cmd_build->add_option("--settle-delay-ms", build.session.settle_delay_ms)->capture_default_str();
  cmd_build->add_option("--page-load-timeout", build.session.page_load_timeout_seconds)
      ->capture_default_str();
  cmd_build->add_option("--inter-request-delay-ms", build.session.inter_request_delay_ms)
      ->capture_default_str();
  cmd_build->add_option("--concurrency", build.concurrency_limit, "Simultaneous browser sessions")
      ->capture_default_str();
  cmd_build->add_option("--min-overlap-score", build.annotator.min_overlap_score)
      ->capture_default_str();
  cmd_build->add_option("--test-fraction", build.test_fraction)->capture_default_str();
  cmd_build->add_option("--split-seed", build.split_seed)->capture_default_str();
  cmd_build->callback([&] { action = [&] { RunBuild(build, out); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << ToolVersion() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::RequiredError) ||
        e.get_exit_code() == static_cast<int>(CLI::ExitCodes::ExtrasError)) {
      err << "run with --help for usage\n";
    }
    return kExitConfigInvalid;
  }

  try {
    action();
  } catch (const Error& e) {
    err << "error [" << ErrorCodeName(e.code()) << "]"
        << (e.path().empty() ? "" : " " + e.path()) << ": " << e.message() << "\n";
    return ExitCodeFor(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitConfigInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace evchain::cli
