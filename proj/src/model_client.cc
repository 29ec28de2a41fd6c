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

#include "evchain/model_client.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "evchain/error.h"
#include "evchain/jsonl.h"
#include "evchain/raster.h"
#include "http_url.h"

namespace evchain::model {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

using internal::ParseBaseUrl;
using internal::ParsedUrl;

// End of the balanced {...} span starting at `start`, honoring JSON strings.
std::optional<std::size_t> MatchBrace(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::nullopt;
}

bool IsChainDocument(std::string_view text) {
  try {
    ParseChain(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::optional<std::string> LongestBalancedDocument(std::string_view text) {
  std::vector<std::string_view> spans;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    if (auto end = MatchBrace(text, i)) spans.push_back(text.substr(i, *end - i + 1));
  }
  std::stable_sort(spans.begin(), spans.end(),
                   [](std::string_view a, std::string_view b) { return a.size() > b.size(); });
  for (std::string_view span : spans) {
    if (IsChainDocument(span)) return std::string(span);
  }
  return std::nullopt;
}

std::vector<std::string_view> FencedBlocks(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open + 3);
    if (body == std::string_view::npos) break;
    ++body;
    const auto close = text.find("```", body);
    if (close == std::string_view::npos) break;
    out.push_back(text.substr(body, close - body));
    pos = close + 3;
  }
  return out;
}

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void EndpointConfig::Validate() const {
  ParseBaseUrl(base_url, "base_url");
  auto fail = [](const std::string& field, const std::string& msg) {
    throw Error(ErrorCode::kConfigInvalid, msg, field);
  };
  if (!(timeout_seconds > 0)) fail("timeout_seconds", "must be positive");
  if (max_retries < 0) fail("max_retries", "must be non-negative");
  if (!(retry_backoff_base >= 0)) fail("retry_backoff_base", "must be non-negative");
  if (max_output_tokens <= 0) fail("max_output_tokens", "must be positive");
  if (max_in_flight <= 0) fail("max_in_flight", "must be positive");
  if (path.empty() || path.front() != '/') fail("path", "must start with '/'");
}

ordered_json EndpointConfigToJson(const EndpointConfig& cfg) {
  return {{"base_url", cfg.base_url},
          {"path", cfg.path},
          {"auth_token_env", cfg.auth_token_env},
          {"model_name", cfg.model_name},
          {"timeout_seconds", cfg.timeout_seconds},
          {"max_retries", cfg.max_retries},
          {"retry_backoff_base", cfg.retry_backoff_base},
          {"max_output_tokens", cfg.max_output_tokens},
          {"temperature", cfg.temperature},
          {"max_in_flight", cfg.max_in_flight}};
}

EndpointConfig EndpointConfigFromJson(const json& j) {
  EndpointConfig cfg;
  try {
    cfg.base_url = j.value("base_url", cfg.base_url);
    cfg.path = j.value("path", cfg.path);
    cfg.auth_token_env = j.value("auth_token_env", cfg.auth_token_env);
    cfg.model_name = j.value("model_name", cfg.model_name);
    cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    cfg.retry_backoff_base = j.value("retry_backoff_base", cfg.retry_backoff_base);
    cfg.max_output_tokens = j.value("max_output_tokens", cfg.max_output_tokens);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, e.what(), "endpoint");
  }
  return cfg;
}

std::vector<std::string> LoadCandidateImages(const dataset::CandidateSet& candset,
                                             const dataset::DocumentPool& pool) {
  std::vector<std::string> out;
  for (const auto& entry : candset.ordered) {
    const auto* doc = pool.Find(entry.doc_id);
    if (!doc) throw Error(ErrorCode::kMissingImage, "document not in pool", entry.doc_id);
    try {
      out.push_back(ReadFile(doc->image_path));
    } catch (const Error& e) {
      throw Error(ErrorCode::kMissingImage, e.message(), doc->image_path);
    }
  }
  return out;
}

ordered_json BuildRequest(const std::string& question, const dataset::CandidateSet& candset,
                          const std::vector<std::string>& images, const PromptTemplate& tmpl,
                          const EndpointConfig& cfg) {
  if (images.size() != candset.k()) {
    throw Error(ErrorCode::kMissingImage, "one image per candidate is required", candset.question_id);
  }
  std::string labels;
  for (const auto& e : candset.ordered) labels += (labels.empty() ? "" : ", ") + e.label;
  ordered_json content = ordered_json::array();
  content.push_back(
      {{"type", "text"},
       {"text", Substitute(tmpl.user_text, {{"question", question},
                                            {"k", std::to_string(candset.k())},
                                            {"labels", labels}})}});
  for (std::size_t i = 0; i < candset.k(); ++i) {
    content.push_back({{"type", "text"}, {"text", candset.ordered[i].label}});
    content.push_back(
        {{"type", "image_url"},
         {"image_url", {{"url", "data:image/png;base64," + Base64Encode(images[i])}}}});
  }
  ordered_json payload;
  payload["model"] = cfg.model_name;
  payload["temperature"] = cfg.temperature;
  payload["max_tokens"] = cfg.max_output_tokens;
  payload["messages"] = ordered_json::array(
      {{{"role", "system"}, {"content", tmpl.system_text}},
       {{"role", "user"}, {"content", std::move(content)}}});
  return payload;
}

ordered_json ElideImages(const ordered_json& payload) {
  ordered_json out = payload;
  if (!out.contains("messages")) return out;
  for (auto& msg : out["messages"]) {
    if (!msg.contains("content") || !msg["content"].is_array()) continue;
    for (auto& part : msg["content"]) {
      if (part.value("type", "") != "image_url") continue;
      const std::string url = part["image_url"].value("url", "");
      part["image_url"]["url"] = "<image elided, " + std::to_string(url.size()) + " chars>";
    }
  }
  return out;
}

std::optional<std::string> ExtractChainText(std::string_view raw) {
  for (std::string_view block : FencedBlocks(raw)) {
    const std::string_view body = Trim(block);
    if (IsChainDocument(body)) return std::string(body);
    if (auto doc = LongestBalancedDocument(body)) return doc;
  }
  if (auto doc = LongestBalancedDocument(raw)) return doc;
  const std::string_view whole = Trim(raw);
  if (IsChainDocument(whole)) return std::string(whole);
  return std::nullopt;
}

ParseOutcome ParseModelText(std::string_view raw) {
  ParseOutcome out;
  if (auto doc = ExtractChainText(raw)) {
    out.output = ParseChain(*doc);
    return out;
  }
  try {
    ParseChain(Trim(raw));
    out.failure_reason = "no evidence-chain document found";
  } catch (const Error& e) {
    out.failure_reason = std::string("no evidence-chain document found (") + e.what() + ")";
  }
  return out;
}

std::optional<std::string> ResponseText(std::string_view body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const json& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content")) return std::nullopt;
  const json& content = first["message"]["content"];
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string text;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  }
  return std::nullopt;
}

ordered_json InferenceResultToJson(const InferenceResult& r) {
  ordered_json j;
  j["question_id"] = r.question_id;
  j["parse_ok"] = r.output.has_value();
  j["output"] = r.output ? ordered_json::parse(EmitChain(*r.output)) : ordered_json(nullptr);
  j["failure_reason"] = r.failure_reason;
  j["raw_text"] = r.raw_text;
  j["attempts"] = r.attempts;
  j["latency_seconds"] = r.latency_seconds;
  return j;
}

struct ChatClient::Impl {
  explicit Impl(int permits) : in_flight(permits) {}
  std::counting_semaphore<> in_flight;
  ParsedUrl url;
};

ChatClient::ChatClient(EndpointConfig cfg, AuditSink audit)
    : cfg_(std::move(cfg)), audit_(std::move(audit)) {
  cfg_.Validate();
  impl_ = std::make_unique<Impl>(cfg_.max_in_flight);
  impl_->url = ParseBaseUrl(cfg_.base_url, "base_url");
}

ChatClient::~ChatClient() = default;

std::string ChatClient::Complete(const ordered_json& payload, int* attempts,
                                 const std::string& audit_id) {
  const std::string body = payload.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.auth_token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(cfg_.timeout_seconds));
  const std::string path = impl_->url.prefix + cfg_.path;

  std::string last_problem;
  for (int attempt = 1;; ++attempt) {
    if (attempts) *attempts = attempt;
    httplib::Result res;
    {
      impl_->in_flight.acquire();
      httplib::Client client(impl_->url.origin);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                    timeout.count() % 1000000);
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                              timeout.count() % 1000000);
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                               timeout.count() % 1000000);
      res = client.Post(path, headers, body, "application/json");
      impl_->in_flight.release();
    }
    if (audit_) {
      ordered_json entry;
      entry["id"] = audit_id;
      entry["attempt"] = attempt;
      entry["request"] = ElideImages(payload);
      entry["status"] = res ? res->status : 0;
      entry["response"] = res ? res->body : httplib::to_string(res.error());
      audit_(entry);
    }
    bool retryable;
    if (!res) {
      retryable = true;
      last_problem = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      return res->body;
    } else if (res->status == 401 || res->status == 403) {
      throw Error(ErrorCode::kAuthFailure, "endpoint answered HTTP " + std::to_string(res->status),
                  cfg_.base_url);
    } else {
      retryable = res->status == 408 || res->status == 429 || res->status >= 500;
      last_problem = "HTTP " + std::to_string(res->status);
      if (!retryable) {
        throw Error(ErrorCode::kRequestRejected, last_problem + ": " + res->body.substr(0, 300),
                    cfg_.base_url);
      }
    }
    if (attempt > cfg_.max_retries) {
      throw Error(ErrorCode::kEndpointUnreachable,
                  "giving up after " + std::to_string(attempt) + " attempts, last: " + last_problem,
                  cfg_.base_url);
    }
    const double wait = cfg_.retry_backoff_base * std::pow(2.0, attempt - 1);
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  }
}

InferenceResult ChatClient::Infer(const QARecord& record, const dataset::CandidateSet& candset,
                                  const dataset::DocumentPool& pool, const PromptTemplate& tmpl) {
  const auto images = LoadCandidateImages(candset, pool);
  const ordered_json payload = BuildRequest(record.question, candset, images, tmpl, cfg_);

  InferenceResult r;
  r.question_id = record.question_id;
  const auto start = std::chrono::steady_clock::now();
  const std::string body = Complete(payload, &r.attempts, record.question_id);
  r.latency_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto text = ResponseText(body);
  if (!text) {
    r.raw_text = body;
    r.failure_reason = "response has no message content";
    return r;
  }
  r.raw_text = *text;
  ParseOutcome parsed = ParseModelText(*text);
  r.output = std::move(parsed.output);
  r.failure_reason = std::move(parsed.failure_reason);
  return r;
}

}  // namespace evchain::model
