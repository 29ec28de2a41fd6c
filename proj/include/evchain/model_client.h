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

#ifndef EVCHAIN_MODEL_CLIENT_H_
#define EVCHAIN_MODEL_CLIENT_H_

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/dataset.h"
#include "evchain/evidence.h"
#include "evchain/prompt.h"
#include "evchain/record.h"

namespace evchain::model {

struct EndpointConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string path = "/v1/chat/completions";
  std::string auth_token_env = "COE_API_TOKEN";
  std::string model_name;
  double timeout_seconds = 120;
  int max_retries = 3;
  double retry_backoff_base = 1.0;  // seconds; doubles per retry
  int max_output_tokens = 2048;
  double temperature = 0;
  int max_in_flight = 4;

  void Validate() const;  // kConfigInvalid
};

// Token-free description, safe to write into manifests.
nlohmann::ordered_json EndpointConfigToJson(const EndpointConfig& cfg);
EndpointConfig EndpointConfigFromJson(const nlohmann::json& j);

// PNG bytes of every candidate, in candidate order. Throws kMissingImage for a
// document that is absent from the pool or whose file cannot be read.
std::vector<std::string> LoadCandidateImages(const dataset::CandidateSet& candset,
                                             const dataset::DocumentPool& pool);

// Chat-completions payload: a system message carrying the output schema, then
// one user message with the rendered question followed by, per candidate, its
// label as text and the image as a base64 PNG data URL.
nlohmann::ordered_json BuildRequest(const std::string& question,
                                    const dataset::CandidateSet& candset,
                                    const std::vector<std::string>& images,
                                    const PromptTemplate& tmpl, const EndpointConfig& cfg);

// Copy of a payload with image data replaced by a size note, for audit logs.
nlohmann::ordered_json ElideImages(const nlohmann::ordered_json& payload);

// Finds the evidence-chain document inside free-form model text: first a
// fenced code block, then the longest balanced {...} span, then the whole
// text. Only schema-valid documents are returned.
std::optional<std::string> ExtractChainText(std::string_view raw);

struct ParseOutcome {
  std::optional<ModelOutput> output;
  std::string failure_reason;  // set when output is empty
};
ParseOutcome ParseModelText(std::string_view raw);

// Text of the first choice of a chat-completions response body. String
// content and arrays of text parts are both accepted.
std::optional<std::string> ResponseText(std::string_view body);

struct InferenceResult {
  std::string question_id;
  std::string raw_text;
  std::optional<ModelOutput> output;
  std::string failure_reason;
  int attempts = 0;
  double latency_seconds = 0;
};

nlohmann::ordered_json InferenceResultToJson(const InferenceResult& r);

// Retrying, concurrency-bounded client for one endpoint. Safe to share
// between threads; at most cfg.max_in_flight requests are outstanding.
class ChatClient {
 public:
  using AuditSink = std::function<void(const nlohmann::ordered_json&)>;

  explicit ChatClient(EndpointConfig cfg, AuditSink audit = nullptr);
  ~ChatClient();
  ChatClient(const ChatClient&) = delete;
  ChatClient& operator=(const ChatClient&) = delete;

  // Sends one payload and returns the response body. Retries transport
  // errors, 408, 429 and 5xx with exponential backoff. Throws
  // kEndpointUnreachable when retries run out, kAuthFailure on 401/403 and
  // kRequestRejected on any other 4xx. `attempts` receives the number of
  // requests sent.
  std::string Complete(const nlohmann::ordered_json& payload, int* attempts = nullptr,
                       const std::string& audit_id = "");

  // Builds the request, calls the endpoint and parses the reply. Model
  // misbehavior (unparseable or schema-invalid text) is a parse failure in
  // the result, never an exception.
  InferenceResult Infer(const QARecord& record, const dataset::CandidateSet& candset,
                        const dataset::DocumentPool& pool,
                        const PromptTemplate& tmpl = DefaultChainPrompt());

  const EndpointConfig& config() const { return cfg_; }

 private:
  struct Impl;
  EndpointConfig cfg_;
  AuditSink audit_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evchain::model

#endif  // EVCHAIN_MODEL_CLIENT_H_
