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

#ifndef EVCHAIN_CAPTURE_H_
#define EVCHAIN_CAPTURE_H_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/error.h"
#include "evchain/snapshot.h"

namespace evchain::capture {

struct SessionConfig {
  std::string webdriver_url = "http://127.0.0.1:4444";
  nlohmann::json capabilities = DefaultCapabilities();
  int viewport_width = 1920;   // CSS px
  int viewport_height = 1080;  // initial window before full-page resize
  int max_page_height = 16384;
  double page_load_timeout_seconds = 60;
  int settle_delay_ms = 500;
  double command_timeout_seconds = 120;
  int inter_request_delay_ms = 0;

  static nlohmann::json DefaultCapabilities();
  void Validate() const;  // kConfigInvalid
};

nlohmann::ordered_json SessionConfigToJson(const SessionConfig& cfg);
SessionConfig SessionConfigFromJson(const nlohmann::json& j);

// One W3C WebDriver session. Commands are sent one at a time; a session must
// not be shared between threads.
class WebDriverSession {
 public:
  // Throws kEndpointUnreachable when the driver cannot be reached or refuses
  // to create a session.
  explicit WebDriverSession(const SessionConfig& cfg);
  ~WebDriverSession();  // deletes the remote session, best effort
  WebDriverSession(const WebDriverSession&) = delete;
  WebDriverSession& operator=(const WebDriverSession&) = delete;

  const std::string& id() const;

  // Any navigation error, including the page-load timeout, is kNavigationTimeout.
  void Navigate(const std::string& url);
  // Synchronous script; returns its value. Throws kScriptFailure.
  nlohmann::json Execute(const std::string& script,
                         const nlohmann::json& args = nlohmann::json::array());
  // Outer window size in CSS px.
  void SetWindowSize(int width, int height);
  // Viewport screenshot as PNG bytes. Throws kCaptureFailed.
  std::string Screenshot();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The injected extraction script. It returns {dpr, scroll_x, scroll_y,
// elements: [{kind, text, rects: [[x1, y1, x2, y2], ...]}]} with rects in CSS
// page coordinates, one per rendered line.
const std::string& ExtractionScript();

// Converts the extraction script's result into raster-pixel elements clipped
// to `frame`; lines that vanish under clipping and elements left without
// lines are dropped. Throws kScriptFailure for a malformed result.
std::vector<RenderedElement> ConvertElements(const nlohmann::json& result, FrameSize frame);

std::vector<RenderedElement> ExtractElements(WebDriverSession& session, FrameSize frame);

// Navigates, waits for readiness plus the settle delay, grows the viewport to
// the full document height, screenshots and extracts elements. The PNG is
// kept in memory; image_path is left empty.
PageSnapshot CapturePage(WebDriverSession& session, const std::string& doc_id,
                         const std::string& url, const SessionConfig& cfg);
// Same, on a fresh session.
PageSnapshot CapturePage(const std::string& doc_id, const std::string& url,
                         const SessionConfig& cfg);

struct CaptureTarget {
  std::string doc_id;
  std::string url;
};

struct CaptureFailure {
  std::string doc_id;
  std::string url;
  ErrorCode code = ErrorCode::kCaptureFailed;
  std::string reason;
};

struct BatchResult {
  std::vector<PageSnapshot> snapshots;  // in target order
  std::vector<CaptureFailure> failures;  // in target order
};

struct BatchOptions {
  int concurrency_limit = 2;
  // When set, each snapshot is saved here as soon as it is captured and its
  // in-memory PNG is released.
  std::optional<std::filesystem::path> output_dir;
};

// Captures targets in the given (priority) order with at most
// concurrency_limit live sessions. Per-target failures are recorded and the
// batch carries on; a session is replaced after a failure.
BatchResult SnapshotBatch(const std::vector<CaptureTarget>& targets, const SessionConfig& cfg,
                          const BatchOptions& options);

}  // namespace evchain::capture

#endif  // EVCHAIN_CAPTURE_H_
