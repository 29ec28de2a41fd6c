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

#include "evchain/capture.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "evchain/jsonl.h"
#include "evchain/raster.h"
#include "http_url.h"

namespace evchain::capture {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const char kReadyScript[] = "/* evchain:ready */ return document.readyState;";

const char kMetricsScript[] = R"JS(/* evchain:metrics */
window.scrollTo(0, 0);
const d = document.documentElement, b = document.body;
return {
  inner_width: window.innerWidth, inner_height: window.innerHeight,
  outer_width: window.outerWidth, outer_height: window.outerHeight,
  doc_height: Math.max(d.scrollHeight, b ? b.scrollHeight : 0),
  dpr: window.devicePixelRatio
};)JS";

const char kExtractScript[] = R"JS(/* evchain:extract */
const root = document.body || document.documentElement;
const sx = window.scrollX, sy = window.scrollY;
const selected = new Set();
const out = [];
function kindOf(el) {
  const tag = el.tagName.toLowerCase();
  if (el.closest('table.infobox, .infobox')) return 'infobox_text';
  if (tag === 'caption' || tag === 'figcaption' || el.classList.contains('thumbcaption')) return 'caption';
  if (tag === 'td' || tag === 'th') return 'table_cell';
  if (tag === 'li') return 'list_item';
  return 'paragraph';
}
function inSelected(el) {
  for (let a = el.parentElement; a; a = a.parentElement) if (selected.has(a)) return true;
  return false;
}
for (const el of root.querySelectorAll('p, li, td, th, caption, figcaption, .thumbcaption')) {
  if (inSelected(el)) continue;
  const style = getComputedStyle(el);
  if (style.display === 'none' || style.visibility !== 'visible' || parseFloat(style.opacity) === 0) continue;
  const text = (el.innerText || '').replace(/\s+/g, ' ').trim();
  if (!text) continue;
  const frags = [];
  const walker = document.createTreeWalker(el, NodeFilter.SHOW_TEXT);
  for (let n = walker.nextNode(); n; n = walker.nextNode()) {
    if (!n.nodeValue.trim()) continue;
    const ps = n.parentElement ? getComputedStyle(n.parentElement) : style;
    if (ps.visibility !== 'visible') continue;
    const lh = parseFloat(ps.lineHeight);
    const range = document.createRange();
    range.selectNodeContents(n);
    for (const r of range.getClientRects()) {
      if (r.width <= 0 || r.height <= 0) continue;
      let top = r.top, bottom = r.bottom;
      if (!isNaN(lh)) {
        const mid = (top + bottom) / 2;
        top = mid - lh / 2;
        bottom = mid + lh / 2;
      }
      frags.push([r.left, top, r.right, bottom]);
    }
  }
  if (!frags.length) continue;
  frags.sort((a, b) => a[1] - b[1] || a[0] - b[0]);
  const lines = [];
  for (const f of frags) {
    const last = lines[lines.length - 1];
    if (last) {
      const overlap = Math.min(last[3], f[3]) - Math.max(last[1], f[1]);
      if (overlap > 0.5 * Math.min(last[3] - last[1], f[3] - f[1])) {
        last[0] = Math.min(last[0], f[0]); last[1] = Math.min(last[1], f[1]);
        last[2] = Math.max(last[2], f[2]); last[3] = Math.max(last[3], f[3]);
        continue;
      }
    }
    lines.push(f.slice());
  }
  selected.add(el);
  out.push({kind: kindOf(el), text: text,
            rects: lines.map(l => [l[0] + sx, l[1] + sy, l[2] + sx, l[3] + sy])});
}
return {dpr: window.devicePixelRatio, scroll_x: sx, scroll_y: sy, elements: out};)JS";

std::string Describe(const httplib::Result& res) {
  if (!res) return "transport error: " + httplib::to_string(res.error());
  std::string detail = "HTTP " + std::to_string(res->status);
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_object() && body.contains("value") && body["value"].is_object()) {
    const json& v = body["value"];
    if (v.contains("error")) detail += " " + v.value("error", std::string());
    if (v.contains("message")) detail += ": " + v.value("message", std::string()).substr(0, 300);
  }
  return detail;
}

std::chrono::microseconds Micros(double seconds) {
  return std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(seconds));
}

}  // namespace

json SessionConfig::DefaultCapabilities() {
  return {{"browserName", "chrome"},
          {"goog:chromeOptions", {{"args", {"--headless=new", "--hide-scrollbars"}}}}};
}

void SessionConfig::Validate() const {
  internal::ParseBaseUrl(webdriver_url, "webdriver_url");
  auto fail = [](const std::string& field, const std::string& msg) {
    throw Error(ErrorCode::kConfigInvalid, msg, field);
  };
  if (!capabilities.is_object()) fail("capabilities", "must be an object");
  if (viewport_width <= 0) fail("viewport_width", "must be positive");
  if (viewport_height <= 0) fail("viewport_height", "must be positive");
  if (max_page_height < viewport_height) fail("max_page_height", "must be at least viewport_height");
  if (!(page_load_timeout_seconds > 0)) fail("page_load_timeout_seconds", "must be positive");
  if (settle_delay_ms < 0) fail("settle_delay_ms", "must be non-negative");
  if (!(command_timeout_seconds > 0)) fail("command_timeout_seconds", "must be positive");
  if (inter_request_delay_ms < 0) fail("inter_request_delay_ms", "must be non-negative");
}

ordered_json SessionConfigToJson(const SessionConfig& cfg) {
  return {{"webdriver_url", cfg.webdriver_url},
          {"capabilities", ordered_json::parse(cfg.capabilities.dump())},
          {"viewport_width", cfg.viewport_width},
          {"viewport_height", cfg.viewport_height},
          {"max_page_height", cfg.max_page_height},
          {"page_load_timeout_seconds", cfg.page_load_timeout_seconds},
          {"settle_delay_ms", cfg.settle_delay_ms},
          {"command_timeout_seconds", cfg.command_timeout_seconds},
          {"inter_request_delay_ms", cfg.inter_request_delay_ms}};
}

SessionConfig SessionConfigFromJson(const json& j) {
  SessionConfig cfg;
  try {
    cfg.webdriver_url = j.value("webdriver_url", cfg.webdriver_url);
    if (j.contains("capabilities")) cfg.capabilities = j["capabilities"];
    cfg.viewport_width = j.value("viewport_width", cfg.viewport_width);
    cfg.viewport_height = j.value("viewport_height", cfg.viewport_height);
    cfg.max_page_height = j.value("max_page_height", cfg.max_page_height);
    cfg.page_load_timeout_seconds = j.value("page_load_timeout_seconds", cfg.page_load_timeout_seconds);
    cfg.settle_delay_ms = j.value("settle_delay_ms", cfg.settle_delay_ms);
    cfg.command_timeout_seconds = j.value("command_timeout_seconds", cfg.command_timeout_seconds);
    cfg.inter_request_delay_ms = j.value("inter_request_delay_ms", cfg.inter_request_delay_ms);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, e.what(), "capture");
  }
  return cfg;
}

struct WebDriverSession::Impl {
  SessionConfig cfg;
  internal::ParsedUrl url;
  std::unique_ptr<httplib::Client> client;
  std::string id;

  std::string SessionPath(const std::string& suffix) const {
    return url.prefix + "/session/" + id + suffix;
  }
};

WebDriverSession::WebDriverSession(const SessionConfig& cfg) : impl_(std::make_unique<Impl>()) {
  cfg.Validate();
  impl_->cfg = cfg;
  impl_->url = internal::ParseBaseUrl(cfg.webdriver_url, "webdriver_url");
  impl_->client = std::make_unique<httplib::Client>(impl_->url.origin);
  const auto t = Micros(cfg.command_timeout_seconds);
  impl_->client->set_connection_timeout(t.count() / 1000000, t.count() % 1000000);
  impl_->client->set_read_timeout(t.count() / 1000000, t.count() % 1000000);
  impl_->client->set_write_timeout(t.count() / 1000000, t.count() % 1000000);

  const json request = {{"capabilities", {{"alwaysMatch", cfg.capabilities}}}};
  auto res = impl_->client->Post(impl_->url.prefix + "/session", request.dump(), "application/json");
  if (!res || res->status != 200) {
    throw Error(ErrorCode::kEndpointUnreachable, "cannot create session: " + Describe(res),
                cfg.webdriver_url);
  }
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("value") || !body["value"].contains("sessionId")) {
    throw Error(ErrorCode::kEndpointUnreachable, "session response has no sessionId",
                cfg.webdriver_url);
  }
  impl_->id = body["value"]["sessionId"].get<std::string>();

  const json timeouts = {
      {"pageLoad", static_cast<long long>(cfg.page_load_timeout_seconds * 1000)},
      {"script", static_cast<long long>(cfg.command_timeout_seconds * 1000)}};
  impl_->client->Post(impl_->SessionPath("/timeouts"), timeouts.dump(), "application/json");
}

WebDriverSession::~WebDriverSession() {
  if (impl_ && impl_->client && !impl_->id.empty()) impl_->client->Delete(impl_->SessionPath(""));
}

const std::string& WebDriverSession::id() const { return impl_->id; }

void WebDriverSession::Navigate(const std::string& url) {
  const json request = {{"url", url}};
  auto res = impl_->client->Post(impl_->SessionPath("/url"), request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kEndpointUnreachable, Describe(res), impl_->cfg.webdriver_url);
  }
  if (res->status != 200) throw Error(ErrorCode::kNavigationTimeout, Describe(res), url);
}

json WebDriverSession::Execute(const std::string& script, const json& args) {
  const json request = {{"script", script}, {"args", args}};
  auto res =
      impl_->client->Post(impl_->SessionPath("/execute/sync"), request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kEndpointUnreachable, Describe(res), impl_->cfg.webdriver_url);
  }
  if (res->status != 200) throw Error(ErrorCode::kScriptFailure, Describe(res), impl_->id);
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("value")) {
    throw Error(ErrorCode::kScriptFailure, "script response has no value", impl_->id);
  }
  return body["value"];
}

void WebDriverSession::SetWindowSize(int width, int height) {
  const json request = {{"width", width}, {"height", height}};
  auto res =
      impl_->client->Post(impl_->SessionPath("/window/rect"), request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kEndpointUnreachable, Describe(res), impl_->cfg.webdriver_url);
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kCaptureFailed, "cannot resize window: " + Describe(res), impl_->id);
  }
}

std::string WebDriverSession::Screenshot() {
  auto res = impl_->client->Get(impl_->SessionPath("/screenshot"));
  if (!res) {
    throw Error(ErrorCode::kEndpointUnreachable, Describe(res), impl_->cfg.webdriver_url);
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kCaptureFailed, "screenshot failed: " + Describe(res), impl_->id);
  }
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("value") || !body["value"].is_string()) {
    throw Error(ErrorCode::kCaptureFailed, "screenshot response has no image", impl_->id);
  }
  try {
    return Base64Decode(body["value"].get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorCode::kCaptureFailed, e.message(), impl_->id);
  }
}

const std::string& ExtractionScript() {
  static const std::string kScript = kExtractScript;
  return kScript;
}

std::vector<RenderedElement> ConvertElements(const json& result, FrameSize frame) {
  std::vector<RenderedElement> out;
  try {
    const double dpr = result.at("dpr").get<double>();
    const double sx = result.value("scroll_x", 0.0);
    const double sy = result.value("scroll_y", 0.0);
    if (!(dpr > 0)) throw Error(ErrorCode::kScriptFailure, "device pixel ratio must be positive");
    for (const auto& e : result.at("elements")) {
      const auto kind = ParseElementKind(e.at("kind").get<std::string>());
      if (!kind) {
        throw Error(ErrorCode::kScriptFailure, "unknown element kind " + e.at("kind").dump());
      }
      RenderedElement el;
      el.element_id = "e" + std::to_string(out.size());
      el.text = e.at("text").get<std::string>();
      el.kind = *kind;
      for (const auto& r : e.at("rects")) {
        const BoundingBox raster{(r.at(0).get<double>() - sx) * dpr, (r.at(1).get<double>() - sy) * dpr,
                                 (r.at(2).get<double>() - sx) * dpr, (r.at(3).get<double>() - sy) * dpr};
        if (auto clipped = ClipToFrame(raster, frame)) el.line_rects.push_back(*clipped);
      }
      if (el.line_rects.empty() || el.text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      out.push_back(std::move(el));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kScriptFailure, std::string("malformed extraction result: ") + e.what());
  }
  return out;
}

std::vector<RenderedElement> ExtractElements(WebDriverSession& session, FrameSize frame) {
  return ConvertElements(session.Execute(ExtractionScript()), frame);
}

PageSnapshot CapturePage(WebDriverSession& session, const std::string& doc_id,
                         const std::string& url, const SessionConfig& cfg) {
  session.SetWindowSize(cfg.viewport_width, cfg.viewport_height);
  session.Navigate(url);

  const auto deadline = std::chrono::steady_clock::now() + Micros(cfg.page_load_timeout_seconds);
  while (session.Execute(kReadyScript) != "complete") {
    if (std::chrono::steady_clock::now() > deadline) {
      throw Error(ErrorCode::kNavigationTimeout, "document never became ready", url);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(cfg.settle_delay_ms));

  // Window chrome makes the outer size larger than the viewport; correct for
  // it, then repeat once in case the document height reacts to the resize.
  json metrics;
  int target_height = 0;
  for (int pass = 0; pass < 3; ++pass) {
    metrics = session.Execute(kMetricsScript);
    const int chrome_w = metrics.value("outer_width", 0) - metrics.value("inner_width", 0);
    const int chrome_h = metrics.value("outer_height", 0) - metrics.value("inner_height", 0);
    const int doc_height = std::min(cfg.max_page_height, metrics.value("doc_height", 0));
    if (metrics.value("inner_width", 0) == cfg.viewport_width &&
        metrics.value("inner_height", 0) == std::max(doc_height, 1)) {
      break;
    }
    target_height = std::max(doc_height, 1);
    session.SetWindowSize(cfg.viewport_width + std::max(chrome_w, 0),
                          target_height + std::max(chrome_h, 0));
  }

  PageSnapshot snap;
  snap.doc_id = doc_id;
  snap.url = url;
  snap.png = session.Screenshot();
  if (snap.png.empty()) throw Error(ErrorCode::kCaptureFailed, "empty screenshot", url);
  try {
    const auto dims = PngDimensions(snap.png);
    snap.width = dims[0];
    snap.height = dims[1];
  } catch (const Error& e) {
    throw Error(ErrorCode::kCaptureFailed, "screenshot is not a PNG: " + e.message(), url);
  }
  if (snap.width <= 0 || snap.height <= 0) {
    throw Error(ErrorCode::kCaptureFailed, "zero-sized screenshot", url);
  }

  const json extracted = session.Execute(ExtractionScript());
  snap.device_pixel_ratio = extracted.value("dpr", 1.0);
  snap.elements = ConvertElements(extracted, snap.frame());
  snap.captured_at = UtcTimestamp();
  return snap;
}

PageSnapshot CapturePage(const std::string& doc_id, const std::string& url,
                         const SessionConfig& cfg) {
  WebDriverSession session(cfg);
  return CapturePage(session, doc_id, url, cfg);
}

BatchResult SnapshotBatch(const std::vector<CaptureTarget>& targets, const SessionConfig& cfg,
                          const BatchOptions& options) {
  cfg.Validate();
  if (options.concurrency_limit <= 0) {
    throw Error(ErrorCode::kConfigInvalid, "must be positive", "concurrency_limit");
  }
  if (options.output_dir) std::filesystem::create_directories(*options.output_dir);

  std::vector<std::optional<PageSnapshot>> done(targets.size());
  std::vector<std::optional<CaptureFailure>> failed(targets.size());
  std::atomic<std::size_t> next{0};
  std::mutex save_mu;

  auto worker = [&] {
    std::unique_ptr<WebDriverSession> session;
    for (std::size_t i = next++; i < targets.size(); i = next++) {
      const CaptureTarget& target = targets[i];
      try {
        if (!session) session = std::make_unique<WebDriverSession>(cfg);
        PageSnapshot snap = CapturePage(*session, target.doc_id, target.url, cfg);
        if (options.output_dir) {
          std::lock_guard<std::mutex> lock(save_mu);
          SaveSnapshot(*options.output_dir, snap);
          snap.png.clear();
        }
        done[i] = std::move(snap);
      } catch (const Error& e) {
        failed[i] = CaptureFailure{target.doc_id, target.url, e.code(), e.what()};
        session.reset();
      } catch (const std::exception& e) {
        failed[i] = CaptureFailure{target.doc_id, target.url, ErrorCode::kCaptureFailed, e.what()};
        session.reset();
      }
      if (cfg.inter_request_delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg.inter_request_delay_ms));
      }
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(options.concurrency_limit), targets.size());
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  BatchResult result;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (done[i]) result.snapshots.push_back(std::move(*done[i]));
    if (failed[i]) result.failures.push_back(std::move(*failed[i]));
  }
  return result;
}

}  // namespace evchain::capture
