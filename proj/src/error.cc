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

#include "evchain/error.h"

#include <utility>

namespace evchain {
namespace {

std::string Compose(ErrorCode code, const std::string& message,
                    const std::string& path) {
  std::string out(ErrorCodeName(code));
  if (!path.empty()) out += " at " + path;
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidBox: return "invalid-box";
    case ErrorCode::kSchemaViolation: return "schema-violation";
    case ErrorCode::kInvariantViolation: return "invariant-violation";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInsufficientPool: return "insufficient-pool";
    case ErrorCode::kGoldMissing: return "gold-missing";
    case ErrorCode::kEmptyEvaluation: return "empty-evaluation";
    case ErrorCode::kEmptyDataset: return "empty-dataset";
    case ErrorCode::kMissingSnapshot: return "missing-snapshot";
    case ErrorCode::kMissingImage: return "missing-image";
    case ErrorCode::kMissingQuestion: return "missing-question";
    case ErrorCode::kInconsistency: return "inconsistency";
    case ErrorCode::kNavigationTimeout: return "navigation-timeout";
    case ErrorCode::kCaptureFailed: return "capture-failed";
    case ErrorCode::kEndpointUnreachable: return "endpoint-unreachable";
    case ErrorCode::kScriptFailure: return "script-failure";
    case ErrorCode::kAuthFailure: return "auth-failure";
    case ErrorCode::kRequestRejected: return "request-rejected";
    case ErrorCode::kConfigInvalid: return "config-invalid";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, std::string message, std::string path)
    : std::runtime_error(Compose(code, message, path)),
      code_(code),
      message_(std::move(message)),
      path_(std::move(path)) {}

}  // namespace evchain
