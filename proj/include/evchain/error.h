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

#ifndef EVCHAIN_ERROR_H_
#define EVCHAIN_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace evchain {

enum class ErrorCode {
  kInvalidBox,
  kSchemaViolation,
  kInvariantViolation,
  kInvalidArgument,
  kInsufficientPool,
  kGoldMissing,
  kEmptyEvaluation,
  kEmptyDataset,
  kMissingSnapshot,
  kMissingImage,
  kMissingQuestion,
  kInconsistency,
  kNavigationTimeout,
  kCaptureFailed,
  kEndpointUnreachable,
  kScriptFailure,
  kAuthFailure,
  kRequestRejected,
  kConfigInvalid,
  kIo,
};

// Machine-readable name, e.g. "schema-violation".
std::string_view ErrorCodeName(ErrorCode code);

// All recoverable failures in the library are reported through this type.
// `path` is a field path ("chain[0].boxes") for document errors and empty
// otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string path = {});

  ErrorCode code() const { return code_; }
  const std::string& path() const { return path_; }
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::string path_;
};

}  // namespace evchain

#endif  // EVCHAIN_ERROR_H_
