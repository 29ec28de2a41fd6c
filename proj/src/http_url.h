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

#ifndef EVCHAIN_SRC_HTTP_URL_H_
#define EVCHAIN_SRC_HTTP_URL_H_

#include <regex>
#include <string>

#include "evchain/error.h"

namespace evchain::internal {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

// Throws kConfigInvalid naming `field` when `url` is not http(s).
inline ParsedUrl ParseBaseUrl(const std::string& url, const std::string& field) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    throw Error(ErrorCode::kConfigInvalid, field + " must look like http(s)://host[:port][/path]",
                field);
  }
  std::string prefix = m[2].str();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

}  // namespace evchain::internal

#endif  // EVCHAIN_SRC_HTTP_URL_H_
