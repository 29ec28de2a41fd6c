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

#ifndef EVCHAIN_PROMPT_H_
#define EVCHAIN_PROMPT_H_

#include <map>
#include <string>
#include <string_view>

namespace evchain {

// A versioned prompt. Placeholders are written {name}; unknown placeholders
// are left as is.
struct PromptTemplate {
  std::string version;
  std::string system_text;
  std::string user_text;
};

std::string Substitute(std::string_view text, const std::map<std::string, std::string>& values);

// Multi-hop chain generation over k labeled candidates. Placeholders:
// {question}, {k}, {labels}.
const PromptTemplate& DefaultChainPrompt();

// Single-image grounding of one sub-question. Placeholders: {question},
// {sub_question}.
const PromptTemplate& DefaultGroundingPrompt();

}  // namespace evchain

#endif  // EVCHAIN_PROMPT_H_
