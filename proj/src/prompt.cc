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

#include "evchain/prompt.h"

namespace evchain {
namespace {

constexpr std::string_view kSchema =
    "Respond with one JSON object and nothing else, of the form\n"
    "{\"answer\": \"<short answer>\", \"chain\": [{\"hop\": 1, \"image_id\": \"img_<n>\", "
    "\"boxes\": [[x1, y1, x2, y2]], \"sub_question\": \"<what this hop resolves>\"}]}\n"
    "Hops are numbered from 1 in reasoning order. Boxes are pixel coordinates in the "
    "referenced image with x1 < x2 and y1 < y2.";

}  // namespace

std::string Substitute(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto it = values.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

const PromptTemplate& DefaultChainPrompt() {
  static const PromptTemplate kTemplate{
      "chain-v1",
      "You answer multi-hop questions from screenshots of documents. Each candidate image "
      "is introduced by its label. Select the images that hold the evidence, in the order "
      "the reasoning uses them, and mark the evidence regions in each.\n" +
          std::string(kSchema),
      "Question: {question}\nThere are {k} candidate images: {labels}."};
  return kTemplate;
}

const PromptTemplate& DefaultGroundingPrompt() {
  static const PromptTemplate kTemplate{
      "grounding-v1",
      "You locate evidence in a screenshot of a document. Mark the regions that answer the "
      "sub-question.\n" +
          std::string(kSchema),
      "Question: {question}\nSub-question: {sub_question}\nThe image is img_0."};
  return kTemplate;
}

}  // namespace evchain
