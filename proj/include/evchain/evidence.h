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

#ifndef EVCHAIN_EVIDENCE_H_
#define EVCHAIN_EVIDENCE_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evchain/geometry.h"

namespace evchain {

// Candidate labels are "img_<k>" with k written without leading zeros.
std::string ImageLabel(std::size_t index);
std::optional<std::size_t> ParseImageLabel(std::string_view label);

// One step of an evidence chain: the candidate image selected at this hop,
// the regions grounding the evidence in it, and the sub-question.
struct EvidenceHop {
  int hop_index = 1;  // 1-based logical position
  std::string image_id;
  std::vector<BoundingBox> boxes;
  std::string sub_question;

  friend bool operator==(const EvidenceHop&, const EvidenceHop&) = default;
};

struct EvidenceChain {
  std::vector<EvidenceHop> hops;

  std::size_t size() const { return hops.size(); }
  friend bool operator==(const EvidenceChain&, const EvidenceChain&) = default;
};

struct ModelOutput {
  std::string answer;
  EvidenceChain chain;

  friend bool operator==(const ModelOutput&, const ModelOutput&) = default;
};

// Throws Error(kInvariantViolation / kInvalidBox) with a field path when the
// chain or output breaks its invariants.
void ValidateChain(const EvidenceChain& chain);
void ValidateModelOutput(const ModelOutput& out);

// Evidence-chain document codec. The document is a single JSON object:
//   {"answer":..., "chain":[{"hop":1,"image_id":"img_3",
//                           "boxes":[[x1,y1,x2,y2],...],"sub_question":...}]}
// Hops appear in logical order. Coordinates are written at full precision so
// that ParseChain(EmitChain(x)) == x bit for bit.
ModelOutput ParseChain(std::string_view text);
std::string EmitChain(const ModelOutput& out);

}  // namespace evchain

#endif  // EVCHAIN_EVIDENCE_H_
