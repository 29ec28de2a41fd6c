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

#ifndef EVCHAIN_AUGMENT_H_
#define EVCHAIN_AUGMENT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evchain/dataset.h"
#include "evchain/evidence.h"
#include "evchain/geometry.h"
#include "evchain/raster.h"
#include "evchain/record.h"

namespace evchain::augment {

// Maps a source point p to (p - crop origin) * s + d. Without a crop the
// origin is (0, 0) and the whole source frame is kept.
struct AffineTransform {
  double sx = 1;
  double sy = 1;
  double dx = 0;
  double dy = 0;
  std::optional<BoundingBox> crop;

  bool IsIdentity() const { return sx == 1 && sy == 1 && dx == 0 && dy == 0 && !crop; }
};

// Throws kInvalidArgument for non-positive or non-finite scales, non-finite
// offsets, or a crop that is invalid or leaves the source frame.
void ValidateTransform(const AffineTransform& t, FrameSize src);

nlohmann::ordered_json TransformToJson(const AffineTransform& t);
AffineTransform TransformFromJson(const nlohmann::json& j);

// A box survives when at least this fraction of its mapped area stays visible.
inline constexpr double kMinRetainedFraction = 0.7;

// Keeps the part of `b` inside the crop, maps it, and clips it to `dst`.
// Returns nullopt when the retained area is below kMinRetainedFraction of the
// area of the mapped, unclipped box.
std::optional<BoundingBox> TransformBox(const BoundingBox& b, const AffineTransform& t,
                                        FrameSize src, FrameSize dst);

// Nearest-neighbour warp into a dst_width x dst_height canvas. Destination
// pixels whose preimage falls outside the crop are painted `background`.
Raster ApplyTransform(const Raster& src, const AffineTransform& t, int dst_width,
                      int dst_height, Rgb background = {255, 255, 255});

// Strength of the random geometric perturbations. Identity() turns all of
// them off.
struct AugmentConfig {
  double crop_min_fraction = 0.85;       // kept fraction of width and height
  double max_translate_fraction = 0.03;  // of the output size
  double max_aspect_jitter = 0.1;        // log-ratio sx/sy drawn from [-j, j]

  static AugmentConfig Identity() { return {1.0, 0.0, 0.0}; }
  void Validate() const;  // kConfigInvalid
};

nlohmann::ordered_json AugmentConfigToJson(const AugmentConfig& cfg);

// A transform drawn from `cfg` for an image of the given size, and the size
// of the canvas it maps into. Deterministic in `rng` state.
struct SampledTransform {
  AffineTransform transform;
  int width = 0;
  int height = 0;
};
SampledTransform SampleTransform(int width, int height, const AugmentConfig& cfg,
                                 std::mt19937_64& rng);

struct AugmentedImage {
  Raster image;
  std::vector<BoundingBox> boxes;
  AffineTransform transform;
};

// Applies one seeded random transform to the raster and every box. Returns
// nullopt when any box would be dropped.
std::optional<AugmentedImage> AugmentSample(const Raster& image,
                                            const std::vector<BoundingBox>& boxes,
                                            std::uint64_t seed, const AugmentConfig& cfg);

struct ResizedImage {
  Raster image;
  std::vector<BoundingBox> boxes;
  double sx = 1;  // new width / old width
  double sy = 1;  // new height / old height
};

// Uniform rescale so that the longer side equals `longest_side` (the other
// side is rounded); boxes follow the per-axis factors and stay in frame.
ResizedImage ResizeResolution(const Raster& image, const std::vector<BoundingBox>& boxes,
                              int longest_side);

// The resolution ladder used for multi-resolution training.
inline const std::vector<int>& DefaultResolutions() {
  static const std::vector<int> kSides = {512, 1024, 1536};
  return kSides;
}
std::vector<ResizedImage> ResolutionVariants(const Raster& image,
                                             const std::vector<BoundingBox>& boxes,
                                             const std::vector<int>& sides = DefaultResolutions());

struct PermutedCandidates {
  dataset::CandidateSet candset;
  ModelOutput target;
};

// Reorders candidates so that new position j holds old position order[j],
// relabels by position and rewrites gold_map and every hop's image_id. Hop
// order is untouched. Throws kInvalidArgument for a non-permutation and
// kInconsistency for a target label that is not in `candset`.
PermutedCandidates PermuteCandidates(const dataset::CandidateSet& candset,
                                     const ModelOutput& target,
                                     const std::vector<std::size_t>& order);
// Seeded uniform shuffle of the positions.
PermutedCandidates PermuteCandidates(const dataset::CandidateSet& candset,
                                     const ModelOutput& target, std::uint64_t seed);

struct ImageRef {
  std::string label;
  std::string image_path;
};

struct TrainingSample {
  int phase = 1;
  std::string prompt_text;
  std::vector<ImageRef> image_refs;
  ModelOutput target;
  nlohmann::ordered_json provenance;
};

// {phase, prompt_text, image_refs:[{label, image_path}], target, provenance};
// target is the serialized chain document.
nlohmann::ordered_json SampleToJson(const TrainingSample& s);
TrainingSample SampleFromJson(const nlohmann::json& j);
void ValidateSample(const TrainingSample& s);  // kInvariantViolation

struct EmitOptions {
  std::filesystem::path output_dir;  // augmented / resized images go to <output_dir>/images
  bool augment = false;
  AugmentConfig augment_config;
  bool permute = false;  // phase 2 only
  std::optional<int> longest_side;
};

// The sub-question written into targets for hop `t` (0-based). Source records
// carry no sub-questions, so one is phrased from the question.
std::string SyntheticSubQuestion(const QARecord& record, std::size_t t);

// One single-image sample per gold hop. A hop whose augmentation drops a box
// falls back to the clean image.
std::vector<TrainingSample> EmitPhase1(const QARecord& record, const dataset::DocumentPool& pool,
                                       std::uint64_t seed, const EmitOptions& options);

// One sample over all k candidates in candidate order (after the optional
// permutation), targeting the full gold chain.
TrainingSample EmitPhase2(const QARecord& record, const dataset::CandidateSet& candset,
                          const dataset::DocumentPool& pool, std::uint64_t seed,
                          const EmitOptions& options);

}  // namespace evchain::augment

#endif  // EVCHAIN_AUGMENT_H_
