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

#include "evchain/augment.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evchain/error.h"
#include "evchain/jsonl.h"
#include "evchain/prompt.h"
#include "evchain/random.h"

namespace evchain::augment {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

BoundingBox SourceRegion(const AffineTransform& t, FrameSize src) {
  return t.crop.value_or(BoundingBox{0, 0, src.width, src.height});
}

BoundingBox Map(const BoundingBox& b, const AffineTransform& t, const BoundingBox& region) {
  return {(b.x1 - region.x1) * t.sx + t.dx, (b.y1 - region.y1) * t.sy + t.dy,
          (b.x2 - region.x1) * t.sx + t.dx, (b.y2 - region.y1) * t.sy + t.dy};
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  if (!(lo < hi)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t DeriveSeed(std::uint64_t seed, const std::string& stream) {
  return SplitMix64(seed ^ Fnv1a(stream));
}

// An image after optional augmentation and resizing, together with what was
// done to it.
struct PreparedImage {
  std::string path;
  std::vector<BoundingBox> boxes;
  ordered_json provenance;
};

PreparedImage PrepareImage(const dataset::CandidateDocument& doc,
                           const std::vector<BoundingBox>& boxes, std::uint64_t seed,
                           const EmitOptions& options, const std::string& out_name) {
  PreparedImage out{doc.image_path, boxes, ordered_json::object()};
  out.provenance["doc_id"] = doc.doc_id;
  out.provenance["source_image"] = doc.image_path;
  out.provenance["transform"] = nullptr;
  out.provenance["augment_fallback"] = false;
  out.provenance["resize"] = nullptr;
  if (!options.augment && !options.longest_side) return out;

  Raster image = ReadPng(doc.image_path);
  if (options.augment) {
    if (auto aug = AugmentSample(image, boxes, seed, options.augment_config)) {
      image = std::move(aug->image);
      out.boxes = std::move(aug->boxes);
      ordered_json t = TransformToJson(aug->transform);
      t["src_width"] = doc.width;
      t["src_height"] = doc.height;
      t["out_width"] = image.width();
      t["out_height"] = image.height();
      out.provenance["transform"] = std::move(t);
    } else {
      out.provenance["augment_fallback"] = true;
    }
  }
  if (options.longest_side) {
    ResizedImage r = ResizeResolution(image, out.boxes, *options.longest_side);
    out.provenance["resize"] = {{"longest_side", *options.longest_side},
                                {"sx", r.sx},
                                {"sy", r.sy},
                                {"width", r.image.width()},
                                {"height", r.image.height()}};
    image = std::move(r.image);
    out.boxes = std::move(r.boxes);
  }
  const auto path = options.output_dir / "images" / out_name;
  WritePng(path, image);
  out.path = path.string();
  return out;
}

}  // namespace

void ValidateTransform(const AffineTransform& t, FrameSize src) {
  if (!(std::isfinite(t.sx) && std::isfinite(t.sy) && t.sx > 0 && t.sy > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "scale factors must be positive and finite");
  }
  if (!std::isfinite(t.dx) || !std::isfinite(t.dy)) {
    throw Error(ErrorCode::kInvalidArgument, "offsets must be finite");
  }
  if (t.crop && !IsInFrame(*t.crop, src)) {
    throw Error(ErrorCode::kInvalidArgument, "crop must be a valid box inside the source frame");
  }
}

ordered_json TransformToJson(const AffineTransform& t) {
  ordered_json j;
  j["sx"] = t.sx;
  j["sy"] = t.sy;
  j["dx"] = t.dx;
  j["dy"] = t.dy;
  j["crop"] = t.crop ? BoxToJson(*t.crop) : ordered_json(nullptr);
  return j;
}

AffineTransform TransformFromJson(const json& j) {
  AffineTransform t;
  try {
    t.sx = j.at("sx").get<double>();
    t.sy = j.at("sy").get<double>();
    t.dx = j.at("dx").get<double>();
    t.dy = j.at("dy").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), "transform");
  }
  if (j.contains("crop") && !j.at("crop").is_null()) t.crop = BoxFromJson(j.at("crop"), "crop");
  return t;
}

std::optional<BoundingBox> TransformBox(const BoundingBox& b, const AffineTransform& t,
                                        FrameSize src, FrameSize dst) {
  ValidateTransform(t, src);
  ValidateBox(b);
  const BoundingBox region = SourceRegion(t, src);
  const double full_area = BoxArea(Map(b, t, region));
  const auto visible = Intersect(b, region);
  if (!visible) return std::nullopt;
  const auto clipped = ClipToFrame(Map(*visible, t, region), dst);
  if (!clipped || BoxArea(*clipped) < kMinRetainedFraction * full_area) return std::nullopt;
  return clipped;
}

Raster ApplyTransform(const Raster& src, const AffineTransform& t, int dst_width,
                      int dst_height, Rgb background) {
  ValidateTransform(t, src.frame());
  if (dst_width <= 0 || dst_height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "destination size must be positive");
  }
  const BoundingBox region = SourceRegion(t, src.frame());
  Raster out(dst_width, dst_height, background);
  for (int i = 0; i < dst_height; ++i) {
    const double v = (i + 0.5 - t.dy) / t.sy + region.y1;
    if (v < region.y1 || v >= region.y2) continue;
    const int py = std::clamp(static_cast<int>(std::floor(v)), 0, src.height() - 1);
    for (int j = 0; j < dst_width; ++j) {
      const double u = (j + 0.5 - t.dx) / t.sx + region.x1;
      if (u < region.x1 || u >= region.x2) continue;
      const int px = std::clamp(static_cast<int>(std::floor(u)), 0, src.width() - 1);
      out.set(j, i, src.at(px, py));
    }
  }
  return out;
}

void AugmentConfig::Validate() const {
  if (!(crop_min_fraction > 0 && crop_min_fraction <= 1)) {
    throw Error(ErrorCode::kConfigInvalid, "crop_min_fraction must be in (0,1]");
  }
  if (!(max_translate_fraction >= 0 && max_translate_fraction < 1)) {
    throw Error(ErrorCode::kConfigInvalid, "max_translate_fraction must be in [0,1)");
  }
  if (!(max_aspect_jitter >= 0 && max_aspect_jitter <= 1)) {
    throw Error(ErrorCode::kConfigInvalid, "max_aspect_jitter must be in [0,1]");
  }
}

ordered_json AugmentConfigToJson(const AugmentConfig& cfg) {
  return {{"crop_min_fraction", cfg.crop_min_fraction},
          {"max_translate_fraction", cfg.max_translate_fraction},
          {"max_aspect_jitter", cfg.max_aspect_jitter}};
}

SampledTransform SampleTransform(int width, int height, const AugmentConfig& cfg,
                                 std::mt19937_64& rng) {
  cfg.Validate();
  const double fw = Uniform(rng, cfg.crop_min_fraction, 1.0);
  const double fh = Uniform(rng, cfg.crop_min_fraction, 1.0);
  const int cw = std::clamp(static_cast<int>(std::lround(width * fw)), 1, width);
  const int ch = std::clamp(static_cast<int>(std::lround(height * fh)), 1, height);
  const int x0 = std::uniform_int_distribution<int>(0, width - cw)(rng);
  const int y0 = std::uniform_int_distribution<int>(0, height - ch)(rng);

  SampledTransform s;
  AffineTransform& t = s.transform;
  if (cw != width || ch != height) {
    t.crop = BoundingBox{double(x0), double(y0), double(x0 + cw), double(y0 + ch)};
  }
  const double a = Uniform(rng, -cfg.max_aspect_jitter, cfg.max_aspect_jitter);
  t.sx = std::exp(a / 2);
  t.sy = std::exp(-a / 2);
  s.width = std::max(1, static_cast<int>(std::lround(cw * t.sx)));
  s.height = std::max(1, static_cast<int>(std::lround(ch * t.sy)));
  const double m = cfg.max_translate_fraction;
  t.dx = Uniform(rng, -m, m) * s.width;
  t.dy = Uniform(rng, -m, m) * s.height;
  return s;
}

std::optional<AugmentedImage> AugmentSample(const Raster& image,
                                            const std::vector<BoundingBox>& boxes,
                                            std::uint64_t seed, const AugmentConfig& cfg) {
  auto rng = MakeRng(seed, "augment");
  const SampledTransform s = SampleTransform(image.width(), image.height(), cfg, rng);
  const FrameSize dst{double(s.width), double(s.height)};
  AugmentedImage out;
  out.transform = s.transform;
  for (const auto& b : boxes) {
    auto tb = TransformBox(b, s.transform, image.frame(), dst);
    if (!tb) return std::nullopt;
    out.boxes.push_back(*tb);
  }
  out.image = s.transform.IsIdentity() && s.width == image.width() && s.height == image.height()
                  ? image
                  : ApplyTransform(image, s.transform, s.width, s.height);
  return out;
}

ResizedImage ResizeResolution(const Raster& image, const std::vector<BoundingBox>& boxes,
                              int longest_side) {
  if (longest_side <= 0) throw Error(ErrorCode::kInvalidArgument, "longest_side must be positive");
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image");
  const double s = double(longest_side) / std::max(image.width(), image.height());
  const int w = std::max(1, static_cast<int>(std::lround(image.width() * s)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height() * s)));
  ResizedImage out;
  out.sx = double(w) / image.width();
  out.sy = double(h) / image.height();
  out.image = (w == image.width() && h == image.height()) ? image : Resize(image, w, h);
  const FrameSize frame = out.image.frame();
  for (const auto& b : boxes) {
    const BoundingBox scaled{b.x1 * out.sx, b.y1 * out.sy, b.x2 * out.sx, b.y2 * out.sy};
    out.boxes.push_back(ClipToFrame(scaled, frame).value_or(scaled));
  }
  return out;
}

std::vector<ResizedImage> ResolutionVariants(const Raster& image,
                                             const std::vector<BoundingBox>& boxes,
                                             const std::vector<int>& sides) {
  std::vector<ResizedImage> out;
  for (int side : sides) out.push_back(ResizeResolution(image, boxes, side));
  return out;
}

PermutedCandidates PermuteCandidates(const dataset::CandidateSet& candset,
                                     const ModelOutput& target,
                                     const std::vector<std::size_t>& order) {
  const std::size_t k = candset.k();
  std::vector<bool> seen(k, false);
  if (order.size() != k) throw Error(ErrorCode::kInvalidArgument, "order is not a permutation");
  for (std::size_t p : order) {
    if (p >= k || seen[p]) throw Error(ErrorCode::kInvalidArgument, "order is not a permutation");
    seen[p] = true;
  }
  PermutedCandidates out{candset, target};
  std::map<std::string, std::string> relabel;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& old = candset.ordered[order[j]];
    out.candset.ordered[j] = {ImageLabel(j), old.doc_id};
    relabel[old.label] = ImageLabel(j);
  }
  for (auto& [doc, label] : out.candset.gold_map) {
    const auto it = relabel.find(label);
    if (it == relabel.end()) {
      throw Error(ErrorCode::kInconsistency, "gold label " + label + " not in candidate set",
                  "gold_map." + doc);
    }
    label = it->second;
  }
  for (std::size_t t = 0; t < out.target.chain.hops.size(); ++t) {
    auto& hop = out.target.chain.hops[t];
    const auto it = relabel.find(hop.image_id);
    if (it == relabel.end()) {
      throw Error(ErrorCode::kInconsistency, "unknown label " + hop.image_id,
                  "chain[" + std::to_string(t) + "].image_id");
    }
    hop.image_id = it->second;
  }
  return out;
}

PermutedCandidates PermuteCandidates(const dataset::CandidateSet& candset,
                                     const ModelOutput& target, std::uint64_t seed) {
  std::vector<std::size_t> order(candset.k());
  std::iota(order.begin(), order.end(), 0);
  auto rng = MakeRng(seed, "permute:" + candset.question_id);
  std::shuffle(order.begin(), order.end(), rng);
  return PermuteCandidates(candset, target, order);
}

ordered_json SampleToJson(const TrainingSample& s) {
  ordered_json j;
  j["phase"] = s.phase;
  j["prompt_text"] = s.prompt_text;
  ordered_json refs = ordered_json::array();
  for (const auto& r : s.image_refs) refs.push_back({{"label", r.label}, {"image_path", r.image_path}});
  j["image_refs"] = std::move(refs);
  j["target"] = EmitChain(s.target);
  j["provenance"] = s.provenance;
  return j;
}

TrainingSample SampleFromJson(const json& j) {
  TrainingSample s;
  try {
    s.phase = j.at("phase").get<int>();
    s.prompt_text = j.at("prompt_text").get<std::string>();
    for (const auto& r : j.at("image_refs")) {
      s.image_refs.push_back({r.at("label").get<std::string>(), r.at("image_path").get<std::string>()});
    }
    s.target = ParseChain(j.at("target").get<std::string>());
    s.provenance = j.value("provenance", ordered_json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), "sample");
  }
  return s;
}

void ValidateSample(const TrainingSample& s) {
  ValidateModelOutput(s.target);
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvariantViolation, msg); };
  if (s.phase == 1) {
    if (s.image_refs.size() != 1 || s.image_refs[0].label != "img_0") {
      fail("phase 1 sample needs exactly one image labeled img_0");
    }
    if (s.target.chain.size() != 1) fail("phase 1 target must have one hop");
  } else if (s.phase == 2) {
    if (s.image_refs.empty()) fail("phase 2 sample has no images");
    for (std::size_t i = 0; i < s.image_refs.size(); ++i) {
      if (s.image_refs[i].label != ImageLabel(i)) fail("image labels must be img_0..img_{k-1}");
    }
  } else {
    fail("phase must be 1 or 2");
  }
  for (const auto& hop : s.target.chain.hops) {
    const auto idx = ParseImageLabel(hop.image_id);
    if (!idx || *idx >= s.image_refs.size()) fail("target references unknown image " + hop.image_id);
  }
}

std::string SyntheticSubQuestion(const QARecord& record, std::size_t t) {
  return "Step " + std::to_string(t + 1) + " of " + std::to_string(record.gold_chain.size()) +
         ": which region of this page is evidence for \"" + record.question + "\"?";
}

std::vector<TrainingSample> EmitPhase1(const QARecord& record, const dataset::DocumentPool& pool,
                                       std::uint64_t seed, const EmitOptions& options) {
  if (record.gold_answers.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "record has no gold answer", record.question_id);
  }
  const PromptTemplate& tmpl = DefaultGroundingPrompt();
  std::vector<TrainingSample> out;
  for (std::size_t t = 0; t < record.gold_chain.size(); ++t) {
    const GoldHop& hop = record.gold_chain[t];
    const std::string stem = SafeFileStem(record.question_id) + "_p1_h" + std::to_string(t + 1);
    const PreparedImage img = PrepareImage(pool.Get(hop.doc_id), hop.boxes,
                                           DeriveSeed(seed, stem), options, stem + ".png");
    TrainingSample s;
    s.phase = 1;
    const std::string sub = SyntheticSubQuestion(record, t);
    s.prompt_text = tmpl.system_text + "\n\n" +
                    Substitute(tmpl.user_text, {{"question", record.question}, {"sub_question", sub}});
    s.image_refs = {{"img_0", img.path}};
    s.target.answer = record.gold_answers.front();
    s.target.chain.hops = {{1, "img_0", img.boxes, sub}};
    s.provenance = {{"question_id", record.question_id},
                    {"seed", seed},
                    {"template", tmpl.version},
                    {"hop", t + 1},
                    {"images", ordered_json::array({img.provenance})}};
    out.push_back(std::move(s));
  }
  return out;
}

TrainingSample EmitPhase2(const QARecord& record, const dataset::CandidateSet& candset,
                          const dataset::DocumentPool& pool, std::uint64_t seed,
                          const EmitOptions& options) {
  if (record.gold_answers.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "record has no gold answer", record.question_id);
  }
  dataset::ValidateCandidateSet(candset, record);
  ModelOutput target;
  target.answer = record.gold_answers.front();
  for (std::size_t t = 0; t < record.gold_chain.size(); ++t) {
    const GoldHop& g = record.gold_chain[t];
    target.chain.hops.push_back({static_cast<int>(t) + 1, candset.gold_map.at(g.doc_id), g.boxes,
                                 SyntheticSubQuestion(record, t)});
  }
  dataset::CandidateSet cs = candset;
  if (options.permute) {
    PermutedCandidates p = PermuteCandidates(candset, target, DeriveSeed(seed, "permute"));
    cs = std::move(p.candset);
    target = std::move(p.target);
  }

  const std::string qstem = SafeFileStem(record.question_id);
  TrainingSample s;
  s.phase = 2;
  ordered_json images = ordered_json::array();
  std::string labels;
  for (const auto& entry : cs.ordered) {
    // Boxes of every hop that points at this image, in hop order.
    std::vector<BoundingBox> boxes;
    for (const auto& hop : target.chain.hops) {
      if (hop.image_id == entry.label) boxes.insert(boxes.end(), hop.boxes.begin(), hop.boxes.end());
    }
    const std::string stem = qstem + "_p2_" + entry.label;
    PreparedImage img = PrepareImage(pool.Get(entry.doc_id), boxes, DeriveSeed(seed, stem),
                                     options, stem + ".png");
    std::size_t next = 0;
    for (auto& hop : target.chain.hops) {
      if (hop.image_id != entry.label) continue;
      for (auto& b : hop.boxes) b = img.boxes[next++];
    }
    img.provenance["label"] = entry.label;
    images.push_back(std::move(img.provenance));
    s.image_refs.push_back({entry.label, img.path});
    labels += (labels.empty() ? "" : ", ") + entry.label;
  }
  const PromptTemplate& tmpl = DefaultChainPrompt();
  s.prompt_text = tmpl.system_text + "\n\n" +
                  Substitute(tmpl.user_text, {{"question", record.question},
                                              {"k", std::to_string(cs.k())},
                                              {"labels", labels}});
  s.target = std::move(target);
  s.provenance = {{"question_id", record.question_id},
                  {"seed", seed},
                  {"template", tmpl.version},
                  {"permuted", options.permute},
                  {"images", std::move(images)}};
  return s;
}

}  // namespace evchain::augment
