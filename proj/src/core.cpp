// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "core.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace disclip {

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

void check_bbox(const BBox& box) {
  if (box.w <= 0 || box.h <= 0) {
    std::ostringstream msg;
    msg << "bbox: width and height must be positive (got w=" << box.w << ", h=" << box.h << ")";
    fail(ErrorKind::kValidation, msg.str());
  }
  if (box.x < 0 || box.y < 0) {
    std::ostringstream msg;
    msg << "bbox: origin must be non-negative (got x=" << box.x << ", y=" << box.y << ")";
    fail(ErrorKind::kValidation, msg.str());
  }
}

void check_bbox_in_bounds(const BBox& box, int width, int height) {
  check_bbox(box);
  // 64-bit sums so huge coordinates cannot wrap around.
  if (static_cast<long long>(box.x) + box.w > width) {
    std::ostringstream msg;
    msg << "bbox: x + w = " << static_cast<long long>(box.x) + box.w << " exceeds image width "
        << width;
    fail(ErrorKind::kValidation, msg.str());
  }
  if (static_cast<long long>(box.y) + box.h > height) {
    std::ostringstream msg;
    msg << "bbox: y + h = " << static_cast<long long>(box.y) + box.h << " exceeds image height "
        << height;
    fail(ErrorKind::kValidation, msg.str());
  }
}

std::size_t Scene::target_index() const {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].id == target_id) return i;
  }
  fail(ErrorKind::kValidation, "target_id: target not found: '" + target_id + "'");
}

Scene validate_scene(const Scene& scene, int image_w, int image_h) {
  if (image_w <= 0 || image_h <= 0) {
    fail(ErrorKind::kValidation, "image: width and height must be positive");
  }
  if (scene.regions.empty()) {
    fail(ErrorKind::kValidation, "regions: scene has no regions");
  }
  std::unordered_set<std::string> seen;
  std::size_t target_hits = 0;
  for (std::size_t i = 0; i < scene.regions.size(); ++i) {
    const Region& r = scene.regions[i];
    const std::string field = "regions[" + std::to_string(i) + "]";
    if (!seen.insert(r.id).second) {
      fail(ErrorKind::kValidation, field + ".id: duplicate region id '" + r.id + "'");
    }
    try {
      check_bbox_in_bounds(r.bbox, image_w, image_h);
    } catch (const Error& e) {
      fail(ErrorKind::kValidation, field + "." + e.what());
    }
    if (r.id == scene.target_id) ++target_hits;
  }
  if (target_hits == 0) {
    fail(ErrorKind::kValidation, "target_id: target not found: '" + scene.target_id + "'");
  }
  return scene;
}

const char* to_string(NormMode mode) { return mode == NormMode::kRaw ? "raw" : "softmax"; }
const char* to_string(SimMode mode) { return mode == SimMode::kCosine ? "cosine" : "clipscore"; }
const char* to_string(StopReason reason) {
  return reason == StopReason::kStopToken ? "stop_token" : "max_tokens";
}

NormMode parse_norm_mode(const std::string& text) {
  if (text == "raw") return NormMode::kRaw;
  if (text == "softmax") return NormMode::kSoftmax;
  fail(ErrorKind::kConfig, "norm_mode: expected 'raw' or 'softmax', got '" + text + "'");
}

SimMode parse_sim_mode(const std::string& text) {
  if (text == "cosine") return SimMode::kCosine;
  if (text == "clipscore") return SimMode::kClipScore;
  fail(ErrorKind::kConfig, "sim_mode: expected 'cosine' or 'clipscore', got '" + text + "'");
}

namespace {

void check_unit(const char* name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    std::ostringstream msg;
    msg << name << ": must lie in [0, 1] (got " << v << ")";
    fail(ErrorKind::kConfig, msg.str());
  }
}

}  // namespace

void Hyperparameters::validate() const {
  check_unit("lambda", lambda);
  check_unit("delta", delta);
  check_unit("alpha", alpha);
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    std::ostringstream msg;
    msg << "beta: must be finite and >= 0 (got " << beta << ")";
    fail(ErrorKind::kConfig, msg.str());
  }
  if (k < 1) fail(ErrorKind::kConfig, "k: must be >= 1 (got " + std::to_string(k) + ")");
  if (max_tokens < 1) {
    fail(ErrorKind::kConfig, "max_tokens: must be >= 1 (got " + std::to_string(max_tokens) + ")");
  }
}

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) fail(ErrorKind::kInvalidArgument, "embedding: dimension must be positive");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(ErrorKind::kInvalidArgument,
           "embedding: non-finite value at index " + std::to_string(i));
    }
  }
}

}  // namespace disclip
