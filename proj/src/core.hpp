// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every engine module: boxes, regions, scenes,
// hyperparameters, embeddings and generation results.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace disclip {

enum class ErrorKind {
  kInvalidArgument,
  kConfig,
  kValidation,
  kIo,
  kParse,
  kBackend,
  kProtocol,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

using TokenId = std::int32_t;

// Axis-aligned box in pixels, (0,0) at the top-left corner.
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const BBox&) const = default;
};

// Throws kValidation if w or h is not positive or the origin is negative.
void check_bbox(const BBox& box);
// Additionally requires the box to lie inside a width x height image.
void check_bbox_in_bounds(const BBox& box, int width, int height);

struct Region {
  std::string id;
  BBox bbox;
  std::vector<std::string> attributes;  // toy world only

  bool operator==(const Region&) const = default;
};

struct Scene {
  std::string id;
  std::string image_path;
  int width = 0;
  int height = 0;
  std::vector<Region> regions;
  std::string target_id;
  std::vector<std::string> ground_truth;

  bool operator==(const Scene&) const = default;

  std::size_t target_index() const;
  const Region& target() const { return regions[target_index()]; }
};

// Returns the scene unchanged when every invariant holds. Errors name the
// offending field, e.g. "regions[2].bbox: x + w = 641 exceeds image width 640".
Scene validate_scene(const Scene& scene, int image_w, int image_h);

enum class NormMode { kRaw, kSoftmax };
enum class SimMode { kCosine, kClipScore };

const char* to_string(NormMode mode);
const char* to_string(SimMode mode);
NormMode parse_norm_mode(const std::string& text);
SimMode parse_sim_mode(const std::string& text);

struct Hyperparameters {
  double lambda = 0.75;  // target vs. distractor mix
  double delta = 0.5;    // blur vs. crop view mix
  double beta = 2.0;     // weight of the visual score against the language score
  double alpha = 0.6;    // degeneration penalty vs. model confidence
  int k = 45;
  int max_tokens = 16;
  // Unset means the language model's end-of-text token plus the period token.
  std::optional<std::set<TokenId>> stop_tokens;
  NormMode norm_mode = NormMode::kSoftmax;
  SimMode sim_mode = SimMode::kCosine;

  // Throws kConfig naming the first field out of range.
  void validate() const;
};

class Embedding {
 public:
  Embedding() = default;
  // Throws kInvalidArgument on an empty vector or a non-finite entry.
  explicit Embedding(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<double> values_;
};

struct RegionRepresentation {
  Embedding crop_emb;
  Embedding blur_emb;

  bool operator==(const RegionRepresentation&) const = default;
};

struct StepTrace {
  std::vector<TokenId> candidates;
  std::vector<double> p_model;
  std::vector<double> degen_penalty;
  std::vector<double> s_plus;
  std::vector<double> s_minus_mean;
  std::vector<double> l_disclip;
  std::vector<double> l_lang;
  std::vector<double> fused;
  std::size_t chosen = 0;

  bool operator==(const StepTrace&) const = default;
};

enum class StopReason { kStopToken, kMaxTokens };
const char* to_string(StopReason reason);

struct GenerationResult {
  std::string expression;
  std::vector<TokenId> tokens;
  std::vector<StepTrace> trace;
  StopReason stop_reason = StopReason::kMaxTokens;

  bool operator==(const GenerationResult&) const = default;
};

}  // namespace disclip
