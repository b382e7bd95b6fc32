// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "backends.hpp"
#include "core.hpp"
#include "image.hpp"
#include "imaging.hpp"

namespace disclip {

struct SceneEmbeddings {
  RegionRepresentation target;
  std::vector<RegionRepresentation> distractors;  // scene order, target excluded

  // All regions in scene order, target included at target_index.
  std::vector<RegionRepresentation> all;
  std::size_t target_index = 0;
};

SceneEmbeddings precompute_scene_embeddings(const Scene& scene, const Image& image,
                                            Encoder& encoder, const ImagingConfig& cfg,
                                            CropStyle style = CropStyle::kPlain);

// Same embeddings with every distractor removed.
SceneEmbeddings without_distractors(const SceneEmbeddings& embs);

struct DecodeSettings {
  std::string prompt = "A photo of";
  // When set, the text encoder scores only the generated suffix.
  bool strip_prompt_for_clip = false;
};

// Greedy guided decoding: each step scores the LM's top-k candidates and
// appends the fused-score argmax (ties to the lowest token id) until a stop
// token or max_tokens.
GenerationResult generate(const SceneEmbeddings& scene_embs, LanguageModel& lm, Encoder& encoder,
                          const Hyperparameters& hyper, const DecodeSettings& settings = {});

}  // namespace disclip
