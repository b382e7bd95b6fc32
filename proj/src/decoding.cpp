// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "decoding.hpp"

#include <algorithm>
#include <set>

#include "scoring.hpp"

namespace disclip {

SceneEmbeddings precompute_scene_embeddings(const Scene& scene, const Image& image,
                                            Encoder& encoder, const ImagingConfig& cfg,
                                            CropStyle style) {
  validate_scene(scene, image.width, image.height);
  SceneEmbeddings out;
  out.target_index = scene.target_index();
  out.all.reserve(scene.regions.size());
  for (const Region& r : scene.regions) {
    out.all.push_back(represent_region(image, r.bbox, cfg, encoder, style));
  }
  out.target = out.all[out.target_index];
  for (std::size_t i = 0; i < out.all.size(); ++i) {
    if (i != out.target_index) out.distractors.push_back(out.all[i]);
  }
  return out;
}

SceneEmbeddings without_distractors(const SceneEmbeddings& embs) {
  SceneEmbeddings out;
  out.target = embs.target;
  out.all = {embs.target};
  out.target_index = 0;
  return out;
}

namespace {

std::set<TokenId> resolve_stop_tokens(LanguageModel& lm, const Hyperparameters& hyper) {
  if (hyper.stop_tokens) return *hyper.stop_tokens;
  std::set<TokenId> stops{lm.eot_token()};
  const std::vector<TokenId> period = lm.tokenize(".");
  if (period.size() == 1) stops.insert(period.front());
  return stops;
}

}  // namespace

GenerationResult generate(const SceneEmbeddings& scene_embs, LanguageModel& lm, Encoder& encoder,
                          const Hyperparameters& hyper, const DecodeSettings& settings) {
  hyper.validate();
  const std::set<TokenId> stops = resolve_stop_tokens(lm, hyper);
  const std::vector<TokenId> prompt = lm.tokenize(settings.prompt);

  GenerationResult result;
  std::vector<Embedding> prev_hiddens;
  std::vector<TokenId> context = prompt;

  for (int step = 0; step < hyper.max_tokens; ++step) {
    try {
      const std::vector<TokenCandidate> candidates = lm.top_k(context, hyper.k);
      if (candidates.empty()) fail(ErrorKind::kBackend, "language model returned no candidates");

      std::vector<Embedding> text_embs;
      text_embs.reserve(candidates.size());
      std::vector<TokenId> scored = settings.strip_prompt_for_clip ? result.tokens : context;
      scored.push_back(0);
      for (const TokenCandidate& c : candidates) {
        scored.back() = c.token;
        text_embs.push_back(encoder.encode_text(lm.detokenize(scored)));
      }

      const std::vector<CandidateScore> scores =
          score_candidates(candidates, text_embs, scene_embs.target, scene_embs.distractors,
                           prev_hiddens, hyper);
      const std::size_t best = argmax_fused(scores);

      StepTrace trace;
      for (const CandidateScore& cs : scores) {
        trace.candidates.push_back(cs.token);
        trace.p_model.push_back(cs.p_model);
        trace.degen_penalty.push_back(cs.degen_penalty);
        trace.s_plus.push_back(cs.s_plus);
        trace.s_minus_mean.push_back(cs.s_minus_mean);
        trace.l_disclip.push_back(cs.l_disclip);
        trace.l_lang.push_back(cs.l_lang);
        trace.fused.push_back(cs.fused);
      }
      trace.chosen = best;
      result.trace.push_back(std::move(trace));

      const TokenId token = scores[best].token;
      result.tokens.push_back(token);
      context.push_back(token);
      prev_hiddens.push_back(scores[best].hidden);
      if (stops.contains(token)) {
        result.stop_reason = StopReason::kStopToken;
        break;
      }
    } catch (const Error& e) {
      fail(e.kind(), "generation step " + std::to_string(step) + ": " + e.what());
    }
  }

  std::vector<TokenId> visible = result.tokens;
  std::erase(visible, lm.eot_token());
  result.expression = lm.detokenize(visible);
  return result;
}

}  // namespace disclip
