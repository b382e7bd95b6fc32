// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Score arithmetic for guided decoding. A candidate token v extending the
// text so far is scored as
//
//   fused = l_lang + beta * l_disclip
//   l_lang = (1 - alpha) * p_model(v) - alpha * max_j cos(h_v, h_j)
//   l_disclip = lambda * S+ - (1 - lambda) * mean_i S-_i
//
// where S+ / S-_i are the similarities of the text to the target / each
// distractor region, each a delta-mix of blur-view and crop-view similarity,
// optionally softmax-normalized across the k candidates of one step.

#pragma once

#include <span>
#include <vector>

#include "backends.hpp"
#include "core.hpp"

namespace disclip {

struct CandidateScore {
  TokenId token = 0;
  double p_model = 0.0;
  Embedding hidden;
  double s_plus = 0.0;
  double s_minus_mean = 0.0;
  double l_disclip = 0.0;
  double degen_penalty = 0.0;
  double l_lang = 0.0;
  double fused = 0.0;
};

double cosine(const Embedding& a, const Embedding& b);

double similarity(const Embedding& text_emb, const Embedding& image_emb, SimMode mode);

std::vector<double> candidate_distribution(std::span<const double> scores);

double region_similarity(const Embedding& text_emb, const RegionRepresentation& rep, double delta,
                         SimMode mode = SimMode::kCosine);

double disclip_score(double s_plus, std::span<const double> s_minus, double lambda);

// max_j cos(hidden_v, prev_hiddens[j]), 0 for an empty history.
double degeneration_penalty(const Embedding& hidden_v, std::span<const Embedding> prev_hiddens);

double language_score(double p_model, const Embedding& hidden_v,
                      std::span<const Embedding> prev_hiddens, double alpha);

double fused_score(double l_lang, double l_disclip, double beta);

std::vector<CandidateScore> score_candidates(std::span<const TokenCandidate> candidates,
                                             std::span<const Embedding> text_embs,
                                             const RegionRepresentation& target_rep,
                                             std::span<const RegionRepresentation> distractor_reps,
                                             std::span<const Embedding> prev_hiddens,
                                             const Hyperparameters& hyper);

// Index of the highest fused score; ties go to the lowest token id.
std::size_t argmax_fused(std::span<const CandidateScore> scores);

}  // namespace disclip
