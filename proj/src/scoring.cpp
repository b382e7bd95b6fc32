// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "scoring.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace disclip {

namespace {

void check_finite(const char* name, double v) {
  if (!std::isfinite(v)) fail(ErrorKind::kInvalidArgument, std::string(name) + ": non-finite value");
}

void check_dims(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    std::ostringstream msg;
    msg << "similarity: dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
    fail(ErrorKind::kInvalidArgument, msg.str());
  }
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
  check_dims(a, b);
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a[i] * b[i];
    norm_a += a[i] * a[i];
    norm_b += b[i] * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) {
    fail(ErrorKind::kInvalidArgument, "similarity: zero vector has no direction");
  }
  return std::clamp(dot / (std::sqrt(norm_a) * std::sqrt(norm_b)), -1.0, 1.0);
}

double similarity(const Embedding& text_emb, const Embedding& image_emb, SimMode mode) {
  const double cos = cosine(text_emb, image_emb);
  return mode == SimMode::kClipScore ? 2.5 * std::max(cos, 0.0) : cos;
}

std::vector<double> candidate_distribution(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorKind::kInvalidArgument, "candidate_distribution: empty input");
  for (double s : scores) check_finite("candidate_distribution", s);
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double region_similarity(const Embedding& text_emb, const RegionRepresentation& rep, double delta,
                         SimMode mode) {
  if (!(delta >= 0.0 && delta <= 1.0)) fail(ErrorKind::kInvalidArgument, "delta: must lie in [0, 1]");
  return delta * similarity(text_emb, rep.blur_emb, mode) +
         (1.0 - delta) * similarity(text_emb, rep.crop_emb, mode);
}

double disclip_score(double s_plus, std::span<const double> s_minus, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::kInvalidArgument, "lambda: must lie in [0, 1]");
  check_finite("disclip_score", s_plus);
  // No distractors: the negative term is an empty mean, defined as 0.
  double mean = 0.0;
  if (!s_minus.empty()) {
    for (double s : s_minus) {
      check_finite("disclip_score", s);
      mean += s;
    }
    mean /= static_cast<double>(s_minus.size());
  }
  return lambda * s_plus - (1.0 - lambda) * mean;
}

double degeneration_penalty(const Embedding& hidden_v, std::span<const Embedding> prev_hiddens) {
  if (prev_hiddens.empty()) return 0.0;
  double worst = -1.0;
  for (const Embedding& h : prev_hiddens) {
    if (h.dim() != hidden_v.dim()) {
      fail(ErrorKind::kInvalidArgument, "language_score: hidden state dimension mismatch");
    }
    worst = std::max(worst, cosine(hidden_v, h));
  }
  return worst;
}

double language_score(double p_model, const Embedding& hidden_v,
                      std::span<const Embedding> prev_hiddens, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::kInvalidArgument, "alpha: must lie in [0, 1]");
  check_finite("language_score", p_model);
  return (1.0 - alpha) * p_model - alpha * degeneration_penalty(hidden_v, prev_hiddens);
}

double fused_score(double l_lang, double l_disclip, double beta) {
  if (!(beta >= 0.0)) fail(ErrorKind::kInvalidArgument, "beta: must be >= 0");
  check_finite("fused_score", l_lang);
  check_finite("fused_score", l_disclip);
  check_finite("fused_score", beta);
  return l_lang + beta * l_disclip;
}

std::vector<CandidateScore> score_candidates(std::span<const TokenCandidate> candidates,
                                             std::span<const Embedding> text_embs,
                                             const RegionRepresentation& target_rep,
                                             std::span<const RegionRepresentation> distractor_reps,
                                             std::span<const Embedding> prev_hiddens,
                                             const Hyperparameters& hyper) {
  hyper.validate();
  if (candidates.size() != text_embs.size()) {
    std::ostringstream msg;
    msg << "score_candidates: " << candidates.size() << " candidates but " << text_embs.size()
        << " text embeddings";
    fail(ErrorKind::kInvalidArgument, msg.str());
  }
  if (candidates.empty()) fail(ErrorKind::kInvalidArgument, "score_candidates: no candidates");
  const std::size_t n = candidates.size();

  // Per-region similarity vectors over the candidates.
  auto region_vector = [&](const RegionRepresentation& rep) {
    std::vector<double> sims(n);
    for (std::size_t i = 0; i < n; ++i) {
      sims[i] = region_similarity(text_embs[i], rep, hyper.delta, hyper.sim_mode);
    }
    if (hyper.norm_mode == NormMode::kSoftmax) sims = candidate_distribution(sims);
    return sims;
  };

  const std::vector<double> plus = region_vector(target_rep);
  std::vector<std::vector<double>> minus;
  minus.reserve(distractor_reps.size());
  for (const RegionRepresentation& rep : distractor_reps) minus.push_back(region_vector(rep));

  std::vector<CandidateScore> out(n);
  std::vector<double> s_minus(distractor_reps.size());
  for (std::size_t i = 0; i < n; ++i) {
    CandidateScore& cs = out[i];
    cs.token = candidates[i].token;
    cs.p_model = candidates[i].p;
    cs.hidden = candidates[i].hidden;
    cs.s_plus = plus[i];
    for (std::size_t d = 0; d < minus.size(); ++d) s_minus[d] = minus[d][i];
    cs.l_disclip = disclip_score(cs.s_plus, s_minus, hyper.lambda);
    if (!minus.empty()) {
      double sum = 0.0;
      for (double s : s_minus) sum += s;
      cs.s_minus_mean = sum / static_cast<double>(s_minus.size());
    }
    cs.degen_penalty = degeneration_penalty(cs.hidden, prev_hiddens);
    cs.l_lang = language_score(cs.p_model, cs.hidden, prev_hiddens, hyper.alpha);
    cs.fused = fused_score(cs.l_lang, cs.l_disclip, hyper.beta);
  }
  return out;
}

std::size_t argmax_fused(std::span<const CandidateScore> scores) {
  if (scores.empty()) fail(ErrorKind::kInvalidArgument, "argmax: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].fused > scores[best].fused ||
        (scores[i].fused == scores[best].fused && scores[i].token < scores[best].token)) {
      best = i;
    }
  }
  return best;
}

}  // namespace disclip
