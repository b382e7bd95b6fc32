// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Listener-based comprehension accuracy and reference-based language metrics.

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "backends.hpp"
#include "core.hpp"

namespace disclip {

using Tokens = std::vector<std::string>;

struct ListenerPrediction {
  std::string predicted_region_id;
  std::size_t predicted_index = 0;
  std::vector<std::pair<std::string, double>> scores;
};

// Zero-shot listener: scores every region by region_similarity with the
// expression's text embedding and picks the argmax, ties to scene order.
ListenerPrediction clip_listener(const std::string& expression, const Scene& scene,
                                 std::span<const RegionRepresentation> reps, Encoder& encoder,
                                 double delta, SimMode mode = SimMode::kCosine);

double iou(const BBox& a, const BBox& b);

// Fraction of (predicted, ground truth) pairs with IoU >= threshold.
double rec_accuracy(std::span<const std::pair<BBox, BBox>> predictions, double threshold = 0.5);

// Lowercase, strip punctuation, split on whitespace.
Tokens metric_tokens(const std::string& text);

// Sentence BLEU with uniform weights over 1..n-grams, clipped counts and the
// closest-reference-length brevity penalty. No smoothing.
double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n);

// Corpus BLEU: clipped counts and lengths summed over all segments first.
double corpus_bleu(const std::vector<Tokens>& candidates,
                   const std::vector<std::vector<Tokens>>& references, int n);

// LCS F-measure with recall weight beta = 1.2.
double rouge_l(const Tokens& candidate, const Tokens& reference);
// Max over references.
double rouge_l_multi(const Tokens& candidate, const std::vector<Tokens>& references);

// TF-IDF weighted n-gram cosine averaged over n = 1..4, times 10. Document
// frequencies count the reference sets in `corpus` containing the n-gram.
class CiderScorer {
 public:
  explicit CiderScorer(const std::vector<std::vector<Tokens>>& corpus);

  double score(const Tokens& candidate, const std::vector<Tokens>& references) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

// Mean per-candidate CIDEr with the references themselves as the corpus.
double cider(const std::vector<Tokens>& candidates,
             const std::vector<std::vector<Tokens>>& references);

struct DiversityStats {
  std::size_t vocab_size = 0;
  double novel_fraction = 1.0;
  std::vector<std::pair<std::string, std::size_t>> top_words;
};

// Novelty is judged on the normalized token sequence against `reference`.
DiversityStats diversity_stats(const std::vector<std::string>& expressions,
                               const std::optional<std::vector<std::string>>& reference = {},
                               std::size_t top_n = 10);

}  // namespace disclip
