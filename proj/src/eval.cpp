// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "scoring.hpp"

namespace disclip {

ListenerPrediction clip_listener(const std::string& expression, const Scene& scene,
                                 std::span<const RegionRepresentation> reps, Encoder& encoder,
                                 double delta, SimMode mode) {
  if (scene.regions.empty()) fail(ErrorKind::kInvalidArgument, "listener: scene has no regions");
  if (reps.size() != scene.regions.size()) {
    fail(ErrorKind::kInvalidArgument, "listener: one representation per region required");
  }
  const Embedding text = encoder.encode_text(expression);
  ListenerPrediction out;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const double s = region_similarity(text, reps[i], delta, mode);
    out.scores.emplace_back(scene.regions[i].id, s);
    if (s > out.scores[out.predicted_index].second) out.predicted_index = i;
  }
  out.predicted_region_id = scene.regions[out.predicted_index].id;
  return out;
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double rec_accuracy(std::span<const std::pair<BBox, BBox>> predictions, double threshold) {
  if (predictions.empty()) fail(ErrorKind::kInvalidArgument, "rec_accuracy: no predictions");
  std::size_t hits = 0;
  for (const auto& [pred, truth] : predictions) {
    if (iou(pred, truth) >= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

Tokens metric_tokens(const std::string& text) {
  std::string clean;
  clean.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    clean.push_back(static_cast<char>(std::tolower(c)));
  }
  std::istringstream in(clean);
  Tokens out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

namespace {

using NgramCounts = std::map<Tokens, int>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

struct BleuStats {
  std::vector<double> matches;
  std::vector<double> totals;
  double cand_len = 0.0;
  double ref_len = 0.0;
};

void check_order(int n) {
  if (n < 1 || n > 4) fail(ErrorKind::kInvalidArgument, "bleu: n must lie in 1..4");
}

void accumulate_bleu(BleuStats& stats, const Tokens& candidate, const std::vector<Tokens>& refs,
                     int n) {
  if (candidate.empty()) fail(ErrorKind::kInvalidArgument, "bleu: empty candidate");
  if (refs.empty()) fail(ErrorKind::kInvalidArgument, "bleu: no references");
  for (int order = 1; order <= n; ++order) {
    const NgramCounts cand = count_ngrams(candidate, order);
    NgramCounts max_ref;
    for (const Tokens& ref : refs) {
      for (const auto& [g, c] : count_ngrams(ref, order)) max_ref[g] = std::max(max_ref[g], c);
    }
    for (const auto& [g, c] : cand) {
      auto it = max_ref.find(g);
      stats.matches[order - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
      stats.totals[order - 1] += c;
    }
  }
  // Closest reference length, shorter on ties.
  const double c = static_cast<double>(candidate.size());
  double best = static_cast<double>(refs.front().size());
  for (const Tokens& ref : refs) {
    const double r = static_cast<double>(ref.size());
    if (std::abs(r - c) < std::abs(best - c) || (std::abs(r - c) == std::abs(best - c) && r < best)) {
      best = r;
    }
  }
  stats.cand_len += c;
  stats.ref_len += best;
}

double finish_bleu(const BleuStats& stats, int n) {
  double log_sum = 0.0;
  for (int order = 0; order < n; ++order) {
    if (stats.totals[order] == 0.0 || stats.matches[order] == 0.0) return 0.0;
    log_sum += std::log(stats.matches[order] / stats.totals[order]) / n;
  }
  const double bp =
      stats.cand_len > stats.ref_len ? 1.0 : std::exp(1.0 - stats.ref_len / stats.cand_len);
  return bp * std::exp(log_sum);
}

}  // namespace

double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  check_order(n);
  BleuStats stats{std::vector<double>(n), std::vector<double>(n)};
  accumulate_bleu(stats, candidate, references, n);
  return finish_bleu(stats, n);
}

double corpus_bleu(const std::vector<Tokens>& candidates,
                   const std::vector<std::vector<Tokens>>& references, int n) {
  check_order(n);
  if (candidates.empty() || candidates.size() != references.size()) {
    fail(ErrorKind::kInvalidArgument, "bleu: candidates and reference sets must pair up");
  }
  BleuStats stats{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    accumulate_bleu(stats, candidates[i], references[i], n);
  }
  return finish_bleu(stats, n);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) fail(ErrorKind::kInvalidArgument, "rouge_l: empty input");
  const std::size_t m = candidate.size();
  const std::size_t n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / m;
  const double recall = lcs / n;
  constexpr double kBeta2 = 1.2 * 1.2;
  return (1.0 + kBeta2) * precision * recall / (recall + kBeta2 * precision);
}

double rouge_l_multi(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) fail(ErrorKind::kInvalidArgument, "rouge_l: no references");
  double best = 0.0;
  for (const Tokens& ref : references) best = std::max(best, rouge_l(candidate, ref));
  return best;
}

struct CiderScorer::Impl {
  static constexpr int kMaxN = 4;
  std::map<Tokens, double> doc_freq;
  double log_docs = 0.0;

  // Per order: n-gram -> tf-idf weight, plus the vector norm.
  struct Vec {
    std::map<Tokens, double> weights;
    double norm = 0.0;
  };

  Vec vectorize(const Tokens& tokens, int n) const {
    Vec v;
    for (const auto& [g, tf] : count_ngrams(tokens, n)) {
      auto it = doc_freq.find(g);
      const double df = it == doc_freq.end() ? 0.0 : it->second;
      const double w = tf * (log_docs - std::log(std::max(1.0, df)));
      v.weights[g] = w;
      v.norm += w * w;
    }
    v.norm = std::sqrt(v.norm);
    return v;
  }
};

CiderScorer::CiderScorer(const std::vector<std::vector<Tokens>>& corpus) {
  if (corpus.empty()) fail(ErrorKind::kInvalidArgument, "cider: empty corpus");
  auto impl = std::make_shared<Impl>();
  for (const std::vector<Tokens>& refs : corpus) {
    std::set<Tokens> seen;
    for (const Tokens& ref : refs) {
      for (int n = 1; n <= Impl::kMaxN; ++n) {
        for (const auto& [g, _] : count_ngrams(ref, n)) seen.insert(g);
      }
    }
    for (const Tokens& g : seen) impl->doc_freq[g] += 1.0;
  }
  impl->log_docs = std::log(static_cast<double>(corpus.size()));
  impl_ = std::move(impl);
}

double CiderScorer::score(const Tokens& candidate, const std::vector<Tokens>& references) const {
  if (references.empty()) fail(ErrorKind::kInvalidArgument, "cider: no references");
  double total = 0.0;
  for (int n = 1; n <= Impl::kMaxN; ++n) {
    const Impl::Vec hyp = impl_->vectorize(candidate, n);
    double sum = 0.0;
    for (const Tokens& ref : references) {
      const Impl::Vec rv = impl_->vectorize(ref, n);
      if (hyp.norm == 0.0 || rv.norm == 0.0) continue;
      double dot = 0.0;
      for (const auto& [g, w] : hyp.weights) {
        auto it = rv.weights.find(g);
        if (it != rv.weights.end()) dot += w * it->second;
      }
      sum += dot / (hyp.norm * rv.norm);
    }
    total += sum / static_cast<double>(references.size());
  }
  return 10.0 * total / Impl::kMaxN;
}

double cider(const std::vector<Tokens>& candidates,
             const std::vector<std::vector<Tokens>>& references) {
  if (candidates.empty() || candidates.size() != references.size()) {
    fail(ErrorKind::kInvalidArgument, "cider: candidates and reference sets must pair up");
  }
  const CiderScorer scorer(references);
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += scorer.score(candidates[i], references[i]);
  return total / static_cast<double>(candidates.size());
}

DiversityStats diversity_stats(const std::vector<std::string>& expressions,
                               const std::optional<std::vector<std::string>>& reference,
                               std::size_t top_n) {
  DiversityStats out;
  std::map<std::string, std::size_t> counts;
  for (const std::string& e : expressions) {
    for (const std::string& w : metric_tokens(e)) ++counts[w];
  }
  out.vocab_size = counts.size();
  out.top_words.assign(counts.begin(), counts.end());
  std::stable_sort(out.top_words.begin(), out.top_words.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.top_words.size() > top_n) out.top_words.resize(top_n);

  if (reference) {
    std::set<Tokens> known;
    for (const std::string& r : *reference) known.insert(metric_tokens(r));
    std::size_t novel = 0;
    for (const std::string& e : expressions) novel += known.contains(metric_tokens(e)) ? 0 : 1;
    out.novel_fraction =
        expressions.empty() ? 0.0 : static_cast<double>(novel) / static_cast<double>(expressions.size());
  }
  return out;
}

}  // namespace disclip
