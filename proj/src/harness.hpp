// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Batch runs over scene sets: generation, evaluation, the delta/lambda sweep
// and the region-representation ablation. Scenes are spread over workers,
// each holding its own backend, and results are written in input order.

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "core.hpp"
#include "decoding.hpp"
#include "imaging.hpp"
#include "io.hpp"
#include "json.hpp"

namespace disclip {

struct EngineConfig {
  Hyperparameters hyper;
  ImagingConfig imaging;
  DecodeSettings decode;
  double listener_delta = 0.5;  // delta of the evaluating listener
  int workers = 1;
  CropStyle crop_style = CropStyle::kPlain;

  void validate() const;
};

using BackendFactory = std::function<Backend()>;

struct RunSummary {
  std::size_t processed = 0;
  std::size_t failed = 0;
};

nlohmann::json trace_to_json(const std::vector<StepTrace>& trace);
nlohmann::json error_record(const std::string& scene_id, const Error& error);
const char* kind_name(ErrorKind kind);

// One JSON line per scene: {scene_id, expression, stop_reason, tokens[, trace]}
// or {scene_id, error: {kind, message}}.
RunSummary run_generate(const std::vector<io::SceneEntry>& scenes, const BackendFactory& factory,
                        const EngineConfig& cfg, bool with_trace, std::ostream& out);

struct EvaluationSummary {
  std::size_t evaluated = 0;
  std::size_t failed = 0;
  std::optional<double> listener_accuracy;  // unset when nothing could be evaluated
  // Language metrics over the examples with ground truth and a non-empty
  // expression; unset when there are none.
  std::size_t metric_examples = 0;
  std::optional<double> bleu1, bleu4, rouge_l, cider;
  std::size_t vocab_size = 0;
  double novel_fraction = 1.0;
  std::vector<std::pair<std::string, std::size_t>> top_words;

  nlohmann::json to_json() const;
};

// Joins expression records to scenes by scene_id. Emits one record per
// expression and a final {"summary": ...} line. Throws kInvalidArgument when
// there is nothing to evaluate.
EvaluationSummary run_evaluate(const std::vector<nlohmann::json>& expressions,
                               const std::vector<io::SceneEntry>& scenes,
                               const BackendFactory& factory, const EngineConfig& cfg,
                               std::ostream& out);

struct SweepGrid {
  std::vector<double> delta_values;
  std::vector<double> lambda_values;
  std::size_t sample_count = 200;

  void validate() const;
};

struct SweepCell {
  double delta = 0.0;
  double lambda = 0.0;
  std::optional<double> accuracy;  // unset when the cell failed
  std::size_t n = 0;
};

// Seeded subset of min(sample_count, scenes) scenes kept in input order.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count, std::uint64_t seed);

// CSV "delta,lambda,accuracy,n", delta outer, lambda inner; a failed cell
// reports "failed" as its accuracy. Every scene must be valid.
std::vector<SweepCell> run_sweep(const std::vector<io::SceneEntry>& scenes,
                                 const BackendFactory& factory, const EngineConfig& cfg,
                                 const SweepGrid& grid, std::uint64_t seed, std::ostream& csv);

std::vector<SweepCell> read_sweep_csv(const std::string& path);
// Highest accuracy, first in grid order on ties. Throws if every cell failed.
SweepCell best_sweep_cell(const std::vector<SweepCell>& cells);

struct AblationRow {
  std::string representation;  // crop-blur, blur, mirror, crop
  std::vector<std::optional<double>> accuracy;  // one per scene set
};

// Rows are representation modes, columns scene sets, as CSV
// "representation,<set>,...". The listener always sees plain crop/blur views.
std::vector<AblationRow> run_ablation(
    const std::vector<std::pair<std::string, std::vector<io::SceneEntry>>>& scene_sets,
    const BackendFactory& factory, const EngineConfig& cfg, std::ostream& csv);

}  // namespace disclip
