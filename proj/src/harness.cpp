// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "eval.hpp"

namespace disclip {

using nlohmann::json;

void EngineConfig::validate() const {
  hyper.validate();
  imaging.validate();
  if (!(listener_delta >= 0.0 && listener_delta <= 1.0)) {
    fail(ErrorKind::kConfig, "listener_delta: must lie in [0, 1]");
  }
  if (workers < 1) fail(ErrorKind::kConfig, "workers: must be at least 1");
}

void SweepGrid::validate() const {
  auto check = [](const std::vector<double>& values, const char* name) {
    if (values.empty()) fail(ErrorKind::kConfig, std::string(name) + ": grid needs at least one value");
    for (double v : values) {
      if (!(v >= 0.0 && v <= 1.0)) {
        fail(ErrorKind::kConfig, std::string(name) + ": grid value " + std::to_string(v) +
                                     " outside [0, 1]");
      }
    }
  };
  check(delta_values, "delta");
  check(lambda_values, "lambda");
  if (sample_count < 1) fail(ErrorKind::kConfig, "sample_count: must be at least 1");
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kBackend: return "backend";
    case ErrorKind::kProtocol: return "protocol";
  }
  return "internal";
}

namespace {

json error_json(const std::string& scene_id, const std::string& kind, const std::string& message) {
  return {{"scene_id", scene_id}, {"error", {{"kind", kind}, {"message", message}}}};
}

// Backends are built once per worker and reused across calls.
class WorkerPool {
 public:
  WorkerPool(const BackendFactory& factory, int workers) {
    for (int i = 0; i < workers; ++i) backends_.push_back(factory());
  }

  // fn reports per-item failures itself; anything it throws aborts the run.
  void run(std::size_t n, const std::function<void(std::size_t, Backend&)>& fn) {
    const std::size_t threads = std::min(backends_.size(), n);
    if (threads <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i, backends_.front());
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = next++; i < n; i = next++) fn(i, backends_[t]);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first_error) first_error = std::current_exception();
          next = n;
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

 private:
  std::vector<Backend> backends_;
};

Image scene_image(const io::SceneEntry& entry) {
  return entry.image ? *entry.image : io::load_scene_image(*entry.scene);
}

// Runs fn and turns any failure into an error record for the scene.
template <typename Fn>
json guarded(const std::string& scene_id, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return error_json(scene_id, kind_name(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_json(scene_id, "internal", e.what());
  }
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

json error_record(const std::string& scene_id, const Error& error) {
  return error_json(scene_id, kind_name(error.kind()), error.what());
}

json trace_to_json(const std::vector<StepTrace>& trace) {
  json steps = json::array();
  for (const StepTrace& s : trace) {
    steps.push_back({{"candidates", s.candidates},
                     {"p_model", s.p_model},
                     {"degen_penalty", s.degen_penalty},
                     {"s_plus", s.s_plus},
                     {"s_minus_mean", s.s_minus_mean},
                     {"l_disclip", s.l_disclip},
                     {"l_lang", s.l_lang},
                     {"fused", s.fused},
                     {"chosen", s.chosen}});
  }
  return steps;
}

RunSummary run_generate(const std::vector<io::SceneEntry>& scenes, const BackendFactory& factory,
                        const EngineConfig& cfg, bool with_trace, std::ostream& out) {
  cfg.validate();
  std::vector<json> records(scenes.size());
  WorkerPool pool(factory, cfg.workers);
  pool.run(scenes.size(), [&](std::size_t i, Backend& backend) {
    const io::SceneEntry& entry = scenes[i];
    if (!entry.scene) {
      records[i] = error_json(entry.id, "invalid_scene", entry.error);
      return;
    }
    records[i] = guarded(entry.id, [&] {
      const SceneEmbeddings embs = precompute_scene_embeddings(
          *entry.scene, scene_image(entry), *backend.encoder, cfg.imaging, cfg.crop_style);
      const GenerationResult r = generate(embs, *backend.lm, *backend.encoder, cfg.hyper, cfg.decode);
      json rec = {{"scene_id", entry.id},
                  {"expression", r.expression},
                  {"stop_reason", to_string(r.stop_reason)},
                  {"tokens", r.tokens}};
      if (with_trace) rec["trace"] = trace_to_json(r.trace);
      return rec;
    });
  });
  RunSummary summary;
  for (const json& rec : records) {
    out << rec.dump() << '\n';
    ++summary.processed;
    if (rec.contains("error")) ++summary.failed;
  }
  out.flush();
  return summary;
}

json EvaluationSummary::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json words = json::array();
  for (const auto& [w, c] : top_words) words.push_back({w, c});
  return {{"evaluated", evaluated},
          {"failed", failed},
          {"metric_examples", metric_examples},
          {"listener_accuracy", opt(listener_accuracy)},
          {"bleu1", opt(bleu1)},
          {"bleu4", opt(bleu4)},
          {"rouge_l", opt(rouge_l)},
          {"cider", opt(cider)},
          {"vocab_size", vocab_size},
          {"novel_fraction", novel_fraction},
          {"top_words", words}};
}

EvaluationSummary run_evaluate(const std::vector<json>& expressions,
                               const std::vector<io::SceneEntry>& scenes,
                               const BackendFactory& factory, const EngineConfig& cfg,
                               std::ostream& out) {
  cfg.validate();
  if (expressions.empty()) fail(ErrorKind::kInvalidArgument, "evaluate: no expressions to evaluate");
  std::map<std::string, const io::SceneEntry*> by_id;
  for (const io::SceneEntry& e : scenes) by_id.emplace(e.id, &e);

  struct Outcome {
    json record;
    std::optional<std::pair<BBox, BBox>> boxes;
    const Scene* scene = nullptr;
    std::string expression;
  };
  std::vector<Outcome> outcomes(expressions.size());
  WorkerPool pool(factory, cfg.workers);
  pool.run(expressions.size(), [&](std::size_t i, Backend& backend) {
    const json& rec = expressions[i];
    Outcome& o = outcomes[i];
    std::string id;
    if (rec.is_object() && rec.contains("scene_id") && rec["scene_id"].is_string()) {
      id = rec["scene_id"].get<std::string>();
    } else {
      o.record = error_json("", "join", "record " + std::to_string(i) + " has no string scene_id");
      return;
    }
    if (rec.contains("error")) {
      o.record = error_json(id, "join", "generation failed for this scene");
      return;
    }
    if (!rec.contains("expression") || !rec["expression"].is_string()) {
      o.record = error_json(id, "join", "record has no string expression");
      return;
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      o.record = error_json(id, "join", "no scene with id '" + id + "'");
      return;
    }
    const io::SceneEntry& entry = *it->second;
    if (!entry.scene) {
      o.record = error_json(id, "invalid_scene", entry.error);
      return;
    }
    o.record = guarded(id, [&] {
      const Scene& scene = *entry.scene;
      const std::string expression = rec["expression"].get<std::string>();
      const SceneEmbeddings embs = precompute_scene_embeddings(scene, scene_image(entry),
                                                               *backend.encoder, cfg.imaging);
      const ListenerPrediction p = clip_listener(expression, scene, embs.all, *backend.encoder,
                                                 cfg.listener_delta, cfg.hyper.sim_mode);
      const BBox predicted = scene.regions[p.predicted_index].bbox;
      const BBox truth = scene.target().bbox;
      const double overlap = iou(predicted, truth);
      o.boxes = std::make_pair(predicted, truth);
      o.scene = &scene;
      o.expression = expression;
      return json{{"scene_id", id},
                  {"expression", expression},
                  {"predicted_region_id", p.predicted_region_id},
                  {"target_id", scene.target_id},
                  {"iou", overlap},
                  {"correct", overlap >= 0.5}};
    });
  });

  EvaluationSummary summary;
  std::vector<std::pair<BBox, BBox>> pairs;
  std::vector<std::string> generated;
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  std::vector<std::string> reference_texts;
  for (const Outcome& o : outcomes) {
    out << o.record.dump() << '\n';
    if (!o.boxes) {
      ++summary.failed;
      continue;
    }
    ++summary.evaluated;
    pairs.push_back(*o.boxes);
    generated.push_back(o.expression);
    Tokens cand = metric_tokens(o.expression);
    if (!o.scene->ground_truth.empty() && !cand.empty()) {
      cands.push_back(std::move(cand));
      refs.emplace_back();
      for (const std::string& gt : o.scene->ground_truth) {
        refs.back().push_back(metric_tokens(gt));
        reference_texts.push_back(gt);
      }
    }
  }
  if (!pairs.empty()) summary.listener_accuracy = rec_accuracy(pairs);
  summary.metric_examples = cands.size();
  if (!cands.empty()) {
    summary.bleu1 = corpus_bleu(cands, refs, 1);
    summary.bleu4 = corpus_bleu(cands, refs, 4);
    double total = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) total += rouge_l_multi(cands[i], refs[i]);
    summary.rouge_l = total / static_cast<double>(cands.size());
    summary.cider = cider(cands, refs);
  }
  const DiversityStats d = diversity_stats(
      generated, reference_texts.empty() ? std::nullopt
                                         : std::optional<std::vector<std::string>>(reference_texts));
  summary.vocab_size = d.vocab_size;
  summary.novel_fraction = d.novel_fraction;
  summary.top_words = d.top_words;
  out << json{{"summary", summary.to_json()}}.dump() << '\n';
  out.flush();
  return summary;
}

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  if (count >= total) return idx;
  // Partial Fisher-Yates with modulo draws, identical across standard libraries.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

struct Prepared {
  const Scene* scene = nullptr;
  SceneEmbeddings plain;
  std::optional<SceneEmbeddings> mirror;
  std::string error;
};

std::vector<Prepared> prepare(const std::vector<io::SceneEntry>& scenes,
                              const std::vector<std::size_t>& indices, WorkerPool& pool,
                              const EngineConfig& cfg, bool with_mirror) {
  for (const io::SceneEntry& e : scenes) {
    if (!e.scene) fail(ErrorKind::kValidation, "scene '" + e.id + "': " + e.error);
  }
  std::vector<Prepared> out(indices.size());
  pool.run(indices.size(), [&](std::size_t i, Backend& backend) {
    const io::SceneEntry& entry = scenes[indices[i]];
    Prepared& p = out[i];
    p.scene = &*entry.scene;
    try {
      const Image image = scene_image(entry);
      p.plain = precompute_scene_embeddings(*p.scene, image, *backend.encoder, cfg.imaging);
      if (with_mirror) {
        p.mirror = precompute_scene_embeddings(*p.scene, image, *backend.encoder, cfg.imaging,
                                               CropStyle::kMirror);
      }
    } catch (const std::exception& e) {
      p.error = "scene '" + entry.id + "': " + e.what();
    }
  });
  return out;
}

struct CellResult {
  std::optional<double> accuracy;
  std::string error;
};

// Generates for every prepared scene and scores with the plain-view listener.
CellResult evaluate_cell(const std::vector<Prepared>& prepared, WorkerPool& pool,
                         const EngineConfig& cfg, const Hyperparameters& hyper, bool mirror) {
  std::vector<std::pair<BBox, BBox>> pairs(prepared.size());
  std::vector<std::string> errors(prepared.size());
  pool.run(prepared.size(), [&](std::size_t i, Backend& backend) {
    const Prepared& p = prepared[i];
    if (!p.error.empty()) {
      errors[i] = p.error;
      return;
    }
    try {
      const SceneEmbeddings& embs = mirror ? *p.mirror : p.plain;
      const GenerationResult r = generate(embs, *backend.lm, *backend.encoder, hyper, cfg.decode);
      const ListenerPrediction pred = clip_listener(r.expression, *p.scene, p.plain.all,
                                                    *backend.encoder, cfg.listener_delta,
                                                    hyper.sim_mode);
      pairs[i] = {p.scene->regions[pred.predicted_index].bbox, p.scene->target().bbox};
    } catch (const std::exception& e) {
      errors[i] = "scene '" + p.scene->id + "': " + e.what();
    }
  });
  for (const std::string& e : errors) {
    if (!e.empty()) return {std::nullopt, e};
  }
  return {rec_accuracy(pairs), {}};
}

}  // namespace

std::vector<SweepCell> run_sweep(const std::vector<io::SceneEntry>& scenes,
                                 const BackendFactory& factory, const EngineConfig& cfg,
                                 const SweepGrid& grid, std::uint64_t seed, std::ostream& csv) {
  grid.validate();
  cfg.validate();
  if (scenes.empty()) fail(ErrorKind::kInvalidArgument, "sweep: no scenes");
  WorkerPool pool(factory, cfg.workers);
  const auto indices = sample_indices(scenes.size(), grid.sample_count, seed);
  const auto prepared = prepare(scenes, indices, pool, cfg, cfg.crop_style == CropStyle::kMirror);

  csv << "delta,lambda,accuracy,n\n";
  std::vector<SweepCell> cells;
  for (double delta : grid.delta_values) {
    for (double lambda : grid.lambda_values) {
      Hyperparameters hyper = cfg.hyper;
      hyper.delta = delta;
      hyper.lambda = lambda;
      const CellResult r = evaluate_cell(prepared, pool, cfg, hyper,
                                         cfg.crop_style == CropStyle::kMirror);
      SweepCell cell{delta, lambda, r.accuracy, prepared.size()};
      csv << format_number(delta) << ',' << format_number(lambda) << ','
          << (r.accuracy ? format_number(*r.accuracy) : std::string("failed")) << ',' << cell.n
          << '\n';
      cells.push_back(cell);
    }
  }
  csv.flush();
  return cells;
}

std::vector<SweepCell> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "delta,lambda,accuracy,n") {
    fail(ErrorKind::kParse, path + ": expected header 'delta,lambda,accuracy,n'");
  }
  auto number = [&](const std::string& text, std::size_t lineno) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      fail(ErrorKind::kParse, path + ":" + std::to_string(lineno) + ": bad number '" + text + "'");
    }
    return v;
  };
  std::vector<SweepCell> cells;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string part; std::getline(ss, part, ',');) f.push_back(part);
    if (f.size() != 4) fail(ErrorKind::kParse, path + ":" + std::to_string(lineno) + ": expected 4 fields");
    SweepCell cell{number(f[0], lineno), number(f[1], lineno), std::nullopt,
                   static_cast<std::size_t>(number(f[3], lineno))};
    if (f[2] != "failed") cell.accuracy = number(f[2], lineno);
    cells.push_back(cell);
  }
  return cells;
}

SweepCell best_sweep_cell(const std::vector<SweepCell>& cells) {
  const SweepCell* best = nullptr;
  for (const SweepCell& c : cells) {
    if (c.accuracy && (!best || *c.accuracy > *best->accuracy)) best = &c;
  }
  if (!best) fail(ErrorKind::kInvalidArgument, "sweep: no successful cell");
  return *best;
}

std::vector<AblationRow> run_ablation(
    const std::vector<std::pair<std::string, std::vector<io::SceneEntry>>>& scene_sets,
    const BackendFactory& factory, const EngineConfig& cfg, std::ostream& csv) {
  cfg.validate();
  if (scene_sets.empty()) fail(ErrorKind::kInvalidArgument, "ablation: no scene sets");
  WorkerPool pool(factory, cfg.workers);

  struct Mode {
    const char* name;
    double delta;
    bool mirror;
  };
  const Mode modes[] = {{"crop-blur", cfg.hyper.delta, false},
                        {"blur", 1.0, false},
                        {"mirror", 0.0, true},
                        {"crop", 0.0, false}};
  std::vector<AblationRow> rows;
  for (const Mode& m : modes) rows.push_back({m.name, {}});

  csv << "representation";
  for (const auto& [name, entries] : scene_sets) csv << ',' << name;
  csv << '\n';
  for (const auto& [name, entries] : scene_sets) {
    if (entries.empty()) fail(ErrorKind::kInvalidArgument, "ablation: scene set '" + name + "' is empty");
    std::vector<std::size_t> all(entries.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto prepared = prepare(entries, all, pool, cfg, true);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Hyperparameters hyper = cfg.hyper;
      hyper.delta = modes[r].delta;
      rows[r].accuracy.push_back(evaluate_cell(prepared, pool, cfg, hyper, modes[r].mirror).accuracy);
    }
  }
  for (const AblationRow& row : rows) {
    csv << row.representation;
    for (const auto& a : row.accuracy) csv << ',' << (a ? format_number(*a) : std::string("failed"));
    csv << '\n';
  }
  csv.flush();
  return rows;
}

}  // namespace disclip
