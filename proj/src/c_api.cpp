// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "disclip/disclip.h"

#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <new>
#include <optional>
#include <string>

#include "harness.hpp"
#include "io.hpp"
#include "protocol.hpp"
#include "toy_world.hpp"

struct disclip_engine {
  disclip::BackendFactory factory;
  disclip::EngineConfig config;
};

struct disclip_result {
  disclip::GenerationResult result;
  std::string stop_reason;
  std::string trace_json;
};

namespace {

using disclip::ErrorKind;
using disclip::fail;

thread_local std::string last_error;

disclip_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return DISCLIP_ERR_INVALID_ARGUMENT;
    case ErrorKind::kConfig: return DISCLIP_ERR_CONFIG;
    case ErrorKind::kValidation: return DISCLIP_ERR_VALIDATION;
    case ErrorKind::kIo: return DISCLIP_ERR_IO;
    case ErrorKind::kParse: return DISCLIP_ERR_PARSE;
    case ErrorKind::kBackend: return DISCLIP_ERR_BACKEND;
    case ErrorKind::kProtocol: return DISCLIP_ERR_PROTOCOL;
  }
  return DISCLIP_ERR_INTERNAL;
}

// Runs body, mapping exceptions to status codes and recording the message.
template <typename Fn>
disclip_status guard(Fn&& body) {
  last_error.clear();
  try {
    return body();
  } catch (const disclip::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return DISCLIP_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return DISCLIP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return DISCLIP_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return DISCLIP_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) fail(ErrorKind::kInvalidArgument, std::string(name) + " must not be NULL");
}

disclip::ToyWorldSpec toy_spec(const char* world_path) {
  if (!world_path) {
    auto world = std::make_shared<const disclip::ToyWorld>(disclip::ToyWorld::standard());
    return {world, disclip::standard_lm_table(*world)};
  }
  return disclip::load_toy_world(world_path);
}

// Writes to a file, or standard output for "-".
class Output {
 public:
  explicit Output(const char* path) {
    require(path, "out_path");
    if (std::string(path) == "-") return;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) fail(ErrorKind::kIo, std::string("cannot write '") + path + "'");
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  void close(const char* path) {
    stream().flush();
    if (!stream()) fail(ErrorKind::kIo, std::string("write failed: '") + path + "'");
  }

 private:
  std::ofstream file_;
};

std::vector<disclip::io::SceneEntry> load(const char* path) {
  require(path, "scenes_path");
  return disclip::io::load_scenes(path);
}

void apply(disclip_engine* engine, const std::function<void(disclip::EngineConfig&)>& change) {
  require(engine, "engine");
  disclip::EngineConfig next = engine->config;
  change(next);
  next.validate();
  engine->config = std::move(next);
}

}  // namespace

extern "C" {

const char* disclip_version(void) { return "0.1.0"; }

const char* disclip_last_error(void) { return last_error.c_str(); }

const char* disclip_status_name(disclip_status status) {
  switch (status) {
    case DISCLIP_OK: return "ok";
    case DISCLIP_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DISCLIP_ERR_CONFIG: return "config";
    case DISCLIP_ERR_VALIDATION: return "validation";
    case DISCLIP_ERR_IO: return "io";
    case DISCLIP_ERR_PARSE: return "parse";
    case DISCLIP_ERR_BACKEND: return "backend";
    case DISCLIP_ERR_PROTOCOL: return "protocol";
    case DISCLIP_ERR_PARTIAL: return "partial";
    case DISCLIP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

disclip_status disclip_engine_create_toy(const char* world_path, disclip_engine** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    const disclip::ToyWorldSpec spec = toy_spec(world_path);
    auto engine = std::make_unique<disclip_engine>();
    engine->factory = [spec] { return disclip::make_toy_backend(spec.world, spec.table); };
    *out = engine.release();
    return DISCLIP_OK;
  });
}

disclip_status disclip_engine_connect(const char* endpoint, disclip_engine** out) {
  return guard([&] {
    require(out, "out");
    require(endpoint, "endpoint");
    *out = nullptr;
    std::string ep(endpoint);
    // Fail fast when the server is unreachable or speaks another protocol;
    // the probe connection then serves the first worker.
    struct Pending {
      std::mutex mutex;
      std::optional<disclip::Backend> backend;
    };
    auto pending = std::make_shared<Pending>();
    pending->backend = disclip::protocol::connect_remote_backend(ep);
    auto engine = std::make_unique<disclip_engine>();
    engine->factory = [ep, pending] {
      {
        std::lock_guard lock(pending->mutex);
        if (pending->backend) {
          disclip::Backend b = std::move(*pending->backend);
          pending->backend.reset();
          return b;
        }
      }
      return disclip::protocol::connect_remote_backend(ep);
    };
    *out = engine.release();
    return DISCLIP_OK;
  });
}

void disclip_engine_free(disclip_engine* engine) { delete engine; }

disclip_status disclip_engine_set_real(disclip_engine* engine, const char* key, double value) {
  return guard([&] {
    require(key, "key");
    const std::string k(key);
    apply(engine, [&](disclip::EngineConfig& c) {
      if (k == "lambda") c.hyper.lambda = value;
      else if (k == "delta") c.hyper.delta = value;
      else if (k == "beta") c.hyper.beta = value;
      else if (k == "alpha") c.hyper.alpha = value;
      else if (k == "listener_delta") c.listener_delta = value;
      else if (k == "blur_sigma") c.imaging.blur_sigma = value;
      else fail(ErrorKind::kConfig, "unknown real setting '" + k + "'");
    });
    return DISCLIP_OK;
  });
}

disclip_status disclip_engine_set_int(disclip_engine* engine, const char* key, int64_t value) {
  return guard([&] {
    require(key, "key");
    const std::string k(key);
    if (value < INT32_MIN || value > INT32_MAX) fail(ErrorKind::kConfig, k + ": value out of range");
    const int v = static_cast<int>(value);
    apply(engine, [&](disclip::EngineConfig& c) {
      if (k == "k") c.hyper.k = v;
      else if (k == "max_tokens") c.hyper.max_tokens = v;
      else if (k == "workers") c.workers = v;
      else if (k == "encoder_resolution") c.imaging.encoder_resolution = v;
      else if (k == "strip_prompt_for_clip") c.decode.strip_prompt_for_clip = v != 0;
      else fail(ErrorKind::kConfig, "unknown integer setting '" + k + "'");
    });
    return DISCLIP_OK;
  });
}

disclip_status disclip_engine_set_string(disclip_engine* engine, const char* key, const char* value) {
  return guard([&] {
    require(key, "key");
    require(value, "value");
    const std::string k(key), v(value);
    apply(engine, [&](disclip::EngineConfig& c) {
      if (k == "prompt") {
        c.decode.prompt = v;
      } else if (k == "norm_mode") {
        c.hyper.norm_mode = disclip::parse_norm_mode(v);
      } else if (k == "sim_mode") {
        c.hyper.sim_mode = disclip::parse_sim_mode(v);
      } else if (k == "crop_style") {
        if (v == "plain") c.crop_style = disclip::CropStyle::kPlain;
        else if (v == "mirror") c.crop_style = disclip::CropStyle::kMirror;
        else fail(ErrorKind::kConfig, "crop_style: expected 'plain' or 'mirror', got '" + v + "'");
      } else {
        fail(ErrorKind::kConfig, "unknown string setting '" + k + "'");
      }
    });
    return DISCLIP_OK;
  });
}

disclip_status disclip_engine_set_stop_tokens(disclip_engine* engine, const int32_t* tokens,
                                              size_t count) {
  return guard([&] {
    apply(engine, [&](disclip::EngineConfig& c) {
      if (!tokens) {
        c.hyper.stop_tokens.reset();
        return;
      }
      c.hyper.stop_tokens = std::set<disclip::TokenId>(tokens, tokens + count);
    });
    return DISCLIP_OK;
  });
}

disclip_status disclip_generate(disclip_engine* engine, const char* scene_json, disclip_result** out) {
  return guard([&] {
    require(engine, "engine");
    require(scene_json, "scene_json");
    require(out, "out");
    *out = nullptr;
    const disclip::Scene scene =
        disclip::io::scene_from_json(nlohmann::json::parse(scene_json), "", "scene");
    const disclip::Image image = disclip::io::load_scene_image(scene);
    disclip::Backend backend = engine->factory();
    const disclip::EngineConfig& cfg = engine->config;
    const auto embs = disclip::precompute_scene_embeddings(scene, image, *backend.encoder,
                                                           cfg.imaging, cfg.crop_style);
    auto result = std::make_unique<disclip_result>();
    result->result = disclip::generate(embs, *backend.lm, *backend.encoder, cfg.hyper, cfg.decode);
    result->stop_reason = disclip::to_string(result->result.stop_reason);
    result->trace_json = disclip::trace_to_json(result->result.trace).dump();
    *out = result.release();
    return DISCLIP_OK;
  });
}

const char* disclip_result_expression(const disclip_result* result) {
  return result ? result->result.expression.c_str() : nullptr;
}

const char* disclip_result_stop_reason(const disclip_result* result) {
  return result ? result->stop_reason.c_str() : nullptr;
}

size_t disclip_result_token_count(const disclip_result* result) {
  return result ? result->result.tokens.size() : 0;
}

const int32_t* disclip_result_tokens(const disclip_result* result) {
  return result ? result->result.tokens.data() : nullptr;
}

const char* disclip_result_trace_json(const disclip_result* result) {
  return result ? result->trace_json.c_str() : nullptr;
}

void disclip_result_free(disclip_result* result) { delete result; }

disclip_status disclip_run_generate(disclip_engine* engine, const char* scenes_path, const char* out_path,
                                    int with_trace, disclip_run_summary* summary) {
  return guard([&] {
    require(engine, "engine");
    const auto scenes = load(scenes_path);
    Output out(out_path);
    const auto s = disclip::run_generate(scenes, engine->factory, engine->config, with_trace != 0,
                                         out.stream());
    out.close(out_path);
    if (summary) *summary = {s.processed, s.failed};
    if (s.failed > 0) last_error = std::to_string(s.failed) + " of " + std::to_string(s.processed) +
                                   " scenes failed";
    return s.failed > 0 ? DISCLIP_ERR_PARTIAL : DISCLIP_OK;
  });
}

disclip_status disclip_run_evaluate(disclip_engine* engine, const char* expressions_path,
                                    const char* scenes_path, const char* out_path,
                                    disclip_run_summary* summary) {
  return guard([&] {
    require(engine, "engine");
    require(expressions_path, "expressions_path");
    const auto expressions = disclip::io::read_jsonl(expressions_path);
    const auto scenes = load(scenes_path);
    Output out(out_path);
    const auto s = disclip::run_evaluate(expressions, scenes, engine->factory, engine->config,
                                         out.stream());
    out.close(out_path);
    if (summary) *summary = {s.evaluated + s.failed, s.failed};
    if (s.failed > 0) last_error = std::to_string(s.failed) + " expressions could not be evaluated";
    return s.failed > 0 ? DISCLIP_ERR_PARTIAL : DISCLIP_OK;
  });
}

disclip_status disclip_run_sweep(disclip_engine* engine, const char* scenes_path, const double* deltas,
                                 size_t delta_count, const double* lambdas, size_t lambda_count,
                                 size_t sample_count, uint64_t seed, const char* out_path,
                                 disclip_run_summary* summary) {
  return guard([&] {
    require(engine, "engine");
    if (delta_count > 0) require(deltas, "deltas");
    if (lambda_count > 0) require(lambdas, "lambdas");
    disclip::SweepGrid grid{std::vector<double>(deltas, deltas + delta_count),
                            std::vector<double>(lambdas, lambdas + lambda_count), sample_count};
    grid.validate();
    const auto scenes = load(scenes_path);
    Output out(out_path);
    const auto cells = disclip::run_sweep(scenes, engine->factory, engine->config, grid, seed,
                                          out.stream());
    out.close(out_path);
    std::size_t failed = 0;
    for (const auto& c : cells) failed += c.accuracy ? 0 : 1;
    if (summary) *summary = {cells.size(), failed};
    if (failed > 0) last_error = std::to_string(failed) + " sweep cells failed";
    return failed > 0 ? DISCLIP_ERR_PARTIAL : DISCLIP_OK;
  });
}

disclip_status disclip_sweep_best(const char* csv_path, double* delta, double* lambda, double* accuracy) {
  return guard([&] {
    require(csv_path, "csv_path");
    const disclip::SweepCell best = disclip::best_sweep_cell(disclip::read_sweep_csv(csv_path));
    if (delta) *delta = best.delta;
    if (lambda) *lambda = best.lambda;
    if (accuracy) *accuracy = *best.accuracy;
    return DISCLIP_OK;
  });
}

disclip_status disclip_run_ablation(disclip_engine* engine, const char* const* set_names,
                                    const char* const* scene_paths, size_t set_count,
                                    const char* out_path) {
  return guard([&] {
    require(engine, "engine");
    require(set_names, "set_names");
    require(scene_paths, "scene_paths");
    std::vector<std::pair<std::string, std::vector<disclip::io::SceneEntry>>> sets;
    for (size_t i = 0; i < set_count; ++i) {
      require(set_names[i], "set_names[i]");
      sets.emplace_back(set_names[i], load(scene_paths[i]));
    }
    Output out(out_path);
    const auto rows = disclip::run_ablation(sets, engine->factory, engine->config, out.stream());
    out.close(out_path);
    for (const auto& row : rows) {
      for (const auto& a : row.accuracy) {
        if (!a) {
          last_error = "some ablation cells failed";
          return DISCLIP_ERR_PARTIAL;
        }
      }
    }
    return DISCLIP_OK;
  });
}

disclip_status disclip_convert(const char* input_path, const char* format, const char* image_root,
                               const char* out_path, size_t* written, size_t* skipped_group) {
  return guard([&] {
    require(input_path, "input_path");
    require(format, "format");
    const auto fmt = disclip::io::parse_dataset_format(format);
    std::ifstream in(input_path);
    if (!in) fail(ErrorKind::kIo, std::string("cannot open '") + input_path + "'");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, std::string(input_path) + ": " + e.what());
    }
    disclip::io::ConvertSummary summary;
    const auto scenes = disclip::io::convert_dataset(doc, fmt, image_root ? image_root : "", summary);
    Output out(out_path);
    for (const auto& s : scenes) out.stream() << disclip::io::scene_to_json(s).dump() << '\n';
    out.close(out_path);
    if (written) *written = summary.written;
    if (skipped_group) *skipped_group = summary.skipped_group;
    return DISCLIP_OK;
  });
}

disclip_status disclip_write_toy_scenes(const char* world_path, const char* out_dir, size_t count,
                                        size_t distractors, int adversarial, uint64_t seed) {
  return guard([&] {
    require(out_dir, "out_dir");
    if (count == 0) fail(ErrorKind::kInvalidArgument, "count must be at least 1");
    const disclip::ToyWorldSpec spec = toy_spec(world_path);
    // Custom worlds carry no grouping, so each region gets one attribute.
    const auto groups = world_path
                            ? std::vector<std::vector<std::string>>{spec.world->attributes()}
                            : disclip::standard_attribute_groups();
    const auto layouts = disclip::sample_toy_layouts(groups, count, distractors, adversarial != 0, seed);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream index(fs::path(out_dir) / "scenes.jsonl", std::ios::trunc);
    if (!index) fail(ErrorKind::kIo, std::string("cannot write into '") + out_dir + "'");
    for (size_t i = 0; i < layouts.size(); ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "toy-%04zu", i);
      const std::string file = std::string(id) + ".png";
      const auto sample = disclip::build_toy_scene(*spec.world, layouts[i], id, file);
      disclip::io::write_png((fs::path(out_dir) / file).string(), sample.image);
      index << disclip::io::scene_to_json(sample.scene).dump() << '\n';
    }
    if (!index.flush()) fail(ErrorKind::kIo, "write failed: scenes.jsonl");
    return DISCLIP_OK;
  });
}

disclip_status disclip_serve_toy(const char* world_path, const char* address, size_t max_connections,
                                 void (*on_ready)(int port, void* user), void* user) {
  return guard([&] {
    require(address, "address");
    const disclip::ToyWorldSpec spec = toy_spec(world_path);
    std::optional<int> limit;
    if (max_connections > 0) limit = static_cast<int>(max_connections);
    disclip::protocol::serve_tcp(
        address, [spec] { return disclip::make_toy_backend(spec.world, spec.table); },
        [&](int port) {
          if (on_ready) on_ready(port, user);
        },
        limit);
    return DISCLIP_OK;
  });
}

}  // extern "C"
