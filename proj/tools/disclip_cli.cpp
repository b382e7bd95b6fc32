// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end over the C API. Exit status is the disclip_status
// of the run (0 on success, 8 when some scenes or cells failed).

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "disclip/disclip.h"

namespace {

struct EngineFlags {
  std::string backend = "toy";
  std::string world;
  std::optional<double> lambda, delta, beta, alpha, listener_delta, blur_sigma;
  std::optional<int> k, max_tokens, workers, resolution;
  std::optional<std::string> prompt, norm_mode, sim_mode, crop_style;
  std::vector<int> stop_tokens;
  bool strip_prompt = false;
  std::string from_sweep;
};

void add_engine_flags(CLI::App* cmd, EngineFlags& f, bool decoding) {
  cmd->add_option("--backend", f.backend, "\"toy\" or a model server endpoint (host:port, unix:/path)")
      ->envname("DISCLIP_BACKEND")
      ->capture_default_str();
  cmd->add_option("--world", f.world, "Toy world JSON file (toy backend only)")
      ->envname("DISCLIP_WORLD");
  cmd->add_option("--workers", f.workers, "Parallel workers, one backend each")
      ->envname("DISCLIP_WORKERS");
  cmd->add_option("--sim-mode", f.sim_mode, "cosine or clipscore")->envname("DISCLIP_SIM_MODE");
  cmd->add_option("--listener-delta", f.listener_delta, "Blur weight of the evaluating listener")
      ->envname("DISCLIP_LISTENER_DELTA");
  cmd->add_option("--blur-sigma", f.blur_sigma, "Gaussian sigma of the blur view in pixels")
      ->envname("DISCLIP_BLUR_SIGMA");
  cmd->add_option("--resolution", f.resolution, "Encoder input resolution")
      ->envname("DISCLIP_RESOLUTION");
  if (!decoding) return;
  cmd->add_option("--lambda", f.lambda, "Target vs. distractor mix")->envname("DISCLIP_LAMBDA");
  cmd->add_option("--delta", f.delta, "Blur vs. crop mix")->envname("DISCLIP_DELTA");
  cmd->add_option("--beta", f.beta, "Weight of the visual score")->envname("DISCLIP_BETA");
  cmd->add_option("--alpha", f.alpha, "Degeneration penalty weight")->envname("DISCLIP_ALPHA");
  cmd->add_option("--k", f.k, "Candidates per step")->envname("DISCLIP_K");
  cmd->add_option("--max-tokens", f.max_tokens, "Maximum generated tokens")
      ->envname("DISCLIP_MAX_TOKENS");
  cmd->add_option("--prompt", f.prompt, "Language model prompt")->envname("DISCLIP_PROMPT");
  cmd->add_option("--norm-mode", f.norm_mode, "raw or softmax")->envname("DISCLIP_NORM_MODE");
  cmd->add_option("--crop-style", f.crop_style, "plain or mirror")->envname("DISCLIP_CROP_STYLE");
  cmd->add_option("--stop-tokens", f.stop_tokens, "Stop token ids (default: end of text and period)")
      ->delimiter(',')
      ->envname("DISCLIP_STOP_TOKENS");
  cmd->add_flag("--strip-prompt-for-clip", f.strip_prompt,
                "Score only the generated text with the encoder")
      ->envname("DISCLIP_STRIP_PROMPT_FOR_CLIP");
  cmd->add_option("--from-sweep", f.from_sweep,
                  "Take delta and lambda from the best cell of a sweep CSV")
      ->envname("DISCLIP_FROM_SWEEP");
}

int report(disclip_status status, const char* what) {
  if (status != DISCLIP_OK) {
    std::fprintf(stderr, "disclip %s: %s: %s\n", what, disclip_status_name(status),
                 disclip_last_error());
  }
  return static_cast<int>(status);
}

// Builds a configured engine, or returns the failing status.
disclip_status make_engine(const EngineFlags& f, disclip_engine** engine) {
  disclip_status s = f.backend == "toy"
                         ? disclip_engine_create_toy(f.world.empty() ? nullptr : f.world.c_str(), engine)
                         : disclip_engine_connect(f.backend.c_str(), engine);
  if (s != DISCLIP_OK) return s;
  auto set_real = [&](const char* key, const std::optional<double>& v) {
    if (s == DISCLIP_OK && v) s = disclip_engine_set_real(*engine, key, *v);
  };
  auto set_int = [&](const char* key, const std::optional<int>& v) {
    if (s == DISCLIP_OK && v) s = disclip_engine_set_int(*engine, key, *v);
  };
  auto set_str = [&](const char* key, const std::optional<std::string>& v) {
    if (s == DISCLIP_OK && v) s = disclip_engine_set_string(*engine, key, v->c_str());
  };
  std::optional<double> delta = f.delta, lambda = f.lambda;
  if (!f.from_sweep.empty()) {
    double best_delta = 0.0, best_lambda = 0.0, accuracy = 0.0;
    s = disclip_sweep_best(f.from_sweep.c_str(), &best_delta, &best_lambda, &accuracy);
    if (s == DISCLIP_OK) {
      std::fprintf(stderr, "using sweep cell delta=%g lambda=%g (accuracy %g)\n", best_delta,
                   best_lambda, accuracy);
      delta = best_delta;
      lambda = best_lambda;
    }
  }
  set_real("lambda", lambda);
  set_real("delta", delta);
  set_real("beta", f.beta);
  set_real("alpha", f.alpha);
  set_real("listener_delta", f.listener_delta);
  set_real("blur_sigma", f.blur_sigma);
  set_int("k", f.k);
  set_int("max_tokens", f.max_tokens);
  set_int("workers", f.workers);
  set_int("encoder_resolution", f.resolution);
  if (f.strip_prompt) set_int("strip_prompt_for_clip", 1);
  set_str("prompt", f.prompt);
  set_str("norm_mode", f.norm_mode);
  set_str("sim_mode", f.sim_mode);
  set_str("crop_style", f.crop_style);
  if (s == DISCLIP_OK && !f.stop_tokens.empty()) {
    std::vector<int32_t> ids(f.stop_tokens.begin(), f.stop_tokens.end());
    s = disclip_engine_set_stop_tokens(*engine, ids.data(), ids.size());
  }
  if (s != DISCLIP_OK) {
    disclip_engine_free(*engine);
    *engine = nullptr;
  }
  return s;
}

void print_summary(const char* what, const disclip_run_summary& s) {
  std::fprintf(stderr, "%s: %zu processed, %zu failed\n", what, s.processed, s.failed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discriminative referring-expression generation by similarity-guided decoding"};
  app.set_version_flag("--version", disclip_version());
  app.require_subcommand(1);

  EngineFlags gen_flags;
  std::string gen_scenes, gen_out = "-";
  bool gen_trace = false;
  auto* gen = app.add_subcommand("generate", "Generate one expression per scene (JSON lines)");
  gen->add_option("--scenes", gen_scenes, "Scene .jsonl, .json or directory")->required()
      ->envname("DISCLIP_SCENES");
  gen->add_option("--out", gen_out, "Output path, - for stdout")->envname("DISCLIP_OUT");
  gen->add_flag("--trace", gen_trace, "Include per-step score traces")->envname("DISCLIP_TRACE");
  add_engine_flags(gen, gen_flags, true);

  EngineFlags eval_flags;
  std::string eval_expr, eval_scenes, eval_out = "-";
  auto* evaluate = app.add_subcommand("evaluate", "Listener accuracy and language metrics");
  evaluate->add_option("--expressions", eval_expr, "Output of generate")->required()
      ->envname("DISCLIP_EXPRESSIONS");
  evaluate->add_option("--scenes", eval_scenes, "Scenes the expressions refer to")->required()
      ->envname("DISCLIP_SCENES");
  evaluate->add_option("--out", eval_out, "Output path, - for stdout")->envname("DISCLIP_OUT");
  add_engine_flags(evaluate, eval_flags, false);

  EngineFlags sweep_flags;
  std::string sweep_scenes, sweep_out = "-";
  std::vector<double> sweep_deltas{0.0, 0.25, 0.5, 0.75, 1.0}, sweep_lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t sweep_samples = 200;
  std::uint64_t sweep_seed = 0;
  auto* sweep = app.add_subcommand("sweep", "Listener accuracy over a delta/lambda grid (CSV)");
  sweep->add_option("--scenes", sweep_scenes, "Scene .jsonl, .json or directory")->required()
      ->envname("DISCLIP_SCENES");
  sweep->add_option("--deltas", sweep_deltas, "Comma-separated delta values")->delimiter(',')
      ->envname("DISCLIP_DELTAS")->capture_default_str();
  sweep->add_option("--lambdas", sweep_lambdas, "Comma-separated lambda values")->delimiter(',')
      ->envname("DISCLIP_LAMBDAS")->capture_default_str();
  sweep->add_option("--samples", sweep_samples, "Scenes sampled per cell")
      ->envname("DISCLIP_SAMPLES")->capture_default_str();
  sweep->add_option("--seed", sweep_seed, "Sampling seed")->envname("DISCLIP_SEED")->capture_default_str();
  sweep->add_option("--out", sweep_out, "Output path, - for stdout")->envname("DISCLIP_OUT");
  add_engine_flags(sweep, sweep_flags, true);

  EngineFlags ablate_flags;
  std::vector<std::string> ablate_sets;
  std::string ablate_out = "-";
  auto* ablate = app.add_subcommand("ablate", "Accuracy per region representation (CSV)");
  ablate->add_option("--set", ablate_sets, "Scene set as name=path, repeatable")->required()
      ->envname("DISCLIP_SETS");
  ablate->add_option("--out", ablate_out, "Output path, - for stdout")->envname("DISCLIP_OUT");
  add_engine_flags(ablate, ablate_flags, true);

  std::string conv_in, conv_format, conv_root, conv_out = "-";
  auto* convert = app.add_subcommand("convert", "Convert a dataset to scene JSON lines");
  convert->add_option("--input", conv_in, "Dataset JSON file")->required()->envname("DISCLIP_INPUT");
  convert->add_option("--format", conv_format, "refcoco_like or flickr_like")->required()
      ->check(CLI::IsMember({"refcoco_like", "flickr_like"}))->envname("DISCLIP_FORMAT");
  convert->add_option("--image-root", conv_root, "Directory prefixed to image file names")
      ->envname("DISCLIP_IMAGE_ROOT");
  convert->add_option("--out", conv_out, "Output path, - for stdout")->envname("DISCLIP_OUT");

  std::string toy_world, toy_dir;
  std::size_t toy_count = 20, toy_distractors = 1;
  std::uint64_t toy_seed = 0;
  bool toy_adversarial = false;
  auto* toy = app.add_subcommand("toy-scenes", "Render synthetic toy scenes");
  toy->add_option("--out-dir", toy_dir, "Directory for PNGs and scenes.jsonl")->required()
      ->envname("DISCLIP_OUT_DIR");
  toy->add_option("--count", toy_count, "Number of scenes")->envname("DISCLIP_COUNT")->capture_default_str();
  toy->add_option("--distractors", toy_distractors, "Distractors per scene")
      ->envname("DISCLIP_DISTRACTORS")->capture_default_str();
  toy->add_flag("--adversarial", toy_adversarial, "Distractors differ from the target in one attribute")
      ->envname("DISCLIP_ADVERSARIAL");
  toy->add_option("--seed", toy_seed, "Layout seed")->envname("DISCLIP_SEED")->capture_default_str();
  toy->add_option("--world", toy_world, "Toy world JSON file")->envname("DISCLIP_WORLD");

  std::string serve_world, serve_listen = "127.0.0.1:0";
  std::size_t serve_max = 0;
  auto* serve = app.add_subcommand("serve-toy", "Serve the toy backend over the line protocol");
  serve->add_option("--listen", serve_listen, "host:port (port 0 picks a free port)")
      ->envname("DISCLIP_LISTEN")->capture_default_str();
  serve->add_option("--world", serve_world, "Toy world JSON file")->envname("DISCLIP_WORLD");
  serve->add_option("--max-connections", serve_max, "Exit after this many connections (0: never)")
      ->envname("DISCLIP_MAX_CONNECTIONS");

  CLI11_PARSE(app, argc, argv);

  disclip_engine* engine = nullptr;
  disclip_run_summary summary{};
  int rc = 0;

  if (*gen) {
    if (disclip_status s = make_engine(gen_flags, &engine); s != DISCLIP_OK) return report(s, "generate");
    rc = report(disclip_run_generate(engine, gen_scenes.c_str(), gen_out.c_str(), gen_trace, &summary),
                "generate");
    if (rc == DISCLIP_OK || rc == DISCLIP_ERR_PARTIAL) print_summary("generate", summary);
  } else if (*evaluate) {
    if (disclip_status s = make_engine(eval_flags, &engine); s != DISCLIP_OK) return report(s, "evaluate");
    rc = report(disclip_run_evaluate(engine, eval_expr.c_str(), eval_scenes.c_str(), eval_out.c_str(),
                                     &summary),
                "evaluate");
    if (rc == DISCLIP_OK || rc == DISCLIP_ERR_PARTIAL) print_summary("evaluate", summary);
  } else if (*sweep) {
    if (disclip_status s = make_engine(sweep_flags, &engine); s != DISCLIP_OK) return report(s, "sweep");
    rc = report(disclip_run_sweep(engine, sweep_scenes.c_str(), sweep_deltas.data(), sweep_deltas.size(),
                                  sweep_lambdas.data(), sweep_lambdas.size(), sweep_samples, sweep_seed,
                                  sweep_out.c_str(), &summary),
                "sweep");
  } else if (*ablate) {
    std::vector<std::string> names, paths;
    for (const std::string& spec : ablate_sets) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::fprintf(stderr, "disclip ablate: --set expects name=path, got '%s'\n", spec.c_str());
        return DISCLIP_ERR_INVALID_ARGUMENT;
      }
      names.push_back(spec.substr(0, eq));
      paths.push_back(spec.substr(eq + 1));
    }
    std::vector<const char*> name_ptrs, path_ptrs;
    for (std::size_t i = 0; i < names.size(); ++i) {
      name_ptrs.push_back(names[i].c_str());
      path_ptrs.push_back(paths[i].c_str());
    }
    if (disclip_status s = make_engine(ablate_flags, &engine); s != DISCLIP_OK) return report(s, "ablate");
    rc = report(disclip_run_ablation(engine, name_ptrs.data(), path_ptrs.data(), names.size(),
                                     ablate_out.c_str()),
                "ablate");
  } else if (*convert) {
    std::size_t written = 0, skipped = 0;
    rc = report(disclip_convert(conv_in.c_str(), conv_format.c_str(),
                                conv_root.empty() ? nullptr : conv_root.c_str(), conv_out.c_str(),
                                &written, &skipped),
                "convert");
    if (rc == DISCLIP_OK) {
      std::fprintf(stderr, "convert: %zu scenes written, %zu group references skipped\n", written,
                   skipped);
    }
  } else if (*toy) {
    rc = report(disclip_write_toy_scenes(toy_world.empty() ? nullptr : toy_world.c_str(), toy_dir.c_str(),
                                         toy_count, toy_distractors, toy_adversarial, toy_seed),
                "toy-scenes");
  } else if (*serve) {
    rc = report(disclip_serve_toy(
                    serve_world.empty() ? nullptr : serve_world.c_str(), serve_listen.c_str(), serve_max,
                    [](int port, void*) {
                      std::printf("listening on port %d\n", port);
                      std::fflush(stdout);
                    },
                    nullptr),
                "serve-toy");
  }
  disclip_engine_free(engine);
  return rc;
}
