/* Copyright 2026 The disclip Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the disclip engine: discriminative referring-expression
 * generation by similarity-guided decoding, plus its evaluation harness.
 *
 * Every call returns a disclip_status. On failure, disclip_last_error()
 * describes the problem; the message is owned by the library and stays
 * valid on the calling thread until its next disclip call. Output paths
 * accept "-" for standard output.
 */

#ifndef DISCLIP_DISCLIP_H_
#define DISCLIP_DISCLIP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DISCLIP_BUILDING)
#define DISCLIP_API __attribute__((visibility("default")))
#else
#define DISCLIP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum disclip_status {
  DISCLIP_OK = 0,
  DISCLIP_ERR_INVALID_ARGUMENT = 1,
  DISCLIP_ERR_CONFIG = 2,
  DISCLIP_ERR_VALIDATION = 3,
  DISCLIP_ERR_IO = 4,
  DISCLIP_ERR_PARSE = 5,
  DISCLIP_ERR_BACKEND = 6,
  DISCLIP_ERR_PROTOCOL = 7,
  DISCLIP_ERR_PARTIAL = 8, /* the run completed but some items failed */
  DISCLIP_ERR_INTERNAL = 9
} disclip_status;

DISCLIP_API const char* disclip_version(void);
DISCLIP_API const char* disclip_last_error(void);
DISCLIP_API const char* disclip_status_name(disclip_status status);

/* Engine: a backend plus the full configuration. Not thread-safe; use one
 * engine per thread. Runs use the configured worker count internally. */
typedef struct disclip_engine disclip_engine;

/* Synthetic toy backend. world_path may be NULL for the standard world. */
DISCLIP_API disclip_status disclip_engine_create_toy(const char* world_path, disclip_engine** out);
/* Model server speaking the line protocol: "tcp://host:port", "host:port"
 * or "unix:/path". Each worker opens its own connection. */
DISCLIP_API disclip_status disclip_engine_connect(const char* endpoint, disclip_engine** out);
DISCLIP_API void disclip_engine_free(disclip_engine* engine);

/* Real keys: lambda, delta, beta, alpha, listener_delta, blur_sigma.
 * Integer keys: k, max_tokens, workers, encoder_resolution, strip_prompt_for_clip.
 * String keys: prompt, norm_mode (raw|softmax), sim_mode (cosine|clipscore),
 *              crop_style (plain|mirror).
 * Out-of-range values are rejected with DISCLIP_ERR_CONFIG and leave the
 * engine unchanged. */
DISCLIP_API disclip_status disclip_engine_set_real(disclip_engine* engine, const char* key, double value);
DISCLIP_API disclip_status disclip_engine_set_int(disclip_engine* engine, const char* key, int64_t value);
DISCLIP_API disclip_status disclip_engine_set_string(disclip_engine* engine, const char* key,
                                                     const char* value);
/* tokens == NULL restores the default (end of text and the period token). */
DISCLIP_API disclip_status disclip_engine_set_stop_tokens(disclip_engine* engine, const int32_t* tokens,
                                                          size_t count);

/* Single scene. scene_json is one SceneFile document; relative image paths
 * resolve against the working directory. */
typedef struct disclip_result disclip_result;

DISCLIP_API disclip_status disclip_generate(disclip_engine* engine, const char* scene_json,
                                            disclip_result** out);
DISCLIP_API const char* disclip_result_expression(const disclip_result* result);
DISCLIP_API const char* disclip_result_stop_reason(const disclip_result* result);
DISCLIP_API size_t disclip_result_token_count(const disclip_result* result);
DISCLIP_API const int32_t* disclip_result_tokens(const disclip_result* result);
/* Per-step score components as a JSON array. */
DISCLIP_API const char* disclip_result_trace_json(const disclip_result* result);
DISCLIP_API void disclip_result_free(disclip_result* result);

/* Batch runs. Scene paths accept .jsonl, .json or a directory of .json. */
typedef struct disclip_run_summary {
  size_t processed;
  size_t failed;
} disclip_run_summary;

/* JSON lines, one per scene in input order. DISCLIP_ERR_PARTIAL when any
 * scene failed; its record carries the error. */
DISCLIP_API disclip_status disclip_run_generate(disclip_engine* engine, const char* scenes_path,
                                                const char* out_path, int with_trace,
                                                disclip_run_summary* summary);
/* Per-example JSON lines followed by a {"summary": ...} line. */
DISCLIP_API disclip_status disclip_run_evaluate(disclip_engine* engine, const char* expressions_path,
                                                const char* scenes_path, const char* out_path,
                                                disclip_run_summary* summary);
/* CSV delta,lambda,accuracy,n. summary counts cells; failed cells read
 * "failed" and yield DISCLIP_ERR_PARTIAL. */
DISCLIP_API disclip_status disclip_run_sweep(disclip_engine* engine, const char* scenes_path,
                                             const double* deltas, size_t delta_count,
                                             const double* lambdas, size_t lambda_count,
                                             size_t sample_count, uint64_t seed, const char* out_path,
                                             disclip_run_summary* summary);
/* Best cell of a sweep CSV: highest accuracy, first in file order on ties. */
DISCLIP_API disclip_status disclip_sweep_best(const char* csv_path, double* delta, double* lambda,
                                              double* accuracy);
/* CSV with one row per representation (crop-blur, blur, mirror, crop) and
 * one column per named scene set. */
DISCLIP_API disclip_status disclip_run_ablation(disclip_engine* engine, const char* const* set_names,
                                                const char* const* scene_paths, size_t set_count,
                                                const char* out_path);

/* Dataset conversion to SceneFile JSON lines. format: refcoco_like or
 * flickr_like. image_root may be NULL. */
DISCLIP_API disclip_status disclip_convert(const char* input_path, const char* format,
                                           const char* image_root, const char* out_path,
                                           size_t* written, size_t* skipped_group);

/* Renders toy scenes into out_dir as PNG files plus scenes.jsonl. The
 * standard world draws one color, size and shape per region; a custom world
 * gives each region a single attribute. Adversarial scenes differ from the
 * target in one attribute only. */
DISCLIP_API disclip_status disclip_write_toy_scenes(const char* world_path, const char* out_dir,
                                                    size_t count, size_t distractors, int adversarial,
                                                    uint64_t seed);

/* Serves the toy backend over TCP on address ("host:port", port 0 picks a
 * free one). Blocks; returns after max_connections connections when it is
 * nonzero. on_ready, if given, receives the bound port. */
DISCLIP_API disclip_status disclip_serve_toy(const char* world_path, const char* address,
                                             size_t max_connections,
                                             void (*on_ready)(int port, void* user), void* user);

#ifdef __cplusplus
}
#endif

#endif /* DISCLIP_DISCLIP_H_ */
