/* Copyright 2026 The unetprune Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the unetprune engine.
 *
 * Every fallible call returns a unp_status; on failure unp_last_error()
 * describes the problem (thread-local, valid until the next call on the same
 * thread). Output handles are written only on success. Strings and buffers
 * returned through out-parameters are owned by the caller and released with
 * unp_string_free / unp_buffer_free.
 */

#ifndef UNETPRUNE_UNETPRUNE_H_
#define UNETPRUNE_UNETPRUNE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UNP_API __declspec(dllexport)
#else
#define UNP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum unp_status {
  UNP_OK = 0,
  UNP_ERR_CONFIG = 1,
  UNP_ERR_VALIDATION = 2,
  UNP_ERR_CYCLE = 3,
  UNP_ERR_DANGLING_INPUT = 4,
  UNP_ERR_CHANNEL_MISMATCH = 5,
  UNP_ERR_UNREACHABLE = 6,
  UNP_ERR_IO = 7,
  UNP_ERR_FORMAT = 8,
  UNP_ERR_BAD_MAGIC = 9,
  UNP_ERR_VERSION_MISMATCH = 10,
  UNP_ERR_TRUNCATED = 11,
  UNP_ERR_DIMS_MISMATCH = 12,
  UNP_ERR_PLAN = 13,
  UNP_ERR_UNKNOWN_LAYER = 14,
  UNP_ERR_DIVISION_BY_ZERO = 15,
  UNP_ERR_INTERNAL = 16,
  UNP_ERR_INVALID_ARGUMENT = 17
} unp_status;

typedef enum unp_mac_convention {
  UNP_MACS_OUTPUT_GRID = 0,
  UNP_MACS_INPUT_GRID = 1
} unp_mac_convention;

typedef enum unp_format {
  UNP_FORMAT_TEXT = 0,
  UNP_FORMAT_CSV = 1,
  UNP_FORMAT_JSON = 2
} unp_format;

typedef enum unp_criterion {
  UNP_CRITERION_L2 = 0,
  UNP_CRITERION_GM = 1,
  UNP_CRITERION_LAMP = 2
} unp_criterion;

typedef enum unp_pair_init {
  UNP_PAIR_INIT_SKIP_SLICE = 0,
  UNP_PAIR_INIT_RANDOM = 1,
  UNP_PAIR_INIT_AVERAGE = 2
} unp_pair_init;

typedef struct unp_graph unp_graph;
typedef struct unp_model unp_model;
typedef struct unp_plan unp_plan;

UNP_API const char* unp_version(void);
UNP_API const char* unp_last_error(void);
UNP_API const char* unp_status_name(unp_status status);
UNP_API void unp_string_free(char* s);
UNP_API void unp_buffer_free(void* p);

/* Graphs. */

/* norm: "batch", "instance", "none" or NULL for batch. */
UNP_API unp_status unp_graph_build_pix2pix(int nf, int height, int width, const char* norm,
                                           unp_graph** out);
/* table_json NULL selects the shipped layer table; face_height/face_width 0
 * keep the table's face size. */
UNP_API unp_status unp_graph_build_wav2lip(int nvf, int naf, int ndf, const char* table_json,
                                           int face_height, int face_width, const char* norm,
                                           unp_graph** out);
/* Parses and validates. */
UNP_API unp_status unp_graph_from_json(const char* text, unp_graph** out);
UNP_API unp_status unp_graph_to_json(const unp_graph* graph, char** out);
/* Per-node shape trace on success. */
UNP_API unp_status unp_graph_validate(const unp_graph* graph, char** report);
UNP_API unp_status unp_graph_set_input_shape(unp_graph* graph, const char* input, int channels,
                                             int height, int width);
UNP_API unp_status unp_graph_bottleneck(const unp_graph* graph, int* channels, int* height,
                                        int* width);
/* Conv and transposed-conv layer names in topological order, as a JSON array. */
UNP_API unp_status unp_graph_layers(const unp_graph* graph, char** out);
UNP_API unp_status unp_graph_clone(const unp_graph* graph, unp_graph** out);
UNP_API void unp_graph_free(unp_graph* graph);

/* Models: a graph plus its weights. */

UNP_API unp_status unp_model_init_random(const unp_graph* graph, uint64_t seed, unp_model** out);
UNP_API unp_status unp_model_read(const char* path, unp_model** out);
UNP_API unp_status unp_model_write(const unp_model* model, const char* path);
UNP_API unp_status unp_model_from_bytes(const void* data, size_t size, unp_model** out);
UNP_API unp_status unp_model_to_bytes(const unp_model* model, void** data, size_t* size);
/* A copy of the model's graph. */
UNP_API unp_status unp_model_graph(const unp_model* model, unp_graph** out);
UNP_API void unp_model_free(unp_model* model);

/* Cost. */

UNP_API unp_status unp_cost_totals(const unp_graph* graph, unp_mac_convention convention,
                                   int64_t* params, int64_t* macs);
UNP_API unp_status unp_cost_report(const unp_graph* graph, unp_mac_convention convention,
                                   unp_format format, char** out);
/* "params 54.4M -> 35.8M (1.5×)" style summary. */
UNP_API unp_status unp_cost_diff(const unp_graph* original, const unp_graph* pruned,
                                 unp_mac_convention convention, char** out);

/* Scores and plans. */

UNP_API unp_status unp_scores_csv(const unp_model* model, unp_criterion criterion, char** out);
UNP_API unp_status unp_plan_preset(const unp_model* model, const char* name,
                                   unp_criterion criterion, unp_plan** out);
/* plus != 0 excludes the first encoder and last prunable decoder layer. */
UNP_API unp_status unp_plan_uniform(const unp_model* model, unp_criterion criterion,
                                    double ratio, int plus, unp_plan** out);
UNP_API unp_status unp_plan_global(const unp_model* model, unp_criterion criterion,
                                   double ratio, unp_plan** out);
UNP_API unp_status unp_plan_inner(const unp_model* model, unp_criterion criterion,
                                  const char* const* layers, const double* ratios, size_t count,
                                  unp_plan** out);
UNP_API unp_status unp_plan_from_json(const char* text, unp_plan** out);
UNP_API unp_status unp_plan_to_json(const unp_plan* plan, char** out);
/* Number of filter/pair actions. */
UNP_API size_t unp_plan_action_count(const unp_plan* plan);
UNP_API void unp_plan_free(unp_plan* plan);
/* One line per preset: name, architecture, description. */
UNP_API unp_status unp_presets_describe(char** out);

/* Transforms. channel_maps may be NULL. */

UNP_API unp_status unp_prune(const unp_model* model, const unp_plan* plan, unp_model** out,
                             char** channel_maps);
UNP_API unp_status unp_cut_layers(const unp_model* model, int depth, unp_pair_init init,
                                  uint64_t seed, unp_model** out, char** channel_maps);

/* Analysis. */

/* ratios NULL selects 0.25, 0.5, 0.75. */
UNP_API unp_status unp_sweep(const unp_model* model, const double* ratios, size_t n_ratios,
                             unp_criterion criterion, int n_probes, uint64_t seed, char** csv);

typedef struct unp_verify_result {
  int pass;
  double max_deviation;
  int probes;
  int first_failing_probe; /* -1 when passing */
} unp_verify_result;

/* report may be NULL. */
UNP_API unp_status unp_verify(const unp_model* model, const unp_plan* plan, int n_probes,
                              uint64_t seed, double tolerance, unp_verify_result* result,
                              char** report);

typedef struct unp_bench_result {
  double median_ms;
  double p90_ms;
  int runs;
  double speedup; /* 0 without a baseline */
} unp_bench_result;

/* input_shapes: NULL or "name=CxHxW[;name=CxHxW]". baseline_json: NULL or a
 * previous report. json may be NULL. */
UNP_API unp_status unp_bench(const unp_model* model, int n_warmup, int n_runs,
                             const char* input_shapes, uint64_t seed, const char* baseline_json,
                             unp_bench_result* result, char** json);

#ifdef __cplusplus
}
#endif

#endif /* UNETPRUNE_UNETPRUNE_H_ */
