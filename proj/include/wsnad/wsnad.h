#ifndef WSNAD_WSNAD_H
#define WSNAD_WSNAD_H

/*
 * C interface to the wsnad multimodal sensor-network anomaly detector.
 *
 * Every function returns a wsnad_status. On failure, wsnad_last_error()
 * returns a message describing the most recent error on the calling thread.
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with wsnad_string_free. Handles are released with their
 * matching *_free function; passing NULL to any *_free is a no-op.
 *
 * Options and configurations are UTF-8 JSON objects; NULL or "" means "use
 * the defaults".
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WSNAD_API __declspec(dllexport)
#elif defined(__GNUC__)
#define WSNAD_API __attribute__((visibility("default")))
#else
#define WSNAD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wsnad_status {
  WSNAD_OK = 0,
  WSNAD_ERR_INVALID_ARGUMENT = 1,
  WSNAD_ERR_IO = 2,
  WSNAD_ERR_DIMENSION = 3,
  WSNAD_ERR_CONTRACT = 4,
  WSNAD_ERR_DEGENERATE = 5,
  WSNAD_ERR_NON_FINITE = 6,
  WSNAD_ERR_CONSTANT_SERIES = 7,
  WSNAD_ERR_MISSING_NODE = 8,
  WSNAD_ERR_CHECKPOINT = 9,
  WSNAD_ERR_CONFIG = 10,
  WSNAD_ERR_INTERNAL = 99
} wsnad_status;

/* A raw (unnormalised) flow of readings over time x node x mode. */
typedef struct wsnad_flow wsnad_flow;
/* A trained detector with its graphs and normalisation statistics. */
typedef struct wsnad_model wsnad_model;

WSNAD_API const char* wsnad_version(void);
WSNAD_API const char* wsnad_last_error(void);
WSNAD_API const char* wsnad_status_name(wsnad_status status);
WSNAD_API void wsnad_string_free(char* s);

/*
 * Builds a flow from the lab dump at raw_path (plain or gzip) and an optional
 * coordinate table (coords_path may be NULL). options_json keys: "nodes"
 * (array of mote ids), "node_count", "modes" (array of names), "start" and
 * "end" (ISO date-times, UTC), "length".
 */
WSNAD_API wsnad_status wsnad_flow_prepare(const char* raw_path, const char* coords_path,
                                          const char* options_json, wsnad_flow** out);
/* Wraps caller data laid out [t][node][mode]; node ids are 1..nodes. */
WSNAD_API wsnad_status wsnad_flow_from_array(const double* values, size_t length, size_t nodes,
                                             size_t modes, wsnad_flow** out);
WSNAD_API wsnad_status wsnad_flow_load(const char* path, wsnad_flow** out);
WSNAD_API wsnad_status wsnad_flow_save(const wsnad_flow* flow, const char* path);
WSNAD_API wsnad_status wsnad_flow_shape(const wsnad_flow* flow, size_t* length, size_t* nodes,
                                        size_t* modes);
/* JSON with shape, node ids, mode names, stride and provenance. */
WSNAD_API wsnad_status wsnad_flow_describe(const wsnad_flow* flow, char** json_out);
WSNAD_API void wsnad_flow_free(wsnad_flow* flow);

/* Checks a detector configuration without touching any data. */
WSNAD_API wsnad_status wsnad_config_validate(const char* config_json);

/*
 * Splits the flow chronologically, fits the normalisation on the training
 * split, and trains. history_json (may be NULL) receives the per-epoch losses.
 */
WSNAD_API wsnad_status wsnad_model_train(const wsnad_flow* flow, const char* config_json,
                                         wsnad_model** out, char** history_json);
WSNAD_API wsnad_status wsnad_model_load(const char* path, wsnad_model** out);
WSNAD_API wsnad_status wsnad_model_save(const wsnad_model* model, const char* path);
WSNAD_API wsnad_status wsnad_model_describe(const wsnad_model* model, char** json_out);
WSNAD_API void wsnad_model_free(wsnad_model* model);

/* Maximum inference score over the flow's validation split. */
WSNAD_API wsnad_status wsnad_calibrate(const wsnad_model* model, const wsnad_flow* flow,
                                       double* threshold);

/*
 * Score curve as CSV over one split of the flow. options_json keys:
 * "segment" ("train" | "validation" | "test" | "all", default "test"),
 * "threshold" (number), "inject" ({"type", "node" (mote id), "mode" (name or
 * index), "t", "sign", "p", "q"}; t is relative to the segment), "header"
 * (object copied into the CSV comment block).
 */
WSNAD_API wsnad_status wsnad_score(const wsnad_model* model, const wsnad_flow* flow,
                                   const char* options_json, char** csv_out);

/*
 * Runs the trial protocol on the test split. options_json holds protocol
 * options: "seed", "types", "p", "q", "delaystep". report_json receives counts,
 * metrics and the per-trial ledger; summary (may be NULL) a text table.
 */
WSNAD_API wsnad_status wsnad_evaluate(const wsnad_model* model, const wsnad_flow* flow, double threshold,
                                      const char* options_json, char** report_json, char** summary);

/*
 * Precision per grid value; parameter is "p" (type 1 trials) or "q" (type 2).
 */
WSNAD_API wsnad_status wsnad_sensitivity_sweep(const wsnad_model* model, const wsnad_flow* flow,
                                               double threshold, const char* parameter,
                                               const double* grid, size_t grid_size,
                                               const char* options_json, char** table_json);

/* Trains one model per grid value of "window" or "hidden". */
WSNAD_API wsnad_status wsnad_hyper_sweep(const wsnad_flow* flow, const char* config_json,
                                         const char* parameter, const double* grid, size_t grid_size,
                                         const char* options_json, char** table_json);

/*
 * Finite-difference check of the full detector gradient on a toy instance.
 * passed receives 1 when every relative error is below the tolerance.
 */
WSNAD_API wsnad_status wsnad_gradcheck(const char* options_json, int* passed, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* WSNAD_WSNAD_H */
