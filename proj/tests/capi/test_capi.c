/* Exercises the C interface from C: handles, error reporting and a short
 * train / calibrate / score / evaluate round on a synthetic flow. */

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "wsnad/wsnad.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

#define EXPECT_OK(call)                                                              \
  do {                                                                               \
    wsnad_status s_ = (call);                                                        \
    if (s_ != WSNAD_OK) {                                                            \
      fprintf(stderr, "%s:%d: %s -> %s: %s\n", __FILE__, __LINE__, #call,            \
              wsnad_status_name(s_), wsnad_last_error());                            \
      ++failures;                                                                    \
    }                                                                                \
  } while (0)

static size_t count_lines(const char* text, char skip_prefix) {
  size_t n = 0;
  const char* p = text;
  while (*p) {
    const char* end = strchr(p, '\n');
    if (*p != skip_prefix) ++n;
    if (!end) break;
    p = end + 1;
  }
  return n;
}

int main(void) {
  enum { T = 300, M = 3, N = 2 };
  static double values[T * M * N];
  for (size_t t = 0; t < T; ++t) {
    for (size_t i = 0; i < M; ++i) {
      for (size_t j = 0; j < N; ++j) {
        const double phase = 0.7 * (double)i + 1.3 * (double)j;
        values[(t * M + i) * N + j] = 20.0 + 3.0 * sin(0.11 * (double)t + phase) + 0.05 * cos(1.7 * (double)t * (double)(i + 1));
      }
    }
  }

  EXPECT(strcmp(wsnad_version(), "0.1.0") == 0);
  EXPECT(strcmp(wsnad_status_name(WSNAD_ERR_IO), "input/output error") == 0);

  wsnad_flow* flow = NULL;
  EXPECT_OK(wsnad_flow_from_array(values, T, M, N, &flow));
  size_t len = 0, nodes = 0, modes = 0;
  EXPECT_OK(wsnad_flow_shape(flow, &len, &nodes, &modes));
  EXPECT(len == T && nodes == M && modes == N);

  /* Error paths leave outputs untouched and set a message. */
  wsnad_flow* missing = NULL;
  EXPECT(wsnad_flow_prepare("/nonexistent/data.txt", NULL, NULL, &missing) == WSNAD_ERR_IO);
  EXPECT(missing == NULL);
  EXPECT(strstr(wsnad_last_error(), "/nonexistent/data.txt") != NULL);
  wsnad_model* bad = NULL;
  EXPECT(wsnad_model_train(flow, "{\"window\": 1}", &bad, NULL) == WSNAD_ERR_CONFIG);
  EXPECT(wsnad_model_train(flow, "{not json", &bad, NULL) == WSNAD_ERR_CONFIG);
  EXPECT(wsnad_model_train(NULL, NULL, &bad, NULL) == WSNAD_ERR_INVALID_ARGUMENT);
  EXPECT(bad == NULL);

  const char* config = "{\"window\": 8, \"hidden\": 4, \"gru_layers\": 1, \"epochs\": 2, \"learning_rate\": 0.001}";
  wsnad_model* model = NULL;
  char* history = NULL;
  EXPECT_OK(wsnad_model_train(flow, config, &model, &history));
  EXPECT(history != NULL && strstr(history, "train_loss") != NULL);
  wsnad_string_free(history);

  double threshold = 0.0;
  EXPECT_OK(wsnad_calibrate(model, flow, &threshold));
  EXPECT(threshold > 0.0);

  char* csv = NULL;
  EXPECT_OK(wsnad_score(model, flow, "{\"segment\": \"test\"}", &csv));
  /* header row plus one row per target */
  EXPECT(csv && count_lines(csv, '#') == 1 + (30 - 8));
  EXPECT(csv && strstr(csv, "exceeds") == NULL);
  wsnad_string_free(csv);

  char options[128];
  snprintf(options, sizeof options, "{\"threshold\": %.17g, \"inject\": {\"type\": 4, \"node\": 2, \"mode\": 1, \"t\": 10}}",
           threshold);
  EXPECT_OK(wsnad_score(model, flow, options, &csv));
  EXPECT(csv && strstr(csv, "exceeds") != NULL);
  wsnad_string_free(csv);

  char* report = NULL;
  char* summary = NULL;
  EXPECT_OK(wsnad_evaluate(model, flow, threshold, "{\"seed\": 3}", &report, &summary));
  EXPECT(report && strstr(report, "\"ledger\"") != NULL);
  EXPECT(summary && strstr(summary, "F1") != NULL);
  wsnad_string_free(report);
  wsnad_string_free(summary);

  const double grid[] = {10, 14};
  char* table = NULL;
  EXPECT_OK(wsnad_sensitivity_sweep(model, flow, threshold, "p", grid, 2, NULL, &table));
  EXPECT(table != NULL && strstr(table, "\"rows\"") != NULL);
  wsnad_string_free(table);
  EXPECT(wsnad_sensitivity_sweep(model, flow, threshold, "r", grid, 2, NULL, &table) == WSNAD_ERR_CONFIG);

  const char* path = "wsnad_capi_model.json";
  EXPECT_OK(wsnad_model_save(model, path));
  wsnad_model* loaded = NULL;
  EXPECT_OK(wsnad_model_load(path, &loaded));
  double again = 0.0;
  EXPECT_OK(wsnad_calibrate(loaded, flow, &again));
  EXPECT(again == threshold);
  remove(path);
  remove("wsnad_capi_model.bin");

  int passed = 0;
  char* grad = NULL;
  EXPECT_OK(wsnad_gradcheck(NULL, &passed, &grad));
  EXPECT(passed == 1);
  wsnad_string_free(grad);
  EXPECT_OK(wsnad_gradcheck("{\"corrupt_op\": \"gru_sequence\"}", &passed, NULL));
  EXPECT(passed == 0);

  wsnad_model_free(loaded);
  wsnad_model_free(model);
  wsnad_flow_free(flow);
  wsnad_flow_free(NULL);

  if (failures) fprintf(stderr, "%d failure(s)\n", failures);
  return failures ? 1 : 0;
}
