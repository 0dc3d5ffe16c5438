#include <math.h>
#include <stdio.h>
#include <string.h>

#include "topsom.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    TopsomStatus s_ = (call);                                                  \
    if (s_ != TOPSOM_STATUS_OK) {                                              \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                        \
              topsom_last_error_message());                                    \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(int argc, char **argv) {
  if (argc < 2) {
    return 2;
  }
  TopsomData *data = NULL;
  TopsomModel *model = NULL;
  TopsomModel *loaded = NULL;
  CHECK(topsom_data_synth_rings(600, 0.02, 7, &data));
  CHECK(topsom_train(data, "width = 4\nheight = 4\ntopology = mst\nn_iters = 15\n", &model));
  CHECK(topsom_model_save(model, argv[1]));
  CHECK(topsom_model_load(argv[1], &loaded));

  size_t n = topsom_model_n_nodes(loaded) * topsom_model_dim(loaded);
  float a[64], b[64];
  if (n != 32) {
    return 3;
  }
  CHECK(topsom_model_weights(model, a, 64));
  CHECK(topsom_model_weights(loaded, b, 64));
  if (memcmp(a, b, n * sizeof(float)) != 0) {
    return 4;
  }
  double qe = -1.0;
  CHECK(topsom_model_quantization_error(loaded, data, &qe));
  if (!(qe > 0.0 && qe < 0.5)) {
    return 5;
  }
  if (topsom_train(NULL, NULL, &model) != TOPSOM_STATUS_NULL_POINTER) {
    return 6;
  }
  printf("qe=%.6f\n", qe);
  topsom_model_free(loaded);
  topsom_model_free(model);
  topsom_data_free(data);
  return 0;
}
