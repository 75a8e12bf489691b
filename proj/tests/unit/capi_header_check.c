/* Compiled as C: the public header must stay valid C. */
#include "lrp4rag/lrp4rag.h"

int capi_c_roundtrip(const char* path) {
  const double values[6] = {1, 2, 3, 4, 5, 6};
  lrp_matrix* m = NULL;
  lrp_matrix* back = NULL;
  double out[6];
  int ok = 1;
  if (lrp_matrix_create(2, 3, values, &m) != LRP_OK) return 0;
  if (lrp_matrix_export(m, path) != LRP_OK) ok = 0;
  if (ok && lrp_matrix_import(path, &back) != LRP_OK) ok = 0;
  if (ok && lrp_matrix_read(back, out, 6) != LRP_OK) ok = 0;
  if (ok && (lrp_matrix_rows(back) != 2 || lrp_matrix_cols(back) != 3 || out[5] != 6.0)) ok = 0;
  lrp_matrix_free(back);
  lrp_matrix_free(m);
  return ok;
}
