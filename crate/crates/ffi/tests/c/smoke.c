#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "covclose.h"

#define CHECK(expr)                                                          \
  do {                                                                       \
    if (!(expr)) {                                                           \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #expr,         \
              covclose_last_error());                                        \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(int argc, char **argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: smoke DESIGN.v\n");
    return 2;
  }
  double p = 0.0;
  CHECK(covclose_pass_at_k(5, 2, 3, &p) == COVCLOSE_STATUS_OK);
  CHECK(p > 0.8999 && p < 0.9001);
  CHECK(covclose_pass_at_k(5, 6, 1, &p) == COVCLOSE_STATUS_DOMAIN_ERROR);
  CHECK(strlen(covclose_last_error()) > 0);

  const char *paths[] = {argv[1]};
  CovcloseDesign *design = NULL;
  CHECK(covclose_design_parse(paths, 1, NULL, &design) == COVCLOSE_STATUS_OK);
  size_t lines = 0, depth = 0;
  CovcloseDifficulty level;
  CHECK(covclose_design_metrics(design, &lines, &depth, &level) == COVCLOSE_STATUS_OK);
  CHECK(depth == 1 && level == COVCLOSE_DIFFICULTY_EASY);
  char *top = NULL;
  CHECK(covclose_design_top(design, &top) == COVCLOSE_STATUS_OK);
  printf("top=%s lines=%zu\n", top, lines);
  covclose_string_free(top);
  covclose_design_free(design);

  const char *xml =
      "<coverage version=\"1\" covered=\"1\" total=\"2\" percent=\"50.00\">"
      "<module name=\"m\" covered=\"1\" total=\"2\">"
      "<line number=\"3\" hits=\"1\"/><line number=\"4\" hits=\"0\"/>"
      "</module></coverage>";
  CovcloseCoverage *a = NULL, *b = NULL;
  CHECK(covclose_coverage_import_xml(xml, &a) == COVCLOSE_STATUS_OK);
  CHECK(covclose_coverage_merge(a, a, &b) == COVCLOSE_STATUS_OK);
  size_t covered = 0, total = 0;
  CHECK(covclose_coverage_score(b, &covered, &total, &p) == COVCLOSE_STATUS_OK);
  CHECK(covered == 1 && total == 2 && p == 50.0);
  covclose_coverage_free(a);
  covclose_coverage_free(b);
  CHECK(covclose_coverage_free != NULL);
  puts("ok");
  return 0;
}
