#ifndef DSLBENCH_H
#define DSLBENCH_H

/* This header is generated by cbindgen from dslbench-capi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Target languages accepted by the extraction and validation entry points.
 */
typedef enum {
  DSLB_LANGUAGE_OCL = 0,
  DSLB_LANGUAGE_ALLOY = 1,
  DSLB_LANGUAGE_PYTHON = 2,
} DslbLanguage;

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  DSLB_STATUS_OK = 0,
  DSLB_STATUS_NULL_ARGUMENT = 1,
  DSLB_STATUS_INVALID_UTF8 = 2,
  DSLB_STATUS_DOMAIN_ERROR = 3,
  DSLB_STATUS_NO_CODE_FOUND = 4,
  DSLB_STATUS_INVALID_LANGUAGE = 5,
  DSLB_STATUS_DEGENERATE_TABLE = 6,
  DSLB_STATUS_NO_VERDICT_LINE = 7,
  DSLB_STATUS_INTERNAL_PANIC = 8,
} DslbStatus;

/**
 * Opaque well-formedness result handle.
 */
typedef struct DslbWfResult DslbWfResult;

/**
 * Chi-square test output.
 */
typedef struct {
  double statistic;
  double p_value;
  uint32_t dof;
  uint8_t significant;
} DslbChiSquare;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *dslb_version(void);

/**
 * Unbiased pass@k estimator; requires 1 <= k <= n and c <= n.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
DslbStatus dslb_pass_at_k(uint32_t n, uint32_t c, uint32_t k, double *out);

/**
 * Pearson chi-square independence test over a row-major `rows` x `cols`
 * table of observed counts.
 *
 * # Safety
 * `observed` must point to `rows * cols` doubles; `out` must be valid.
 */
DslbStatus dslb_chi_square(const double *observed,
                           size_t rows,
                           size_t cols,
                           double alpha,
                           DslbChiSquare *out);

/**
 * Extract the code snippet from a raw completion. On success `*out` holds
 * a newly allocated string; free it with `dslb_string_free`.
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out` must be valid.
 */
DslbStatus dslb_extract_code(const char *raw, int32_t language, char **out);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void dslb_string_free(char *s);

/**
 * Run the built-in well-formedness validator; `*out` receives an opaque
 * handle released with `dslb_wf_free`.
 *
 * # Safety
 * `code` must be a NUL-terminated string; `out` must be valid.
 */
DslbStatus dslb_check_wf(const char *code, int32_t language, DslbWfResult **out);

/**
 * 1 when the checked snippet was well-formed, 0 otherwise (or on NULL).
 *
 * # Safety
 * `result` must be a live handle from `dslb_check_wf`.
 */
int32_t dslb_wf_passed(const DslbWfResult *result);

/**
 * Number of diagnostics carried by a failed result.
 *
 * # Safety
 * `result` must be a live handle from `dslb_check_wf`.
 */
size_t dslb_wf_diagnostic_count(const DslbWfResult *result);

/**
 * Copy the message of diagnostic `index` into a new string; free it with
 * `dslb_string_free`.
 *
 * # Safety
 * `result` must be a live handle; `out` must be valid.
 */
DslbStatus dslb_wf_diagnostic_message(const DslbWfResult *result, size_t index, char **out);

/**
 * 1-based line of diagnostic `index`, or -1 when it carries none.
 *
 * # Safety
 * `result` must be a live handle from `dslb_check_wf`.
 */
int64_t dslb_wf_diagnostic_line(const DslbWfResult *result, size_t index);

/**
 * Release a well-formedness handle.
 *
 * # Safety
 * `result` must come from `dslb_check_wf` and not be freed twice.
 */
void dslb_wf_free(DslbWfResult *result);

/**
 * Parse a judge reply: `*out_correct` gets 1/0 and `*out_feedback` the
 * remainder after the verdict line (free with `dslb_string_free`).
 *
 * # Safety
 * `raw` must be a NUL-terminated string; both out-pointers must be valid.
 */
DslbStatus dslb_parse_verdict(const char *raw, uint8_t *out_correct, char **out_feedback);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSLBENCH_H */
