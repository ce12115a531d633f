/* C interface for the trade-forensics pipeline.
 *
 * Conventions:
 *   - All strings are NUL-terminated UTF-8.
 *   - Fallible calls return TfStatus; TF_OK is 0.
 *   - tf_last_error_message() returns the detail of the most recent failure
 *     on the calling thread (caller frees via tf_string_free).
 *   - TfRun is an opaque handle owned by the caller after a successful
 *     tf_analyze/tf_ingest; release it with tf_run_free.
 *
 * Link against libtrade_forensics_ffi (cdylib or staticlib).
 */

#ifndef TRADE_FORENSICS_H
#define TRADE_FORENSICS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum TfStatus {
  TF_OK = 0,
  TF_ERR_CONFIG = 1,        /* bad config value or parameter */
  TF_ERR_IO = 2,            /* unreadable input / unwritable output */
  TF_ERR_STAGE = 3,         /* a pipeline stage failed; see manifest.json */
  TF_ERR_NULL_ARGUMENT = 4, /* required pointer was NULL */
  TF_ERR_INVALID_UTF8 = 5,  /* string argument was not UTF-8 */
  TF_ERR_INTERNAL = 6,
} TfStatus;

/* Opaque result of one pipeline run. */
typedef struct TfRun TfRun;

/* Run the full pipeline over input_path, writing all output files into
 * out_dir. config_path may be NULL for defaults. On TF_OK, *out_run owns the
 * run handle. */
TfStatus tf_analyze(const char *input_path,
                    const char *out_dir,
                    const char *config_path,
                    TfRun **out_run);

/* Parse the input and write only the reject quarantine. */
TfStatus tf_ingest(const char *input_path,
                   const char *out_dir,
                   const char *config_path,
                   TfRun **out_run);

/* Generate a seeded synthetic dataset with planted ground truth, writing
 * synthetic.csv and ground_truth.json into out_dir. */
TfStatus tf_synth(uint64_t records,
                  uint64_t seed,
                  uint64_t outliers,
                  uint64_t vague,
                  uint64_t mega,
                  double defect_rate,
                  const char *out_dir);

/* Run-handle accessors; a NULL handle yields 0. */
uint64_t tf_run_parsed(const TfRun *run);
uint64_t tf_run_rejected(const TfRun *run);
uint64_t tf_run_case_entries(const TfRun *run);
uint64_t tf_run_mega_trades(const TfRun *run);

/* Full run manifest as JSON; free with tf_string_free. NULL on NULL input. */
char *tf_run_manifest_json(const TfRun *run);

/* Release a run handle; NULL is ignored. */
void tf_run_free(TfRun *run);

/* Release a string allocated by this library; NULL is ignored. */
void tf_string_free(char *s);

/* Detail message of the most recent failure on this thread, or NULL.
 * Free with tf_string_free. */
char *tf_last_error_message(void);

/* Static version string; do not free. */
const char *tf_version(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TRADE_FORENSICS_H */
