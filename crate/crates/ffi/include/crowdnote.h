#ifndef CROWDNOTE_H
#define CROWDNOTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CnStatus {
  CN_STATUS_OK = 0,
  CN_STATUS_NULL_ARGUMENT = 1,
  CN_STATUS_INVALID_UTF8 = 2,
  CN_STATUS_IO = 3,
  // Malformed input table: missing column, duplicate key or bad row.
  CN_STATUS_PARSE = 4,
  CN_STATUS_INVALID_CONFIG = 5,
  CN_STATUS_NO_RATINGS = 6,
  CN_STATUS_NOT_FOUND = 7,
  // The data cannot support the requested analysis.
  CN_STATUS_DATA_LIMITED = 8,
  CN_STATUS_NUMERICAL = 9,
  CN_STATUS_PANIC = 10,
} CnStatus;

typedef enum CnNoteStatus {
  CN_NOTE_STATUS_CRH = 0,
  CN_NOTE_STATUS_CRNH = 1,
  CN_NOTE_STATUS_NEEDS_MORE_RATINGS = 2,
} CnNoteStatus;

// Opaque loaded or simulated dataset.
typedef struct CnDataset CnDataset;

// Opaque result of a bridging fit.
typedef struct CnScores CnScores;

// Scorer settings. Obtain defaults from `cn_scoring_config_default`.
typedef struct CnScoringConfig {
  size_t factor_dim;
  double lambda_intercept;
  double lambda_factor;
  double crh_threshold;
  double crnh_threshold;
  size_t max_iterations;
  double convergence_tol;
  uint64_t seed;
  // Mean-squared normalization of loss and penalties when true, sums
  // when false.
  bool per_rating_normalization;
  // Factor initializations tried; the lowest objective is kept.
  size_t n_inits;
} CnScoringConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the calling thread's most recent failure, or null. The
// pointer stays valid until the thread's next failing call.
const char *cn_last_error(void);

// # Safety
// `s` is null or a string returned by this library, not yet freed.
void cn_string_free(char *s);

// Loads notes, ratings and rater profiles from TSV files. `status_history`
// may be null.
//
// # Safety
// Path arguments are null or NUL-terminated strings; `out` is writable.
enum CnStatus cn_dataset_load(const char *notes,
                              const char *ratings,
                              const char *raters,
                              const char *status_history,
                              struct CnDataset **out);

// Simulates a corpus with the default simulator settings, `seed` and
// `n_tweets` posts.
//
// # Safety
// `out` is writable.
enum CnStatus cn_dataset_simulate(uint64_t seed, size_t n_tweets, struct CnDataset **out);

// # Safety
// `d` is null or a handle from this library, not yet freed.
void cn_dataset_free(struct CnDataset *d);

// Zero for a null handle.
//
// # Safety
// `d` is null or a live handle.
size_t cn_dataset_note_count(const struct CnDataset *d);

// Zero for a null handle.
//
// # Safety
// `d` is null or a live handle.
size_t cn_dataset_rating_count(const struct CnDataset *d);

struct CnScoringConfig cn_scoring_config_default(void);

// Fits the bridging model. A null `cfg` uses the defaults. A fit that hits
// the iteration cap still succeeds; check `cn_scores_converged`.
//
// # Safety
// `d` is a live dataset handle; `cfg` is null or readable; `out` is
// writable.
enum CnStatus cn_score(const struct CnDataset *d,
                       const struct CnScoringConfig *cfg,
                       struct CnScores **out);

// # Safety
// `s` is null or a handle from this library, not yet freed.
void cn_scores_free(struct CnScores *s);

// False for a null handle.
//
// # Safety
// `s` is null or a live handle.
bool cn_scores_converged(const struct CnScores *s);

// Helpfulness score and status of one note. `CN_STATUS_NOT_FOUND` when the
// note has no ratings in the fit.
//
// # Safety
// `s` is a live handle; `note_id` is a NUL-terminated string; the out
// pointers are writable.
enum CnStatus cn_scores_note(const struct CnScores *s,
                             const char *note_id,
                             double *score,
                             enum CnNoteStatus *status);

// All fitted parameters and statuses as JSON. Free with `cn_string_free`.
//
// # Safety
// `s` is a live handle; `out` is writable.
enum CnStatus cn_scores_to_json(const struct CnScores *s, char **out);

// Executes one batch run described by a JSON run config (same keys as the
// TOML config file plus `command` and `out_dir`).
//
// # Safety
// `config_json` is a NUL-terminated string.
enum CnStatus cn_run_json(const char *config_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROWDNOTE_H */
