#ifndef VERICHAIN_H
#define VERICHAIN_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VcStatus {
  VC_STATUS_OK = 0,
  VC_STATUS_NULL_POINTER = 1,
  VC_STATUS_INVALID_ARGUMENT = 2,
  VC_STATUS_INVALID_UTF8 = 3,
  VC_STATUS_INSUFFICIENT_SAMPLES = 4,
  VC_STATUS_DEGENERATE_SAMPLE = 5,
  VC_STATUS_UNDEFINED_METRIC = 6,
  VC_STATUS_CONTRACT_VIOLATION = 7,
  VC_STATUS_CAPABILITY = 8,
  VC_STATUS_INTERNAL = 9,
  VC_STATUS_PANIC = 10,
} VcStatus;

/**
 * AUROC cells collected for a benchmark table.
 */
typedef struct VcReport VcReport;

/**
 * Sampled answers for one question.
 */
typedef struct VcSampleSet VcSampleSet;

/**
 * Uncertainty scores paired with answer correctness.
 */
typedef struct VcScoreSet VcScoreSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library from the same thread.
 */
const char *vc_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and must not be freed twice.
 */
void vc_string_free(char *s);

/**
 * ROUGE-L F1 between two texts, tokenized by lowercase whitespace split.
 *
 * # Safety
 * `reference` and `candidate` must be NUL-terminated; `out` writable.
 */
enum VcStatus vc_rouge_l_f1(const char *reference, const char *candidate, double *out);

/**
 * Fraction of inconsistent statements; `(0, 0)` gives 1.0 and sets
 * `out_degenerate`.
 *
 * # Safety
 * Out-pointers must be writable.
 */
enum VcStatus vc_uncertainty_level(size_t inconsistent,
                                   size_t total,
                                   double *out_value,
                                   bool *out_degenerate);

struct VcScoreSet *vc_score_set_new(void);

/**
 * # Safety
 * `set` must come from [`vc_score_set_new`] or be null.
 */
void vc_score_set_free(struct VcScoreSet *set);

/**
 * # Safety
 * `set` must be a live handle.
 */
enum VcStatus vc_score_set_push(struct VcScoreSet *set, double uncertainty, bool correct);

/**
 * # Safety
 * `set` must be a live handle or null (returns 0).
 */
size_t vc_score_set_len(const struct VcScoreSet *set);

/**
 * `VC_STATUS_UNDEFINED_METRIC` when only one class is present.
 *
 * # Safety
 * `set` must be a live handle; `out` writable.
 */
enum VcStatus vc_score_set_auroc(struct VcScoreSet *set, double *out);

/**
 * # Safety
 * `set` must be a live handle; `out` writable.
 */
enum VcStatus vc_score_set_accuracy(struct VcScoreSet *set, double *out);

/**
 * # Safety
 * `question` must be NUL-terminated.
 */
struct VcSampleSet *vc_sample_set_new(const char *question);

/**
 * # Safety
 * `set` must come from [`vc_sample_set_new`] or be null.
 */
void vc_sample_set_free(struct VcSampleSet *set);

/**
 * Add one generation. `logprobs` may be null when the backend had none;
 * otherwise it points to `n_logprobs` per-token log-probabilities.
 *
 * # Safety
 * `text` must be NUL-terminated; `logprobs` must be null or readable for
 * `n_logprobs` values.
 */
enum VcStatus vc_sample_set_add(struct VcSampleSet *set,
                                const char *text,
                                const double *logprobs,
                                size_t n_logprobs);

/**
 * # Safety
 * `set` must be a live handle; `out` writable.
 */
enum VcStatus vc_sample_set_lexical_similarity(struct VcSampleSet *set, double *out);

/**
 * # Safety
 * `set` must be a live handle; `out` writable.
 */
enum VcStatus vc_sample_set_predictive_entropy(struct VcSampleSet *set, double *out);

/**
 * # Safety
 * `set` must be a live handle; `out` writable.
 */
enum VcStatus vc_sample_set_length_normalized_entropy(struct VcSampleSet *set, double *out);

/**
 * Semantic entropy with a caller-supplied clustering: `cluster_ids[i]` is
 * the cluster label of generation `i`. Labels are arbitrary integers.
 *
 * # Safety
 * `set` must be a live handle; `cluster_ids` readable for `n` values;
 * `out` writable.
 */
enum VcStatus vc_sample_set_semantic_entropy(struct VcSampleSet *set,
                                             const size_t *cluster_ids,
                                             size_t n,
                                             double *out);

struct VcReport *vc_report_new(void);

/**
 * # Safety
 * `report` must come from [`vc_report_new`] or be null.
 */
void vc_report_free(struct VcReport *report);

/**
 * Add one cell. `method` is e.g. `two_phase`, `dataset` e.g. `medqa`.
 * Pass NaN as `auroc` for an undefined cell.
 *
 * # Safety
 * `report` must be a live handle; strings NUL-terminated.
 */
enum VcStatus vc_report_add_cell(struct VcReport *report,
                                 const char *model,
                                 const char *method,
                                 const char *dataset,
                                 double auroc,
                                 size_t n_items,
                                 size_t n_correct);

/**
 * Aligned text table; free the result with [`vc_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum VcStatus vc_report_render_text(struct VcReport *report, char **out);

/**
 * `model,method,dataset,auroc,n_items,n_correct` rows; free the result
 * with [`vc_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum VcStatus vc_report_render_csv(struct VcReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VERICHAIN_H */
