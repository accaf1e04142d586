#ifndef SCRIPTOR_H
#define SCRIPTOR_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_INVALID_ARGUMENT = 3,
  SC_STATUS_NOT_FOUND = 4,
  SC_STATUS_CONFLICT = 5,
  SC_STATUS_OUT_OF_BOUNDS = 6,
  SC_STATUS_IO = 7,
  SC_STATUS_BUFFER_TOO_SMALL = 8,
  SC_STATUS_PANIC = 9,
} ScStatus;

/**
 * Review actions for [`sc_store_decide`].
 */
typedef enum ScAction {
  SC_ACTION_ACCEPT = 0,
  SC_ACTION_REJECT = 1,
  SC_ACTION_ADJUST = 2,
} ScAction;

/**
 * Opaque handle to an annotation store.
 */
typedef struct ScStore ScStore;

/**
 * Axis-aligned box in pixels, top-left origin.
 */
typedef struct ScBox {
  uint32_t x;
  uint32_t y;
  uint32_t w;
  uint32_t h;
} ScBox;

/**
 * A box with a score, the input to [`sc_nms`].
 */
typedef struct ScScoredBox {
  struct ScBox bbox;
  double score;
} ScScoredBox;

/**
 * One row of a threshold sweep.
 */
typedef struct ScSweepPoint {
  double tau;
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  uint64_t tn;
  double accuracy;
  double f_score;
} ScSweepPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 *
 * The pointer stays valid until the next call on the same thread.
 */
const char *sc_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 */
void sc_string_free(char *s);

/**
 * Creates an in-memory store.
 */
enum ScStatus sc_store_new(struct ScStore **out);

/**
 * Opens (or creates) a store backed by the JSONL log at `path`.
 */
enum ScStatus sc_store_open(const char *path, struct ScStore **out);

/**
 * Flushes and releases a store. Null is ignored.
 */
void sc_store_free(struct ScStore *store);

/**
 * Registers the column `column_id` (`<manuscript>_<page><r|v>_c<index>`).
 *
 * `layout_columns` is 2 or 3. `scribe` may be null for unlabeled pages.
 */
enum ScStatus sc_store_register_column(struct ScStore *store,
                                       const char *column_id,
                                       uint32_t layout_columns,
                                       uint32_t page_width,
                                       uint32_t page_height,
                                       uint32_t width,
                                       uint32_t height,
                                       const char *scribe);

/**
 * Adds a pending annotation. `class` is 0 or 1, `origin` 0 template match,
 * 1 detector, 2 manual. A NaN `confidence` means none.
 */
enum ScStatus sc_store_put_annotation(struct ScStore *store,
                                      const char *column_id,
                                      struct ScBox bbox,
                                      uint8_t class_,
                                      uint8_t origin,
                                      uint32_t cycle,
                                      double confidence,
                                      uint64_t *out_id);

/**
 * Records a review decision. `bbox` is read only for `SC_ACTION_ADJUST`.
 */
enum ScStatus sc_store_decide(struct ScStore *store,
                              uint64_t id,
                              enum ScAction action,
                              const struct ScBox *bbox);

/**
 * Number of annotations in the store.
 */
enum ScStatus sc_store_count(struct ScStore *store, size_t *out);

/**
 * Current state as JSON. Free the result with [`sc_string_free`].
 */
enum ScStatus sc_store_snapshot_json(struct ScStore *store, char **out);

/**
 * Otsu threshold of a 256-bin histogram. Class 0 is `<= threshold`.
 */
enum ScStatus sc_otsu_threshold(const uint64_t *hist, uint8_t *out);

/**
 * Normalized cross-correlation of a template at every placement.
 *
 * Both images are 8-bit, row-major and unpadded. `out` receives
 * `(iw - tw + 1) * (ih - th + 1)` scores row-major; `out_len` is its
 * capacity and is checked.
 */
enum ScStatus sc_ncc_map(const uint8_t *image,
                         uint32_t iw,
                         uint32_t ih,
                         const uint8_t *tmpl,
                         uint32_t tw,
                         uint32_t th,
                         double *out,
                         size_t out_len);

/**
 * Intersection over union; 0 when both boxes are empty.
 */
double sc_iou(struct ScBox a, struct ScBox b);

/**
 * Greedy non-maximum suppression.
 *
 * Writes the indices of the kept boxes, ascending, to `keep` (capacity
 * `n`) and their count to `out_kept`.
 */
enum ScStatus sc_nms(const struct ScScoredBox *boxes,
                     size_t n,
                     double iou_thresh,
                     size_t *keep,
                     size_t *out_kept);

/**
 * Confusion counts and metrics at each threshold.
 *
 * `positive[i]` is nonzero when sample `i` belongs to the target class; a
 * sample is predicted positive when `confidence[i] >= tau`. `out` holds
 * `n_taus` points.
 */
enum ScStatus sc_sweep(const double *confidence,
                       const uint8_t *positive,
                       size_t n,
                       const double *taus,
                       size_t n_taus,
                       struct ScSweepPoint *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCRIPTOR_H */
