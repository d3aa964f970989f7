#ifndef METAEMBED_H
#define METAEMBED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MeStatus {
  ME_STATUS_OK = 0,
  ME_STATUS_NULL_POINTER = 1,
  ME_STATUS_INVALID_ARGUMENT = 2,
  ME_STATUS_IO = 3,
  ME_STATUS_PARSE = 4,
  ME_STATUS_NUMERICAL = 5,
  ME_STATUS_CHECKPOINT = 6,
  ME_STATUS_PANIC = 7,
} MeStatus;

// Interaction data loaded from a directory written by `metaembed prepare`.
typedef struct MeDataset MeDataset;

// A checkpoint bound to a dataset, with entity embeddings precomputed.
typedef struct MeModel MeModel;

// Parameter counts of a loaded model.
typedef struct MeParamAudit {
  size_t coarse_assignment_nnz;
  size_t coarse_codebook;
  size_t fine_assignment_nnz;
  size_t fine_codebook_nnz;
  size_t total;
} MeParamAudit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer stays
// valid until the next `me_*` call on the same thread.
const char *me_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *me_version(void);

// Loads a prepared dataset directory.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a writable pointer.
enum MeStatus me_dataset_load(const char *dir, struct MeDataset **out);

// # Safety
// `dataset` must come from [`me_dataset_load`] and not be used afterwards. Null is ignored.
void me_dataset_free(struct MeDataset *dataset);

// # Safety
// `dataset` must be a live handle; the out pointers must be writable.
enum MeStatus me_dataset_shape(const struct MeDataset *dataset,
                               size_t *num_users,
                               size_t *num_items);

// Loads a checkpoint and binds it to `dataset`, which must be the one it was trained
// on. The dataset handle may be freed afterwards.
//
// # Safety
// `dataset` must be a live handle, `path` a NUL-terminated string and `out` writable.
enum MeStatus me_model_load(const struct MeDataset *dataset,
                            const char *path,
                            struct MeModel **out);

// # Safety
// `model` must come from [`me_model_load`] and not be used afterwards. Null is ignored.
void me_model_free(struct MeModel *model);

// Predicted preference of `user` for `item`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MeStatus me_model_score(const struct MeModel *model, size_t user, size_t item, double *out);

// Writes up to `capacity` item indices, best first, into `items` and their count into
// `written`. Training items of the user are skipped when `exclude_train` is non-zero.
//
// # Safety
// `model` must be a live handle, `items` must hold `capacity` elements (it may be null
// when `capacity` is 0) and `written` must be writable.
enum MeStatus me_model_recommend(const struct MeModel *model,
                                 size_t user,
                                 int32_t exclude_train,
                                 size_t *items,
                                 size_t capacity,
                                 size_t *written);

// Stored-parameter counts of the model.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MeStatus me_model_audit(const struct MeModel *model, struct MeParamAudit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METAEMBED_H */
