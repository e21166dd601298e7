#ifndef LC_PROTONETS_H
#define LC_PROTONETS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Tie tolerance used by the library's own classifiers.
#define LCPN_DEFAULT_TIE_EPSILON 1e-9

typedef enum LcpnStatus {
  LCPN_STATUS_OK = 0,
  LCPN_STATUS_NULL_POINTER = 1,
  LCPN_STATUS_INVALID_ARGUMENT = 2,
  LCPN_STATUS_DIMENSION_MISMATCH = 3,
  LCPN_STATUS_ZERO_NORM = 4,
  LCPN_STATUS_NON_FINITE = 5,
  LCPN_STATUS_CARDINALITY_ABOVE_CAP = 6,
  LCPN_STATUS_IO = 7,
  LCPN_STATUS_PARSE = 8,
  LCPN_STATUS_BUFFER_TOO_SMALL = 9,
  LCPN_STATUS_OUT_OF_RANGE = 10,
  LCPN_STATUS_PANIC = 11,
} LcpnStatus;

// Loaded manifest handle.
typedef struct LcpnDataset LcpnDataset;

// Prototype store handle.
typedef struct LcpnStore LcpnStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *lcpn_version(void);

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *lcpn_last_error_message(void);

// Cosine distance `1 - cos(u, v)`, clamped to `[0, 2]`.
//
// # Safety
// `u` and `v` must point to `dim` doubles; `out` must be writable.
enum LcpnStatus lcpn_cosine_distance(const double *u, const double *v, size_t dim, double *out);

// Builds a store from `n_items` row-major embeddings of width `dim`.
// Item `i` carries labels `labels[label_offsets[i]..label_offsets[i + 1]]`.
//
// # Safety
// `embeddings` must hold `n_items * dim` doubles, `label_offsets`
// `n_items + 1` entries and `labels` `label_offsets[n_items]` entries.
enum LcpnStatus lcpn_store_build(const double *embeddings,
                                 size_t n_items,
                                 size_t dim,
                                 const size_t *label_offsets,
                                 const size_t *labels,
                                 struct LcpnStore **out);

// Releases a store; NULL is ignored.
//
// # Safety
// `store` must come from this library and not be used afterwards.
void lcpn_store_free(struct LcpnStore *store);

// # Safety
// `store` must be a live handle; `out` must be writable.
enum LcpnStatus lcpn_store_len(const struct LcpnStore *store, size_t *out);

// # Safety
// `store` must be a live handle; `out` must be writable.
enum LcpnStatus lcpn_store_dim(const struct LcpnStore *store, size_t *out);

// Labels of class `j` in canonical order. `len_out` always receives the
// class size, also when `LCPN_STATUS_BUFFER_TOO_SMALL` is returned.
//
// # Safety
// `labels_out` must have room for `cap` entries.
enum LcpnStatus lcpn_store_class(const struct LcpnStore *store,
                                 size_t j,
                                 size_t *labels_out,
                                 size_t cap,
                                 size_t *len_out);

// New store with identical-membership prototypes merged. Predictions are
// unchanged.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum LcpnStatus lcpn_store_dedup(const struct LcpnStore *store, struct LcpnStore **out);

// Predicted label set of the nearest prototype.
//
// # Safety
// `query` must hold `dim` doubles and `labels_out` room for `cap` entries.
enum LcpnStatus lcpn_classify(const struct LcpnStore *store,
                              const double *query,
                              size_t dim,
                              double tie_epsilon,
                              size_t *labels_out,
                              size_t cap,
                              size_t *len_out);

// Loads and validates an embedding manifest.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string.
enum LcpnStatus lcpn_dataset_load(const char *path, struct LcpnDataset **out);

// Releases a dataset; NULL is ignored.
//
// # Safety
// `dataset` must come from this library and not be used afterwards.
void lcpn_dataset_free(struct LcpnDataset *dataset);

// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum LcpnStatus lcpn_dataset_len(const struct LcpnDataset *dataset, size_t *out);

// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum LcpnStatus lcpn_dataset_dim(const struct LcpnDataset *dataset, size_t *out);

// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum LcpnStatus lcpn_dataset_label_count(const struct LcpnDataset *dataset, size_t *out);

// Name of label `index`, owned by the dataset; NULL when out of range.
//
// # Safety
// `dataset` must be a live handle.
const char *lcpn_dataset_label_name(const struct LcpnDataset *dataset, size_t index);

// # Safety
// `labels_out` must have room for `cap` entries.
enum LcpnStatus lcpn_dataset_item_labels(const struct LcpnDataset *dataset,
                                         size_t item,
                                         size_t *labels_out,
                                         size_t cap,
                                         size_t *len_out);

// Copies the embedding of `item` into `out`, which must hold `cap >= dim`
// doubles.
//
// # Safety
// `out` must have room for `cap` doubles.
enum LcpnStatus lcpn_dataset_item_embedding(const struct LcpnDataset *dataset,
                                            size_t item,
                                            double *out,
                                            size_t cap);

// Builds a store from the listed dataset items.
//
// # Safety
// `items` must hold `n` indices; `out` must be writable.
enum LcpnStatus lcpn_dataset_build_store(const struct LcpnDataset *dataset,
                                         const size_t *items,
                                         size_t n,
                                         struct LcpnStore **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LC_PROTONETS_H */
