#ifndef POIKIT_H
#define POIKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; 2 to 4 agree with the command-line exit codes.
typedef enum PoiStatus {
  POI_STATUS_OK = 0,
  // NULL pointer, bad UTF-8 or a too-small output buffer.
  POI_STATUS_INVALID_ARGUMENT = 1,
  POI_STATUS_CONFIG = 2,
  POI_STATUS_DATA = 3,
  POI_STATUS_NUMERICAL = 4,
  // A Rust panic was caught at the boundary.
  POI_STATUS_INTERNAL = 5,
} PoiStatus;

// Curves on an equidistant grid plus responses.
typedef struct PoiDataset PoiDataset;

// Result of the threshold detector.
typedef struct PoiEstimate PoiEstimate;

// Result of the BIC search over candidate subsets and lags.
typedef struct PoiSelection PoiSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *poi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *poi_version(void);

// Builds a dataset from `n x p` curves in row-major order and `n` responses
// on an equidistant grid over `[a, b]`.
//
// # Safety
// `curves` must point to `n * p` doubles and `responses` to `n` doubles.
enum PoiStatus poi_dataset_new(const double *curves,
                               const double *responses,
                               size_t n,
                               size_t p,
                               double a,
                               double b,
                               struct PoiDataset **out);

// Draws `n` curves on `p` points of `[0, 1]` with responses from one of the
// built-in designs, named "DGP1" to "DGP5".
//
// # Safety
// `dgp` must be a NUL-terminated string.
enum PoiStatus poi_dataset_simulate(const char *dgp,
                                    size_t n,
                                    size_t p,
                                    uint64_t seed,
                                    struct PoiDataset **out);

// # Safety
// `data` must be NULL or a handle from this library not yet freed.
void poi_dataset_free(struct PoiDataset *data);

// # Safety
// `data` must be a live handle; `n` and `p` writable.
enum PoiStatus poi_dataset_shape(const struct PoiDataset *data, size_t *n, size_t *p);

// Runs the threshold detector. `config_json` holds detector settings
// (`delta`, `threshold_a`, `difference_order`, `max_candidates`, `center`)
// or is NULL for the defaults.
//
// # Safety
// `data` must be a live handle; `config_json` NULL or NUL-terminated.
enum PoiStatus poi_estimate(const struct PoiDataset *data,
                            const char *config_json,
                            struct PoiEstimate **out);

// # Safety
// `est` must be NULL or a handle from this library not yet freed.
void poi_estimate_free(struct PoiEstimate *est);

// Number of selected points, the lag `delta` and the threshold `lambda`.
//
// # Safety
// `est` must be a live handle; outputs writable.
enum PoiStatus poi_estimate_summary(const struct PoiEstimate *est,
                                    size_t *s_hat,
                                    double *delta,
                                    double *lambda);

// Grid indices (0-based) and locations of the selected points, in
// extraction order. Either buffer may be NULL when `cap` is 0.
//
// # Safety
// Buffers must hold `cap` elements; `written` writable.
enum PoiStatus poi_estimate_selected(const struct PoiEstimate *est,
                                     size_t *indices,
                                     double *locations,
                                     size_t cap,
                                     size_t *written);

// All candidates' locations in extraction order.
//
// # Safety
// `locations` must hold `cap` doubles; `written` writable.
enum PoiStatus poi_estimate_candidates(const struct PoiEstimate *est,
                                       double *locations,
                                       size_t cap,
                                       size_t *written);

// BIC best-subset search. `k_grid` may be NULL (with `k_len` 0) for the
// default lag grid; `limits_json` may be NULL for default limits. `link`
// is 0 for logit and 1 for identity.
//
// # Safety
// `data` must be a live handle; `k_grid` must hold `k_len` elements.
enum PoiStatus poi_select(const struct PoiDataset *data,
                          const size_t *k_grid,
                          size_t k_len,
                          uint32_t link,
                          const char *limits_json,
                          struct PoiSelection **out);

// # Safety
// `sel` must be NULL or a handle from this library not yet freed.
void poi_selection_free(struct PoiSelection *sel);

// Number of selected points, chosen lag and BIC of the winning model.
//
// # Safety
// `sel` must be a live handle; outputs writable.
enum PoiStatus poi_selection_summary(const struct PoiSelection *sel,
                                     size_t *s_hat,
                                     double *delta,
                                     double *bic);

// Selected grid indices and locations, ascending.
//
// # Safety
// Buffers must hold `cap` elements; `written` writable.
enum PoiStatus poi_selection_selected(const struct PoiSelection *sel,
                                      size_t *indices,
                                      double *locations,
                                      size_t cap,
                                      size_t *written);

// Coefficients of the winning model, intercept first.
//
// # Safety
// `beta` must hold `cap` doubles; `written` writable.
enum PoiStatus poi_selection_coefficients(const struct PoiSelection *sel,
                                          double *beta,
                                          size_t cap,
                                          size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POIKIT_H */
