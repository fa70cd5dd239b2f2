#ifndef ECOSAMPLER_H
#define ECOSAMPLER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Day-of-year value used for an absent transition.
 */
#define ES_DAY_MISSING -1

/**
 * Status codes returned by every entry point.
 */
typedef enum EsStatus {
  EsOk = 0,
  /**
   * a required pointer argument was null
   */
  EsNullArgument = 1,
  /**
   * invalid argument or state
   */
  EsInvalid = 2,
  /**
   * file could not be read or written
   */
  EsIo = 3,
  /**
   * input file was syntactically malformed
   */
  EsDecode = 4,
  /**
   * data violated a documented rule
   */
  EsValidation = 5,
  /**
   * internal panic; state may be inconsistent
   */
  EsPanic = 6,
} EsStatus;

/**
 * Opaque grid handle: a spacing spec plus the generated points, if any.
 */
typedef struct EsGrid EsGrid;

/**
 * Opaque handle over a loaded dataset manifest.
 */
typedef struct EsManifest EsManifest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes, or be null (query mode).
 */
uintptr_t es_last_error_message(char *buf, uintptr_t cap);

/**
 * Creates a grid spec handle. `spacing_km <= 0` is rejected.
 */
enum EsStatus es_grid_new(double spacing_km, struct EsGrid **out);

/**
 * Releases a grid handle. Null is a no-op.
 */
void es_grid_free(struct EsGrid *grid);

/**
 * Number of latitude rows for the grid spacing.
 */
enum EsStatus es_grid_row_count(const struct EsGrid *grid, uintptr_t *out);

/**
 * Number of candidate points in the row at `lat` degrees.
 */
enum EsStatus es_grid_row_point_count(const struct EsGrid *grid, double lat, uintptr_t *out);

/**
 * Generates grid points over the land-mask raster stem (`<stem>.json` +
 * `<stem>.bin`); the points stay inside the handle.
 */
enum EsStatus es_grid_generate(struct EsGrid *grid, const char *mask_path);

/**
 * Number of generated points in the handle.
 */
enum EsStatus es_grid_point_count(const struct EsGrid *grid, uintptr_t *out);

/**
 * Fetches point `index` as (id, lat, lon).
 */
enum EsStatus es_grid_point(const struct EsGrid *grid,
                            uintptr_t index,
                            uint64_t *out_id,
                            double *out_lat,
                            double *out_lon);

/**
 * Great-circle distance in km between two (lat, lon) pairs.
 */
enum EsStatus es_haversine_km(double lat1, double lon1, double lat2, double lon2, double *out);

/**
 * Detects the four transition days from a daily EVI curve. `values` holds
 * `len` daily values for `year`; NaN marks missing days. Outputs are 1-based
 * days or `ES_DAY_MISSING`.
 */
enum EsStatus es_detect_transitions(int32_t year,
                                    const double *values,
                                    uintptr_t len,
                                    double low_fraction,
                                    double high_fraction,
                                    int32_t *out_days);

/**
 * Season derivation from transition days (phenological mode when
 * `calendar_mode` is 0). Arrays hold spring, summer, autumn, winter.
 * `out_fallback` is set to 1 when degenerate ordering forced calendar mode.
 */
enum EsStatus es_season_windows(int32_t greenup,
                                int32_t maturity,
                                int32_t senescence,
                                int32_t dormancy,
                                uint32_t year_length,
                                int32_t calendar_mode,
                                uint32_t *out_start,
                                uint32_t *out_length,
                                uint32_t *out_target,
                                int32_t *out_fallback);

/**
 * Pretraining weight for a location. `ndvi` holds 4 seasonal means with NaN
 * for missing seasons; `is_mountain` is 0 or 1.
 */
enum EsStatus es_location_weight(const double *ndvi, int32_t is_mountain, double *out_weight);

/**
 * Kullback-Leibler divergence between two length-`len` distributions.
 */
enum EsStatus es_kl_divergence(const double *p, const double *q, uintptr_t len, double *out);

/**
 * Loads a JSON-lines manifest from `path`.
 */
enum EsStatus es_manifest_open(const char *path, struct EsManifest **out);

/**
 * Releases a manifest handle. Null is a no-op.
 */
void es_manifest_free(struct EsManifest *m);

/**
 * Number of location records in the manifest.
 */
enum EsStatus es_manifest_len(const struct EsManifest *m, uintptr_t *out);

/**
 * Runs the full manifest validity check.
 */
enum EsStatus es_manifest_validate(const struct EsManifest *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECOSAMPLER_H */
