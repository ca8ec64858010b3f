#ifndef MULTIPAIR_BELL_H
#define MULTIPAIR_BELL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpbStatus {
  MPB_STATUS_OK = 0,
  MPB_STATUS_NULL_POINTER = 1,
  MPB_STATUS_INVALID_INPUT = 2,
  MPB_STATUS_CONFIG = 3,
  MPB_STATUS_UNDEFINED_METRIC = 4,
  MPB_STATUS_UNSUPPORTED = 5,
  MPB_STATUS_INVALID_UTF8 = 6,
  MPB_STATUS_PANIC = 7,
} MpbStatus;

typedef enum MpbSettingsMode {
  MPB_SETTINGS_MODE_ALPHA = 0,
  MPB_SETTINGS_MODE_ALPHA_THETA = 1,
  MPB_SETTINGS_MODE_FOUR_ANGLES = 2,
  MPB_SETTINGS_MODE_STANDARD = 3,
} MpbSettingsMode;

/**
 * Opaque CH evaluator for one scenario.
 */
typedef struct MpbEvaluator MpbEvaluator;

/**
 * State angle and the four planar measurement angles.
 */
typedef struct MpbSettings {
  double theta;
  double alice1;
  double alice2;
  double bob1;
  double bob2;
} MpbSettings;

typedef struct MpbOptimum {
  double value;
  struct MpbSettings settings;
  /**
   * Coarse grid cell the refinement started from, or -1.
   */
  int64_t grid_index;
  uint64_t refine_steps;
} MpbOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mpb_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *mpb_version(void);

/**
 * Builds an evaluator from a JSON scenario.
 *
 * # Safety
 * `scenario_json` must be a valid nul-terminated string and `out` a valid
 * pointer. Release the handle with [`mpb_evaluator_free`].
 */
enum MpbStatus mpb_evaluator_new(const char *scenario_json, struct MpbEvaluator **out);

/**
 * # Safety
 * `ev` must be null or a handle from [`mpb_evaluator_new`] not yet freed.
 */
void mpb_evaluator_free(struct MpbEvaluator *ev);

/**
 * CH value at the given state angle and settings.
 *
 * # Safety
 * `ev` must be a live handle and `out` a valid pointer.
 */
enum MpbStatus mpb_evaluator_ch(const struct MpbEvaluator *ev,
                                struct MpbSettings settings,
                                double *out);

/**
 * Maximizes CH over the parameters that `mode` frees, with default
 * optimizer settings.
 *
 * # Safety
 * `ev` must be a live handle and `out` a valid pointer.
 */
enum MpbStatus mpb_evaluator_maximize(const struct MpbEvaluator *ev,
                                      enum MpbSettingsMode mode,
                                      struct MpbOptimum *out);

/**
 * Largest white-noise fraction (Werner-equivalent for rotation noise)
 * that keeps a violation; 0 when there is none without noise.
 *
 * # Safety
 * `scenario_json` must be a valid nul-terminated string and `epsilon` a
 * valid pointer.
 */
enum MpbStatus mpb_noise_resistance(const char *scenario_json,
                                    enum MpbSettingsMode mode,
                                    double *epsilon);

/**
 * Smallest detector efficiency that keeps a violation; 1 when there is
 * none even at unit efficiency.
 *
 * # Safety
 * `scenario_json` must be a valid nul-terminated string and `eta` a valid
 * pointer.
 */
enum MpbStatus mpb_critical_efficiency(const char *scenario_json,
                                       enum MpbSettingsMode mode,
                                       double *eta);

/**
 * Entanglement in bits of `pairs` distinguishable pairs with the pairing
 * forgotten, and of the symmetric state.
 *
 * # Safety
 * Both output pointers must be valid.
 */
enum MpbStatus mpb_entanglement(uint32_t pairs, double *distinguishable, double *indistinguishable);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIPAIR_BELL_H */
