#ifndef SLNET_H
#define SLNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Scene selection passed to the detector.
 */
#define SLNET_CHOICE_AUTO 0

#define SLNET_CHOICE_STATIC 1

#define SLNET_CHOICE_DYNAMIC 2

typedef enum {
  SLNET_SCENE_STATIC = 0,
  SLNET_SCENE_DYNAMIC = 1,
  /**
   * Sequence without a scene label.
   */
  SLNET_SCENE_UNKNOWN = 2,
} SlnetScene;

typedef enum {
  SLNET_STATUS_OK = 0,
  SLNET_STATUS_NULL_POINTER = 1,
  SLNET_STATUS_INVALID_ARGUMENT = 2,
  SLNET_STATUS_CONFIG = 3,
  SLNET_STATUS_DATA = 4,
  SLNET_STATUS_CHECKPOINT = 5,
  SLNET_STATUS_IO = 6,
  SLNET_STATUS_SHAPE = 7,
  SLNET_STATUS_SCENE_MISMATCH = 8,
  SLNET_STATUS_NUMERIC = 9,
  SLNET_STATUS_PANIC = 10,
} SlnetStatus;

typedef struct SlnetConfig SlnetConfig;

typedef struct SlnetDetections SlnetDetections;

typedef struct SlnetDetector SlnetDetector;

typedef struct SlnetSequence SlnetSequence;

typedef struct {
  uint32_t frame_index;
  uint32_t class_id;
  uint32_t range_idx;
  uint32_t azimuth_idx;
  float confidence;
} SlnetDetection;

typedef struct {
  /**
   * Mean precision over the configured OLS thresholds, in [0, 1].
   */
  double ap;
  /**
   * Mean recall over the configured OLS thresholds, in [0, 1].
   */
  double ar;
  uint64_t num_ground_truth;
  uint64_t num_detections;
} SlnetMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *slnet_version(void);

/**
 * Message of the most recent failure on this thread, or NULL.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *slnet_last_error(void);

/**
 * Built-in desk-scale configuration.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
SlnetStatus slnet_config_default(SlnetConfig **out);

/**
 * Parse and validate a TOML configuration file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid for writing a pointer.
 */
SlnetStatus slnet_config_load(const char *path, SlnetConfig **out);

/**
 * Parse and validate configuration text.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be valid for writing a pointer.
 */
SlnetStatus slnet_config_from_toml(const char *text, SlnetConfig **out);

/**
 * # Safety
 * `cfg` must come from a `slnet_config_*` constructor.
 */
SlnetStatus slnet_config_set_seed(SlnetConfig *cfg, uint64_t seed);

/**
 * Replace the dataset root and/or output directory; NULL keeps a value.
 *
 * # Safety
 * `cfg` must be a live handle; non-NULL strings must be NUL-terminated.
 */
SlnetStatus slnet_config_set_paths(SlnetConfig *cfg,
                                   const char *dataset_root,
                                   const char *output_dir);

/**
 * # Safety
 * `cfg` must be NULL or a live handle, freed at most once.
 */
void slnet_config_free(SlnetConfig *cfg);

/**
 * Synthesize the configured dataset under its root.
 *
 * # Safety
 * `cfg` must be a live handle; `num_sequences` may be NULL.
 */
SlnetStatus slnet_gen_data(const SlnetConfig *cfg, size_t *num_sequences);

/**
 * Run universal training, both fine-tunes and the classifier, writing
 * checkpoints under the output directory.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
SlnetStatus slnet_train(const SlnetConfig *cfg);

/**
 * Read a sequence directory (frames, metadata, optional annotations).
 *
 * # Safety
 * `dir` must be NUL-terminated; `out` must be valid for writing a pointer.
 */
SlnetStatus slnet_sequence_open(const char *dir, SlnetSequence **out);

/**
 * Any output pointer may be NULL.
 *
 * # Safety
 * `seq` must be a live handle.
 */
SlnetStatus slnet_sequence_info(const SlnetSequence *seq,
                                size_t *num_frames,
                                size_t *grid_size,
                                SlnetScene *scene);

/**
 * # Safety
 * `seq` must be NULL or a live handle, freed at most once.
 */
void slnet_sequence_free(SlnetSequence *seq);

/**
 * Load the scene classifier (needed for `SLNET_CHOICE_AUTO`); detector
 * branches load on first use.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for writing a pointer.
 */
SlnetStatus slnet_detector_open(const SlnetConfig *cfg, uint32_t scene_choice, SlnetDetector **out);

/**
 * Detect objects in a sequence through the scene switch.
 *
 * With `postprocess == 0` the raw L-NMS peaks are returned instead of the
 * scene-constrained detections.
 *
 * # Safety
 * `det` and `seq` must be live handles; `out` must be valid for writing a pointer.
 */
SlnetStatus slnet_detector_run(SlnetDetector *det,
                               const SlnetSequence *seq,
                               uint32_t scene_choice,
                               int32_t postprocess,
                               SlnetDetections **out);

/**
 * # Safety
 * `det` must be NULL or a live handle, freed at most once.
 */
void slnet_detector_free(SlnetDetector *det);

/**
 * Number of detections; 0 for NULL.
 *
 * # Safety
 * `dets` must be NULL or a live handle.
 */
size_t slnet_detections_len(const SlnetDetections *dets);

/**
 * Scene whose branch produced the detections.
 *
 * # Safety
 * `dets` must be a live handle; `out` must be writable.
 */
SlnetStatus slnet_detections_scene(const SlnetDetections *dets, SlnetScene *out);

/**
 * Copy up to `capacity` detections into `buf`, sorted by frame, then
 * descending confidence.
 *
 * # Safety
 * `dets` must be a live handle; `buf` must hold `capacity` elements;
 * `written` must be writable.
 */
SlnetStatus slnet_detections_copy(const SlnetDetections *dets,
                                  SlnetDetection *buf,
                                  size_t capacity,
                                  size_t *written);

/**
 * # Safety
 * `dets` must be NULL or a live handle, freed at most once.
 */
void slnet_detections_free(SlnetDetections *dets);

/**
 * Score detections against the sequence's annotations.
 *
 * # Safety
 * All handles must be live; `out` must be writable.
 */
SlnetStatus slnet_evaluate(const SlnetConfig *cfg,
                           const SlnetSequence *seq,
                           const SlnetDetections *dets,
                           SlnetMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLNET_H */
