/* C interface to the ultrasr arbitrary-scale image upscaler. */

#ifndef ULTRASR_H
#define ULTRASR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum UsrStatus {
  // Success.
  USR_STATUS_OK = 0,
  // A required pointer argument was null.
  USR_STATUS_NULL_ARG = 1,
  // An argument was malformed (bad UTF-8, zero dimension, bad scale).
  USR_STATUS_INVALID_ARG = 2,
  // File I/O or checkpoint decoding failed.
  USR_STATUS_IO = 3,
  // The operation itself failed; see `usr_last_error`.
  USR_STATUS_RUNTIME = 4,
} UsrStatus;

// A loaded model: checkpoint weights plus their configuration.
typedef struct UsrModel UsrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string.
//
// The pointer is owned by the library and invalidated by the next failing
// call on the same thread. Never free it.
const char *usr_last_error(void);

// Library version as a static NUL-terminated string.
const char *usr_version(void);

// Loads a checkpoint from `ckpt_path` into a fresh handle at `*out`.
//
// On failure `*out` is left untouched. The handle must be released with
// `usr_model_free`.
//
// # Safety
// `ckpt_path` must be a valid NUL-terminated string and `out` a valid
// pointer.
enum UsrStatus usr_model_load(const char *ckpt_path, struct UsrModel **out);

// Releases a handle. Accepts null as a no-op.
//
// # Safety
// `model` must be null or a pointer obtained from `usr_model_load` that
// has not been freed yet.
void usr_model_free(struct UsrModel *model);

// Writes the model's total parameter count to `*out`.
//
// # Safety
// `model` and `out` must be valid pointers.
enum UsrStatus usr_model_param_count(const struct UsrModel *model, uint64_t *out);

// Upscales an interleaved 8-bit RGB buffer to `out_h` x `out_w`.
//
// `rgb_in` holds `in_h * in_w * 3` bytes; `rgb_out` must have room for
// `out_h * out_w * 3` bytes and is fully overwritten on success.
//
// # Safety
// All pointers must be valid for the stated extents.
enum UsrStatus usr_upscale(const struct UsrModel *model,
                           const uint8_t *rgb_in,
                           size_t in_h,
                           size_t in_w,
                           uint8_t *rgb_out,
                           size_t out_h,
                           size_t out_w);

// Upscales a PNG file by a real factor; output dims are
// `floor(scale * input dims)`.
//
// # Safety
// Both paths must be valid NUL-terminated strings.
enum UsrStatus usr_upscale_file(const struct UsrModel *model,
                                const char *input_png,
                                double scale,
                                const char *output_png);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ULTRASR_H */
