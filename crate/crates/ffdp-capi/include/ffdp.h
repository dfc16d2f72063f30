#ifndef FFDP_H
#define FFDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum FfdpStatus {
  FfdpStatus_Ok = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  FfdpStatus_InvalidArgument = 1,
  /**
   * File could not be read or written.
   */
  FfdpStatus_Io = 2,
  /**
   * Input was not valid CoNLL-U or a valid model file.
   */
  FfdpStatus_Format = 3,
  /**
   * Model/vocabulary mismatch or another internal failure.
   */
  FfdpStatus_Internal = 4,
} FfdpStatus;

/**
 * A trained model bound to its vocabulary. Opaque.
 */
typedef struct FfdpModel FfdpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on the calling thread.
 * Valid until the thread's next failing ffdp call.
 */
const char *ffdp_last_error(void);

/**
 * Trains a model and writes model.bin/vocab.txt plus run metadata
 * into `out_dir`. `system` is "arc-standard" or "swap"; `template` is
 * "standard", "no-gd" or "no-gd-d"; `reduce` is 0..50 in steps of 10.
 *
 * # Safety
 * String arguments must be null-terminated and valid for the call.
 */
enum FfdpStatus ffdp_train(const char *train_path,
                           const char *system,
                           const char *template_,
                           uint8_t reduce,
                           uint32_t epochs,
                           uint64_t seed,
                           const char *out_dir);

/**
 * Loads a model directory written by `ffdp_train`. Returns null on
 * failure; see `ffdp_last_error`. Free with `ffdp_model_free`.
 *
 * # Safety
 * `dir` must be a null-terminated string valid for the call.
 */
struct FfdpModel *ffdp_model_load(const char *dir);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from `ffdp_model_load` and not been freed.
 */
void ffdp_model_free(struct FfdpModel *model);

/**
 * Input dimensionality of the model's first layer.
 *
 * # Safety
 * `model` must be a live handle from `ffdp_model_load`.
 */
uint32_t ffdp_model_input_dim(const struct FfdpModel *model);

/**
 * Parses CoNLL-U text with the model and stores a newly allocated
 * CoNLL-U string with predicted HEAD/DEPREL in `*out`. Free the
 * result with `ffdp_string_free`.
 *
 * # Safety
 * `model` must be a live handle; `conllu` must be null-terminated;
 * `out` must point to writable storage for one pointer.
 */
enum FfdpStatus ffdp_parse(const struct FfdpModel *model, const char *conllu, char **out);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must have been returned by an ffdp function and not been freed.
 */
void ffdp_string_free(char *s);

/**
 * Scores predicted CoNLL-U against gold CoNLL-U (all tokens count)
 * and writes the labeled and unlabeled attachment scores in percent.
 *
 * # Safety
 * The strings must be null-terminated; `las`/`uas` must be writable.
 */
enum FfdpStatus ffdp_score(const char *gold, const char *predicted, double *las, double *uas);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FFDP_H */
