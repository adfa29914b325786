#ifndef DOCRE_H
#define DOCRE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define DOCRE_OK 0

#define DOCRE_ERR_ARGUMENT 1

#define DOCRE_ERR_INPUT 2

#define DOCRE_ERR_CHECKPOINT 3

#define DOCRE_ERR_NUMERIC 4

/**
 * Opaque predictor: a loaded checkpoint with its vocabulary and schema.
 */
typedef struct DocrePredictor DocrePredictor;

/**
 * Loads a predictor from a checkpoint, vocabulary file, and schema file.
 * On success writes a new handle to `out` and returns 0; the handle must be
 * released with `docre_predictor_free`.
 *
 * # Safety
 * `checkpoint_path`, `vocab_path`, and `schema_path` must be valid
 * NUL-terminated strings; `out` must be a valid pointer.
 */
int docre_predictor_load(const char *checkpoint_path,
                         const char *vocab_path,
                         const char *schema_path,
                         struct DocrePredictor **out);

/**
 * Releases a handle returned by `docre_predictor_load`. Null is a no-op.
 *
 * # Safety
 * `predictor` must be null or a handle that has not been freed yet.
 */
void docre_predictor_free(struct DocrePredictor *predictor);

/**
 * Number of relation classes the predictor distinguishes (including the
 * explicit no-relation class at id 0).
 *
 * # Safety
 * `predictor` must be a live handle.
 */
size_t docre_predictor_n_relations(const struct DocrePredictor *predictor);

/**
 * Classifies the relation from `head` to `tail` given the document `text`.
 * Writes the predicted relation id to `out_relation` and, if `out_probs` is
 * non-null, the full probability distribution to `out_probs[0..n_relations]`
 * (`probs_len` must then be at least `n_relations`).
 *
 * # Safety
 * `predictor` must be a live handle; string arguments must be valid
 * NUL-terminated strings; `out_relation` must be a valid pointer;
 * `out_probs` must be null or point to at least `probs_len` doubles.
 */
int docre_predict(const struct DocrePredictor *predictor,
                  const char *text,
                  const char *head,
                  const char *tail,
                  size_t *out_relation,
                  double *out_probs,
                  size_t probs_len);

/**
 * Writes the label of relation id `relation` as a NUL-terminated string into
 * `buf`. Returns 0, or 1 if the id is out of range or the buffer is too
 * small.
 *
 * # Safety
 * `predictor` must be a live handle; `buf` must point to at least `buf_len`
 * bytes.
 */
int docre_relation_label(const struct DocrePredictor *predictor,
                         size_t relation,
                         char *buf,
                         size_t buf_len);

/**
 * Copies the message of the most recent error on this thread into `buf` as a
 * NUL-terminated string. Returns 0, or 1 if the buffer is too small.
 *
 * # Safety
 * `buf` must be null or point to at least `buf_len` bytes.
 */
int docre_last_error(char *buf, size_t buf_len);

#endif  /* DOCRE_H */
