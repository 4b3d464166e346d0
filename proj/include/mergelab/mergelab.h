#ifndef MERGELAB_MERGELAB_H
#define MERGELAB_MERGELAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(MERGELAB_BUILDING)
#define MLAB_API __attribute__((visibility("default")))
#else
#define MLAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mlab_status {
    MLAB_OK = 0,
    MLAB_ERR_CONFIG = 2,
    MLAB_ERR_DATA = 3,
    MLAB_ERR_NUMERIC = 4,
    MLAB_ERR_IO = 5,
    MLAB_ERR_STRUCTURAL = 6,
    MLAB_ERR_DOMAIN = 7,
    MLAB_ERR_INVALID_ARG = 8,
    MLAB_ERR_INTERNAL = 9
} mlab_status;

/* Opaque handles. */
typedef struct mlab_params mlab_params;
typedef struct mlab_checkpoint mlab_checkpoint;

MLAB_API const char* mlab_version(void);

/* Message for the last failing call on this thread ("" if none). */
MLAB_API const char* mlab_last_error(void);

MLAB_API const char* mlab_status_name(mlab_status status);

/* Runs one CLI subcommand. config_path may be NULL for defaults;
 * overrides_json may be NULL or a JSON object merged over the config.
 * If summary_json is non-NULL it receives a malloc'd JSON string the caller
 * releases with mlab_free_string. */
MLAB_API mlab_status mlab_run_command(const char* name, const char* config_path, const char* overrides_json,
                                      char** summary_json);

MLAB_API void mlab_free_string(char* s);

/* Checkpoints. */
MLAB_API mlab_status mlab_checkpoint_load(const char* path, mlab_checkpoint** out);
MLAB_API mlab_status mlab_checkpoint_save(const mlab_checkpoint* ckpt, const char* path);
MLAB_API mlab_status mlab_checkpoint_params(const mlab_checkpoint* ckpt, mlab_params** out);
/* Wraps params into a checkpoint that reuses the model spec of `like`. */
MLAB_API mlab_status mlab_checkpoint_with_params(const mlab_checkpoint* like, const mlab_params* params,
                                                 mlab_checkpoint** out);
MLAB_API void mlab_checkpoint_free(mlab_checkpoint* ckpt);

/* Parameter vectors. */
MLAB_API size_t mlab_params_size(const mlab_params* p);
MLAB_API mlab_status mlab_params_copy_values(const mlab_params* p, float* out, size_t n);
MLAB_API mlab_status mlab_params_content_hash(const mlab_params* p, char out[65]);
MLAB_API void mlab_params_free(mlab_params* p);

/* tau = finetuned - pretrained. The handle also keeps the float rounding
 * error, so mlab_task_arithmetic with lambda 1 reproduces finetuned exactly. */
MLAB_API mlab_status mlab_task_vector(const mlab_params* finetuned, const mlab_params* pretrained, mlab_params** out);
/* pretrained + sum lambdas[i] * taus[i]. */
MLAB_API mlab_status mlab_task_arithmetic(const mlab_params* pretrained, const mlab_params* const* taus,
                                          const double* lambdas, size_t n, mlab_params** out);
MLAB_API mlab_status mlab_ties_merge(const mlab_params* pretrained, const mlab_params* const* taus, size_t n,
                                     double lambda, double density, mlab_params** out);

/* Per-sample coefficients from representation distances; out has n entries. */
MLAB_API mlab_status mlab_rescale_coefficients(const double* distances, size_t n, double lambda, double* out);

/* Logits of the checkpoint's model on one input. out must hold `classes` floats. */
MLAB_API mlab_status mlab_forward(const mlab_checkpoint* ckpt, const mlab_params* params, const float* x,
                                  size_t dim, float* out, size_t classes);

#ifdef __cplusplus
}
#endif

#endif
