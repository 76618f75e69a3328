/* C interface to the video object segmentation toolkit.
 *
 * Every fallible call returns a vos_status; on failure vos_last_error()
 * returns a one-line message for the calling thread. Handles are opaque and
 * released with their matching _free call.
 */
#ifndef VOS_VOS_H
#define VOS_VOS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VOS_API __declspec(dllexport)
#else
#define VOS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vos_status {
    VOS_OK = 0,
    VOS_ERR_INVALID = 1, /* bad argument, malformed file, failed precondition */
    VOS_ERR_NUMERIC = 2, /* non-finite loss or gradient during optimisation */
    VOS_ERR_IO = 3,
} vos_status;

VOS_API const char* vos_last_error(void);

/* ---- synthetic data ---- */

typedef struct vos_synthetic_config {
    size_t image_size;
    size_t train_sequences;
    size_t val_sequences;
    size_t frames;
    size_t instances;
    int exit_return;
    int crossing;
    uint64_t seed;
} vos_synthetic_config;

VOS_API void vos_synthetic_config_default(vos_synthetic_config* config);

/* Writes <out_dir>/<split>/<id>/{frames,annotations}/ and <out_dir>/index.txt. */
VOS_API vos_status vos_generate_dataset(const vos_synthetic_config* config, const char* out_dir);

/* ---- models ---- */

typedef struct vos_model vos_model;

typedef enum vos_upsample { VOS_UPSAMPLE_NEAREST_CONV = 0, VOS_UPSAMPLE_TRANSPOSED_CONV = 1 } vos_upsample;

typedef struct vos_model_config {
    const size_t* filters;
    size_t filter_count;
    int skip_connections;
    vos_upsample upsample;
    size_t input_channels;
    size_t convs_per_level;
    size_t kernel_size;
} vos_model_config;

/* U-Net defaults (skips on, nearest-conv upsampling, 4 inputs, 2 convs of 3x3)
 * for the given filter list. With skip_connections cleared and transposed-conv
 * upsampling it describes the skip-less variant. */
VOS_API void vos_model_config_default(vos_model_config* config, const size_t* filters, size_t filter_count);

VOS_API vos_status vos_model_create(const vos_model_config* config, uint64_t seed, vos_model** out);
VOS_API vos_status vos_model_load(const char* path, vos_model** out);
VOS_API vos_status vos_model_save(const vos_model* model, const char* path);
VOS_API void vos_model_free(vos_model* model);

VOS_API size_t vos_model_param_count(const vos_model* model);

/* input: n x channels x h x w doubles; output: n x h x w probabilities. */
VOS_API vos_status vos_model_forward(const vos_model* model, const double* input, size_t n, size_t h, size_t w,
                                     double* output);

/* ---- training ---- */

typedef enum vos_loss { VOS_LOSS_WEIGHTED_CE = 0, VOS_LOSS_DICE = 1, VOS_LOSS_UNWEIGHTED_CE = 2 } vos_loss;
typedef enum vos_optimizer { VOS_OPTIMIZER_ADAM = 0, VOS_OPTIMIZER_SGD = 1 } vos_optimizer;

typedef struct vos_hyperparams {
    double learning_rate;
    size_t batch_size;
    size_t max_iterations;
    vos_loss loss;
    vos_optimizer optimizer;
    double beta1;
    double beta2;
    double epsilon;
    uint64_t seed;
    size_t finetune_iterations;
    double finetune_learning_rate; /* default 1e-4; 0 uses learning_rate */
    size_t val_every;              /* 0 disables validation logging */
    size_t val_samples;
    int shuffle;
} vos_hyperparams;

VOS_API void vos_hyperparams_default(vos_hyperparams* hp);

typedef void (*vos_progress_fn)(size_t iteration, double loss, void* user);

/* Trains `model` in place on the train split of the dataset at `data_root`,
 * validating on its val split. Writes <run_dir>/train_log.csv and
 * <run_dir>/val_log.csv. On VOS_ERR_NUMERIC the model keeps its last finite
 * parameters. */
VOS_API vos_status vos_train_parent(vos_model* model, const char* data_root, const vos_hyperparams* hp,
                                    const char* run_dir, vos_progress_fn progress, void* user);

/* Copies `parent` and fits the copy to instance `instance` (1-based label)
 * of the first annotated frame of the sequence at `sequence_dir`. */
VOS_API vos_status vos_finetune(const vos_model* parent, const char* sequence_dir, size_t instance,
                                const vos_hyperparams* hp, vos_model** out);

/* Number of instances in a sequence's first-frame annotation. */
VOS_API vos_status vos_sequence_instances(const char* sequence_dir, size_t* out);

/* Predicts every frame of the sequence at `sequence_dir` and writes
 * <out_dir>/<sequence-id>/annotations/NNNNN.pgm. `models` holds one model per
 * instance, or a single model shared by all instances. */
VOS_API vos_status vos_predict_sequence(const vos_model* const* models, size_t model_count, const char* sequence_dir,
                                        const char* out_dir);

/* ---- evaluation ---- */

/* Scores every sequence under `pred_root` against the matching sequence
 * under `gt_root`; writes report.txt, report.csv and frames.csv to out_dir.
 * A negative tolerance selects the default of ceil(0.8% of the diagonal). */
VOS_API vos_status vos_evaluate(const char* pred_root, const char* gt_root, double tolerance, const char* out_dir,
                                double* j_mean, double* f_mean);

/* ---- gradient verification ---- */

typedef struct vos_grad_result {
    char op[32];
    double max_rel_error;
    size_t checked;
    size_t skipped;
} vos_grad_result;

/* Runs the finite-difference suite over seeds seed..seed+trials-1. Fills up to
 * `capacity` results and stores the number of ops in *count. */
VOS_API vos_status vos_gradcheck(uint64_t seed, size_t trials, vos_grad_result* results, size_t capacity,
                                 size_t* count);

#ifdef __cplusplus
}
#endif

#endif
