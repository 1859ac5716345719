/* C interface to the compressive-sensing reconstruction core.
 *
 * Conventions:
 *   - images are row-major float buffers in [0, 1], length h * w
 *   - every function that can fail returns fscs_status; on failure
 *     fscs_last_error() describes the problem (thread-local)
 *   - objects returned through out-parameters are owned by the caller and
 *     released with the matching *_destroy / fscs_free call
 */
#ifndef FSCS_H
#define FSCS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FSCS_API __declspec(dllexport)
#else
#define FSCS_API __attribute__((visibility("default")))
#endif

typedef enum fscs_status {
    FSCS_OK = 0,
    FSCS_ERROR = 1,            /* generic failure */
    FSCS_INVALID_ARGUMENT = 2, /* bad configuration or input */
    FSCS_NUMERIC_ERROR = 3,    /* divergence / non-finite values */
    FSCS_IO_ERROR = 4          /* file could not be read or written */
} fscs_status;

FSCS_API const char* fscs_version(void);
FSCS_API const char* fscs_last_error(void);
FSCS_API void fscs_free(void* p);

/* ---- model ---- */

typedef struct fscs_model fscs_model;

typedef enum fscs_mode {
    FSCS_MODE_FSOINET = 0,
    FSCS_MODE_OINET = 1,
    FSCS_MODE_VNET = 2
} fscs_mode;

typedef enum fscs_precision { FSCS_PRECISION_F32 = 0, FSCS_PRECISION_F64 = 1 } fscs_precision;

typedef struct fscs_model_desc {
    double ratio;        /* sampling ratio r in (0, 1] */
    int32_t block_side;  /* sqrt(N), e.g. 32 */
    int32_t channels;    /* feature channels C */
    int32_t phases;      /* phase count N_k */
    int32_t mode;        /* fscs_mode */
    int32_t precision;   /* fscs_precision */
    uint64_t seed;
} fscs_model_desc;

FSCS_API fscs_status fscs_model_create(const fscs_model_desc* desc, fscs_model** out);
FSCS_API fscs_status fscs_model_load(const char* path, fscs_model** out);
FSCS_API fscs_status fscs_model_save(const fscs_model* model, const char* path);
FSCS_API void fscs_model_destroy(fscs_model* model);
FSCS_API fscs_status fscs_model_get_desc(const fscs_model* model, fscs_model_desc* out);
FSCS_API uint64_t fscs_model_param_count(const fscs_model* model);

/* Pads internally, samples, reconstructs, crops back. out_rec (and optional
 * out_init) must hold h * w floats. */
FSCS_API fscs_status fscs_model_reconstruct(const fscs_model* model, const float* image,
                                            int32_t h, int32_t w, float* out_rec,
                                            float* out_init);

/* ---- classical proximal-gradient baseline ---- */

typedef struct fscs_pgd_desc {
    double ratio;
    int32_t block_side;
    uint64_t seed;
    int32_t orthonormal_rows;   /* orthonormalize the Gaussian matrix rows */
    double step_size;           /* <= 0 selects 1/sigma_max^2 automatically */
    double reg_weight;          /* lambda */
    int32_t max_iters;
    double tolerance;           /* relative iterate-change stop */
    int32_t continuation;       /* geometric lambda continuation */
    double continuation_init;
    double continuation_decay;
} fscs_pgd_desc;

/* residual_history (optional) must hold max_iters + 1 doubles; entry 0 is the
 * residual of the initial estimate. out_hist_len receives the entry count. */
FSCS_API fscs_status fscs_pgd_reconstruct(const float* image, int32_t h, int32_t w,
                                          const fscs_pgd_desc* desc, float* out_rec,
                                          double* residual_history, int32_t* out_hist_len);

/* ---- training ---- */

typedef struct fscs_train_desc {
    const char* dataset_dir;
    int32_t patch_size;
    int32_t patch_stride;
    int32_t patch_limit;    /* 0 = keep all */
    int32_t augment;
    int32_t batch_size;
    int32_t epochs;
    double base_lr;
    double final_lr;
    double warmup_epochs;
    double gamma;
    uint64_t seed;
    int32_t checkpoint_every;     /* epochs between intermediate saves, 0 = off */
    const char* checkpoint_path;  /* optional */
    const char* log_csv_path;     /* optional */
    int32_t threads;              /* 0 = auto */
} fscs_train_desc;

typedef void (*fscs_epoch_callback)(void* user, int32_t epoch, double mean_loss, double mean_mse,
                                    double mean_orth, double lr);

typedef struct fscs_train_report {
    int32_t epochs_run;
    double first_epoch_loss;
    double final_epoch_loss;
    double initial_orth;
    double final_orth;
} fscs_train_report;

FSCS_API fscs_status fscs_train_run(fscs_model* model, const fscs_train_desc* desc,
                                    fscs_epoch_callback on_epoch, void* user,
                                    fscs_train_report* out_report);

/* ---- evaluation and metrics ---- */

typedef struct fscs_eval_report fscs_eval_report;

FSCS_API fscs_status fscs_evaluate_dir(const fscs_model* model, const char* dir,
                                       int32_t quantize_8bit, fscs_eval_report** out);
FSCS_API int32_t fscs_eval_report_count(const fscs_eval_report* report);
FSCS_API const char* fscs_eval_report_name(const fscs_eval_report* report, int32_t i);
FSCS_API double fscs_eval_report_psnr(const fscs_eval_report* report, int32_t i);
FSCS_API double fscs_eval_report_ssim(const fscs_eval_report* report, int32_t i);
FSCS_API double fscs_eval_report_mean_psnr(const fscs_eval_report* report);
FSCS_API double fscs_eval_report_mean_ssim(const fscs_eval_report* report);
FSCS_API fscs_status fscs_eval_report_write_csv(const fscs_eval_report* report, const char* path);
FSCS_API void fscs_eval_report_destroy(fscs_eval_report* report);

FSCS_API fscs_status fscs_psnr(const float* a, const float* b, int32_t h, int32_t w, double* out);
FSCS_API fscs_status fscs_ssim(const float* a, const float* b, int32_t h, int32_t w, double* out);

/* ---- image files ---- */

/* Reads PGM (binary 8-bit) or PNG (8-bit gray/RGB); color converts to the
 * BT.601 Y channel. *out_pixels is allocated with fscs_free semantics. */
FSCS_API fscs_status fscs_image_read(const char* path, float** out_pixels, int32_t* out_h,
                                     int32_t* out_w);
/* .png suffix writes PNG, anything else binary PGM */
FSCS_API fscs_status fscs_image_write(const char* path, const float* pixels, int32_t h,
                                      int32_t w);

/* Deterministic procedural grayscale dataset (PGM files) for experiments. */
FSCS_API fscs_status fscs_generate_dataset(const char* dir, int32_t count, int32_t size,
                                           uint64_t seed);

/* ---- verification ---- */

typedef void (*fscs_verify_callback)(void* user, const char* name, int32_t passed,
                                     const char* detail);

/* Runs the operator property suites. Returns the number of failed checks,
 * or -1 on setup failure. fault_injection (optional) corrupts a named
 * backward path so the failure reporting itself can be exercised. */
FSCS_API int32_t fscs_verify_run(const char* fault_injection, fscs_verify_callback on_check,
                                 void* user);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FSCS_H */
