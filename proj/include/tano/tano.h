/* Copyright 2026 The TANO Authors. All Rights Reserved.
 * SPDX-License-Identifier: Apache-2.0 */

/* C interface of the TANO library. Every function returns a tano_status;
 * on failure tano_last_error() describes the error of the calling thread.
 * Options are passed as JSON objects whose keys override the defaults;
 * unknown keys are rejected. Strings returned through char** are owned by
 * the caller and released with tano_string_free. */

#ifndef TANO_TANO_H_
#define TANO_TANO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TANO_API __declspec(dllexport)
#else
#define TANO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tano_status {
  TANO_OK = 0,
  TANO_ERR_INTERNAL = 1,
  TANO_ERR_VALIDATION = 2,
  TANO_ERR_NUMERIC = 3,
  TANO_ERR_FORMAT = 4
} tano_status;

typedef enum tano_log_level {
  TANO_LOG_QUIET = 0,
  TANO_LOG_WARNING = 1,
  TANO_LOG_INFO = 2
} tano_log_level;

typedef struct tano_dataset tano_dataset;
typedef struct tano_checkpoint tano_checkpoint;

/* Called after every meta-training epoch with a JSON record
 * {"epoch", "train_loss", "train_accuracy", "val_accuracy", "lr"}. */
typedef void (*tano_progress_fn)(const char* record_json, void* user);

TANO_API const char* tano_version(void);
TANO_API const char* tano_last_error(void);
TANO_API void tano_set_log_level(tano_log_level level);
TANO_API void tano_string_free(char* s);

/* Dataset. Options: num_domains, num_classes, per_class, seed. */
TANO_API tano_status tano_dataset_generate(const char* options_json, const char* out_dir);
TANO_API tano_status tano_dataset_open(const char* dir, tano_dataset** out);
TANO_API void tano_dataset_free(tano_dataset* ds);
/* {"domains", "classes", "per_class", "seed", "splits": {...}} */
TANO_API tano_status tano_dataset_info(const tano_dataset* ds, char** info_json);

/* Checkpoints. */
TANO_API tano_status tano_checkpoint_open(const char* dir, tano_checkpoint** out);
TANO_API void tano_checkpoint_free(tano_checkpoint* ckpt);
/* Manifest summary: kind, config, epoch, best epoch, history. */
TANO_API tano_status tano_checkpoint_info(const tano_checkpoint* ckpt, char** info_json);
/* Hex digest of the checkpoint directory contents. */
TANO_API tano_status tano_checkpoint_hash(const char* dir, char** hex);

/* Backbone pretraining. Options: epochs, lr, batch_size, seed, holdout.
 * Writes a checkpoint to out_dir; summary_json receives per-epoch loss and
 * accuracy when non-null. */
TANO_API tano_status tano_pretrain(const tano_dataset* ds, const char* options_json,
                                   const char* out_dir, char** summary_json);

/* Episodic training. init is a pretrain or meta checkpoint supplying the
 * encoder and global worker, or NULL for a fresh model. resume_dir, when
 * non-NULL, is an epoch checkpoint to continue from. */
TANO_API tano_status tano_meta_train(const tano_dataset* ds, const tano_checkpoint* init,
                                     const char* options_json, const char* out_dir,
                                     const char* resume_dir, tano_progress_fn progress,
                                     void* user);

/* Episodic evaluation. Options: protocol, holdout, mode, episodes, seed,
 * ways, shots, queries, split, blend_k, variance, domain. */
TANO_API tano_status tano_evaluate(const tano_dataset* ds, const tano_checkpoint* ckpt,
                                   const char* options_json, char** report_json);

/* Normalization geometry of a trained model. */
TANO_API tano_status tano_analyze(const tano_dataset* ds, const tano_checkpoint* ckpt,
                                  uint64_t seed, size_t episodes, char** report_json);

/* Full pipeline: generate (or read data_dir), pretrain, meta-train and
 * evaluate every mode for every seed. Options: out_dir, data_dir, data,
 * pretrain, train, modes, eval_episodes, eval_queries, seeds.
 * report_text receives the table also written to out_dir/report.txt. */
TANO_API tano_status tano_run_experiment(const char* options_json, char** report_text);

#ifdef __cplusplus
}
#endif

#endif /* TANO_TANO_H_ */
