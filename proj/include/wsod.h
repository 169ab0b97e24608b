#ifndef WSOD_H
#define WSOD_H

/* C interface to the weakly supervised detection library. Every object is an
 * opaque handle released by its matching *_free function. Functions return a
 * wsod_status; on failure wsod_last_error() describes the problem (per
 * thread). Strings returned through char** are owned by the caller and must be
 * released with wsod_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WSOD_API __declspec(dllexport)
#else
#define WSOD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wsod_status {
  WSOD_OK = 0,
  WSOD_ERR_INTERNAL = 1,
  WSOD_ERR_CONFIG = 2,
  WSOD_ERR_DATA = 3,
  WSOD_ERR_SHAPE = 4,
  WSOD_ERR_NUMERIC = 5,
  WSOD_ERR_IO = 6,
  WSOD_ERR_CHECKPOINT = 7,
  WSOD_ERR_ARGUMENT = 8
} wsod_status;

typedef enum wsod_mode { WSOD_MODE_RGB = 0, WSOD_MODE_FUSED = 1, WSOD_MODE_DEPTH = 2 } wsod_mode;

typedef struct wsod_config wsod_config;
typedef struct wsod_vocab wsod_vocab;
typedef struct wsod_dataset wsod_dataset;
typedef struct wsod_priors wsod_priors;
typedef struct wsod_model wsod_model;
typedef struct wsod_detections wsod_detections;

typedef struct wsod_detection {
  const char* image_id; /* valid while the owning wsod_detections lives */
  int class_id;
  double box[4]; /* x1, y1, x2, y2 */
  double score;
} wsod_detection;

WSOD_API const char* wsod_version(void);
WSOD_API const char* wsod_last_error(void);
WSOD_API const char* wsod_status_name(wsod_status status);
WSOD_API void wsod_string_free(char* s);

/* Configuration */
WSOD_API wsod_status wsod_config_new(wsod_config** out);
WSOD_API wsod_status wsod_config_load(const char* path, wsod_config** out);
/* value is JSON text ("0.1", "true", "\"gt\"") or a bare word ("on", "gt"). */
WSOD_API wsod_status wsod_config_set(wsod_config* cfg, const char* key, const char* value);
/* Applies WSOD_SEED from the environment when it is set. */
WSOD_API wsod_status wsod_config_apply_env(wsod_config* cfg);
WSOD_API wsod_status wsod_config_validate(const wsod_config* cfg);
WSOD_API wsod_status wsod_config_to_json(const wsod_config* cfg, char** out);
WSOD_API wsod_status wsod_config_seed(const wsod_config* cfg, uint64_t* out);
/* JSON text of one dotted key, e.g. "infer.mode" -> "\"rgb\"". */
WSOD_API wsod_status wsod_config_get(const wsod_config* cfg, const char* key, char** out);
WSOD_API void wsod_config_free(wsod_config* cfg);

/* Class vocabulary */
WSOD_API wsod_status wsod_vocab_load(const char* path, wsod_vocab** out);
WSOD_API wsod_status wsod_vocab_save(const wsod_vocab* vocab, const char* path);
WSOD_API size_t wsod_vocab_size(const wsod_vocab* vocab);
WSOD_API void wsod_vocab_free(wsod_vocab* vocab);

/* Datasets (JSON Lines) */
WSOD_API wsod_status wsod_dataset_load(const char* path, const wsod_vocab* vocab, wsod_dataset** out);
WSOD_API wsod_status wsod_dataset_save(const wsod_dataset* data, const char* path);
WSOD_API size_t wsod_dataset_size(const wsod_dataset* data);
/* Synthetic data from the config's synthetic.* keys, drawn with `seed`. */
WSOD_API wsod_status wsod_generate_synthetic(const wsod_config* cfg, uint64_t seed, wsod_dataset** data_out,
                                             wsod_vocab** vocab_out);
/* Replaces every record's labels with those matched in its caption; records
 * without a caption get an empty label list. `labeled` receives the number of
 * records with at least one label (may be NULL). */
WSOD_API wsod_status wsod_dataset_extract_labels(wsod_dataset* data, const wsod_vocab* vocab, size_t* labeled);
WSOD_API void wsod_dataset_free(wsod_dataset* data);

/* Detections (JSON Lines) */
WSOD_API wsod_status wsod_detections_load(const char* path, wsod_detections** out);
WSOD_API wsod_status wsod_detections_save(const wsod_detections* dets, const char* path);
WSOD_API size_t wsod_detections_size(const wsod_detections* dets);
WSOD_API wsod_status wsod_detections_get(const wsod_detections* dets, size_t index, wsod_detection* out);
WSOD_API void wsod_detections_free(wsod_detections* dets);

/* Depth priors */
WSOD_API wsod_status wsod_priors_estimate(const wsod_dataset* data, const wsod_detections* predictions,
                                          const wsod_config* cfg, const wsod_vocab* vocab, wsod_priors** out,
                                          char** summary_json);
WSOD_API wsod_status wsod_priors_load(const char* path, wsod_priors** out);
WSOD_API wsod_status wsod_priors_save(const wsod_priors* priors, const char* path);
WSOD_API void wsod_priors_free(wsod_priors* priors);

/* Training and inference. `priors` and `eval_data` may be NULL. */
WSOD_API wsod_status wsod_train(const wsod_config* cfg, const wsod_dataset* data, const wsod_vocab* vocab,
                                const wsod_priors* priors, const wsod_dataset* eval_data, wsod_model** model_out,
                                char** report_json);
WSOD_API wsod_status wsod_model_load(const char* path, wsod_model** out);
WSOD_API wsod_status wsod_model_save(wsod_model* model, const char* path);
WSOD_API void wsod_model_free(wsod_model* model);

WSOD_API wsod_status wsod_parse_mode(const char* name, wsod_mode* out);
/* Uses infer.min_score, eval.nms_thresh and model.sigma_on_sum from cfg. */
WSOD_API wsod_status wsod_infer(const wsod_model* model, const wsod_dataset* data, const wsod_config* cfg,
                                wsod_mode mode, wsod_detections** out);

/* Evaluation; `vocab` may be NULL. table receives a fixed-width summary. */
WSOD_API wsod_status wsod_evaluate(const wsod_detections* dets, const wsod_dataset* data, const wsod_config* cfg,
                                   const wsod_vocab* vocab, char** report_json, char** table);

/* Trains the baseline and the five component configurations with one seed. */
WSOD_API wsod_status wsod_ablation(const wsod_config* cfg, const wsod_dataset* data, const wsod_vocab* vocab,
                                   const wsod_dataset* eval_data, const wsod_priors* priors, char** result_json,
                                   char** table);

#ifdef __cplusplus
}
#endif

#endif
