#ifndef NAILGUARD_NAILGUARD_H
#define NAILGUARD_NAILGUARD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NG_API __declspec(dllexport)
#else
#define NG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ng_status {
  NG_OK = 0,
  NG_ERR_INVALID_ARGUMENT = 1,
  NG_ERR_IO = 2,
  NG_ERR_NOT_FOUND = 3,
  NG_ERR_DECODE = 4,
  NG_ERR_NUMERIC = 5,
  NG_ERR_CONFIG = 6,
  NG_ERR_CONFLICT = 7,
  NG_ERR_UNAVAILABLE = 8,
  NG_ERR_INTERNAL = 9
} ng_status;

#define NG_NUM_CATEGORIES 6

/* Message of the last failing call on this thread; "" after success. */
NG_API const char* ng_last_error(void);
NG_API const char* ng_status_name(ng_status status);
NG_API const char* ng_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
NG_API void ng_string_free(char* s);

NG_API ng_status ng_sha256_file(const char* path, char out_hex[65]);

typedef struct ng_manifest ng_manifest;
typedef struct ng_split ng_split;
typedef struct ng_classifier ng_classifier;
typedef struct ng_service ng_service;

/* ---- dataset ---------------------------------------------------------- */

/* skipped_json (optional): [{"path", "reason"}, ...]. */
NG_API ng_status ng_ingest(const char* root, ng_manifest** out, char** skipped_json);
NG_API ng_status ng_manifest_load(const char* path, ng_manifest** out);
NG_API ng_status ng_manifest_save(const ng_manifest* m, const char* path);
NG_API ng_status ng_manifest_json(const ng_manifest* m, char** out);
NG_API size_t ng_manifest_count(const ng_manifest* m);
NG_API void ng_manifest_free(ng_manifest* m);

NG_API ng_status ng_split_create(const ng_manifest* m, uint64_t seed, ng_split** out);
NG_API ng_status ng_split_load(const char* path, ng_split** out);
NG_API ng_status ng_split_save(const ng_split* s, const char* path);
/* {"seed", "counts": {"train", "val", "test"}, "warnings": [...]} */
NG_API ng_status ng_split_summary_json(const ng_split* s, char** out);
NG_API void ng_split_free(ng_split* s);

/* ---- models ----------------------------------------------------------- */

/* Pretrained backbones fail with NG_ERR_CONFIG unless weights are registered. */
NG_API ng_status ng_classifier_create(const char* backbone_id, uint64_t init_seed, ng_classifier** out);
/* Directory holding weights.bin and metadata.json. */
NG_API ng_status ng_classifier_load(const char* dir, ng_classifier** out);
NG_API ng_status ng_classifier_save(const ng_classifier* c, const char* dir);
/* {"backbone_id", "parameter_count", "taxonomy", "metadata"} */
NG_API ng_status ng_classifier_info_json(const ng_classifier* c, char** out);
NG_API ng_status ng_classifier_predict_file(const ng_classifier* c, const char* image_path,
                                            double probs[NG_NUM_CATEGORIES]);
NG_API void ng_classifier_free(ng_classifier* c);

/* ---- training --------------------------------------------------------- */

/* Receives one JSON object per finished epoch or sweep row. */
typedef void (*ng_progress_fn)(const char* event_json, void* user);

/* config_json: training configuration ({} for defaults). A non-null
 * "adversarial" object selects FGSM training. Writes into out_dir:
 * checkpoint/, history.json, history.csv, training_curves.png.
 * Returns a summary JSON listing the artifacts. *best (optional) receives
 * the restored best classifier. */
NG_API ng_status ng_train(const ng_manifest* m, const ng_split* s, const char* backbone_id, uint64_t init_seed,
                          const char* config_json, const char* out_dir, ng_progress_fn progress, void* user,
                          ng_classifier** best, char** summary_json);

/* Fresh model per epsilon. Writes epsilon_sweep.csv / .json into out_dir. */
NG_API ng_status ng_epsilon_sweep(const ng_manifest* m, const ng_split* s, const char* backbone_id,
                                  uint64_t init_seed, const char* config_json, const double* epsilons,
                                  size_t n_epsilons, const char* out_dir, ng_progress_fn progress, void* user,
                                  char** summary_json);

/* grid_json: {"learning_rates": [...], "batch_sizes": [...]} or {} for the
 * default grid. Writes leaderboard.csv / .json into out_dir. */
NG_API ng_status ng_hyperparameter_sweep(const ng_manifest* m, const ng_split* s, const char* backbone_id,
                                         uint64_t init_seed, const char* config_json, const char* grid_json,
                                         const char* out_dir, ng_progress_fn progress, void* user,
                                         char** summary_json);

/* ---- evaluation ------------------------------------------------------- */

/* partition: "train", "val" or "test". Writes report.json, report.csv,
 * confusion_matrix.csv, confusion_matrix.png and predictions.json. */
NG_API ng_status ng_evaluate(const ng_classifier* c, const ng_manifest* m, const ng_split* s, const char* partition,
                             const char* out_dir, char** summary_json);

/* models_json: [{"name", "report": <report.json>, "train_accuracy"?, "val_accuracy"?}, ...].
 * Writes comparison.csv / .json. */
NG_API ng_status ng_compare(const char* models_json, int include_reference, const char* out_dir,
                            char** summary_json);

/* ---- explanations ----------------------------------------------------- */

/* method: "gradcam" or "shapley"; target < 0 explains the predicted
 * category. options_json: {"rows", "cols", "exact", "samples", "seed",
 * "baseline", "alpha"} (all optional). Writes attribution.json and
 * overlay.png into out_dir. */
NG_API ng_status ng_explain(const ng_classifier* c, const char* image_path, const char* method, int target,
                            const char* options_json, const char* out_dir, char** summary_json);

/* ---- synthetic data --------------------------------------------------- */

NG_API ng_status ng_synth_generate(const char* root, size_t per_category, uint64_t seed, char** summary_json);

/* ---- service ---------------------------------------------------------- */

/* config_json: {"store_dir", "models_dir", "severity_weights"?,
 * "active_model"?}. */
NG_API ng_status ng_service_create(const char* config_json, ng_service** out);
/* token may be NULL (open). port 0 binds a free port. */
NG_API ng_status ng_service_bind(ng_service* s, const char* host, int port, const char* token, int* bound_port);
/* Blocks until ng_service_stop. */
NG_API ng_status ng_service_run(ng_service* s);
NG_API void ng_service_stop(ng_service* s);
NG_API void ng_service_free(ng_service* s);

#ifdef __cplusplus
}
#endif

#endif
