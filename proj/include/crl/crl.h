/* Public C interface to the continual relation-representation learning
 * engine. Configurations are opaque handles; failures return a status code
 * and leave a human-readable message in crl_last_error() (thread-local).
 */
#ifndef CRL_CRL_H
#define CRL_CRL_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum crl_status {
    CRL_OK = 0,
    CRL_ERR_INVALID_ARGUMENT = 1,
    CRL_ERR_PARSE = 2,
    CRL_ERR_IO = 3,
    CRL_ERR_RUNTIME = 4
} crl_status;

/* Library version, e.g. "0.1.0". Static storage; do not free. */
const char* crl_version(void);

/* Message for the most recent failure on this thread ("" if none). Static
 * thread-local storage; do not free. */
const char* crl_last_error(void);

/* Opaque experiment configuration. */
typedef struct crl_config crl_config_t;

/* Fresh configuration with library defaults (synthetic stream, 10 tasks,
 * seeds 1..5). Never fails. Free with crl_config_free. */
crl_config_t* crl_config_default(void);

/* Parses a configuration file. Returns NULL on failure (see
 * crl_last_error). */
crl_config_t* crl_config_load(const char* path);

/* Applies one `key = value` override (nested keys use the "synthetic."
 * prefix, e.g. "synthetic.sigma"). */
crl_status crl_config_set(crl_config_t* config, const char* key, const char* value);

/* The configuration echoed in its file format. Caller frees the returned
 * string with crl_string_free. NULL on failure. */
char* crl_config_text(const crl_config_t* config);

void crl_config_free(crl_config_t* config);
void crl_string_free(char* s);

/* Validates the configuration, runs every seed x variant combination, and
 * writes per-run accuracy matrices plus aggregate summaries into the
 * configuration's output directory. */
crl_status crl_run_experiment(const crl_config_t* config);

/* Trains the first stage_task tasks (first seed, first variant of the
 * configuration), then writes task slice_task's test examples as
 * tab-separated rows (id, true label, predicted label, embedding
 * coordinates) to out_path. Both task numbers are 1-based. */
crl_status crl_export_embeddings(const crl_config_t* config, int stage_task, int slice_task,
                                 const char* out_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CRL_CRL_H */
