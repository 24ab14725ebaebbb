#ifndef SIEM_SIEM_H
#define SIEM_SIEM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SIEM_API __declspec(dllexport)
#else
#define SIEM_API __attribute__((visibility("default")))
#endif

typedef enum siem_status {
  SIEM_OK = 0,
  SIEM_E_INVALID_ARGUMENT,
  SIEM_E_MALFORMED_EVENT,
  SIEM_E_PARSE_REJECT,
  SIEM_E_INVALID_CONFIG,
  SIEM_E_NONDETERMINISTIC_PROBE,
  SIEM_E_UNKNOWN_ATTRIBUTE,
  SIEM_E_INVALID_MATRIX,
  SIEM_E_NON_CONVERGENCE,
  SIEM_E_MISSING_LOCAL_PRIORITY,
  SIEM_E_INVALID_SYSTEM_DESCRIPTION,
  SIEM_E_UNKNOWN_ENDPOINT,
  SIEM_E_PATH_LIMIT_EXCEEDED,
  SIEM_E_DIMENSION_MISMATCH,
  SIEM_E_STALE_REMEDIATION,
  SIEM_E_INVALID_PARAMS,
  SIEM_E_MATERIAL_MISMATCH,
  SIEM_E_INSUFFICIENT_SHARES,
  SIEM_E_COMBINE_FAILURE,
  SIEM_E_QUORUM_UNREACHABLE,
  SIEM_E_IO,
  SIEM_E_INTERNAL
} siem_status;

/* Holds the last error message; one context per thread. Calls accept a
 * NULL context and then only report the status. */
typedef struct siem_context siem_context;

/* Threshold key material produced by the dealer. */
typedef struct siem_res_keys siem_res_keys;

SIEM_API const char* siem_version(void);
SIEM_API const char* siem_status_name(siem_status status);
/* Nonzero when the status denotes bad configuration or input documents. */
SIEM_API int siem_status_is_config_error(siem_status status);

SIEM_API siem_context* siem_context_new(void);
SIEM_API void siem_context_free(siem_context* ctx);
/* When on, key generation on this context draws from the system RNG and
 * ignores the seed; runs are then no longer reproducible. */
SIEM_API void siem_context_set_os_entropy(siem_context* ctx, int on);
/* Message of the last failing call on ctx, "" if none. Owned by ctx. */
SIEM_API const char* siem_last_error(const siem_context* ctx);
/* Pipeline stage that failed in the last siem_run_pipeline call, "" if none. */
SIEM_API const char* siem_last_stage(const siem_context* ctx);

/* Full run. out_dir may be NULL (config value); seed is used when has_seed
 * is nonzero. *exit_code receives 0 (clean) or 1 (findings remain) on
 * SIEM_OK. */
SIEM_API siem_status siem_run_pipeline(siem_context* ctx, const char* config_path,
                                       const char* out_dir, int has_seed, uint64_t seed,
                                       int* exit_code);

/* Stage entry points; each writes its artifacts into out_dir. */
SIEM_API siem_status siem_collect(siem_context* ctx, const char* collector_config,
                                  const char* out_dir, size_t* events, size_t* quarantined);
SIEM_API siem_status siem_correlate(siem_context* ctx, const char* events_path,
                                    const char* rules_path, const char* out_dir, size_t* alarms);
/* hierarchy_path may be NULL for the default hierarchy. */
SIEM_API siem_status siem_resolve_conflicts(siem_context* ctx, const char* policies_path,
                                            const char* system_path, const char* hierarchy_path,
                                            const char* out_dir, size_t* conflicts);
/* resolutions_path may be NULL. When react_after is nonzero the remediation
 * is applied and the analysis repeated; *findings_post is then filled. */
SIEM_API siem_status siem_reachability(siem_context* ctx, const char* policies_path,
                                       const char* system_path, const char* resolutions_path,
                                       const char* out_dir, int react_after, size_t* findings,
                                       size_t* findings_post);
SIEM_API siem_status siem_react(siem_context* ctx, const char* system_path,
                                const char* remediation_path, const char* out_system_path);

SIEM_API siem_status siem_res_keygen(siem_context* ctx, unsigned n, unsigned k, unsigned key_bits,
                                     uint64_t seed, siem_res_keys** out);
SIEM_API void siem_res_keys_free(siem_res_keys* keys);
SIEM_API siem_status siem_res_keys_write_public(siem_context* ctx, const siem_res_keys* keys,
                                                const char* path);
/* Signs a JSON-lines alarm file into out_dir/store.res. faults_json may be
 * NULL or an object such as {"2":"corrupt","4":"delay"}. */
SIEM_API siem_status siem_res_sign(siem_context* ctx, const char* alarms_path, unsigned n,
                                   unsigned k, unsigned key_bits, uint64_t seed,
                                   const char* faults_json, const char* out_dir, size_t* stored,
                                   size_t* dead_letters);
SIEM_API siem_status siem_res_audit(siem_context* ctx, const char* store_path,
                                    const char* public_path, const char* report_path,
                                    size_t* failures);

SIEM_API siem_status siem_dam_sim(siem_context* ctx, const char* out_dir);
SIEM_API double siem_dam_power(double rho, double eta, double g, double delta_h, double q);

#ifdef __cplusplus
}
#endif

#endif
