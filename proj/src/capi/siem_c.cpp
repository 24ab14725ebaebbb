#include "siem/siem.h"

#include <exception>
#include <fstream>
#include <new>
#include <string>

#include "dam.hpp"
#include "pipeline.hpp"

struct siem_context {
  std::string error;
  std::string stage;
  bool os_entropy = false;
};

struct siem_res_keys {
  siem::res::ThresholdKeyMaterial material;
};

namespace {

namespace pl = siem::pipeline;

siem_status status_of(siem::ErrorKind kind) {
  using K = siem::ErrorKind;
  switch (kind) {
    case K::malformed_event: return SIEM_E_MALFORMED_EVENT;
    case K::parse_reject: return SIEM_E_PARSE_REJECT;
    case K::invalid_config: return SIEM_E_INVALID_CONFIG;
    case K::nondeterministic_probe: return SIEM_E_NONDETERMINISTIC_PROBE;
    case K::unknown_attribute: return SIEM_E_UNKNOWN_ATTRIBUTE;
    case K::invalid_matrix: return SIEM_E_INVALID_MATRIX;
    case K::non_convergence: return SIEM_E_NON_CONVERGENCE;
    case K::missing_local_priority: return SIEM_E_MISSING_LOCAL_PRIORITY;
    case K::invalid_system_description: return SIEM_E_INVALID_SYSTEM_DESCRIPTION;
    case K::unknown_endpoint: return SIEM_E_UNKNOWN_ENDPOINT;
    case K::path_limit_exceeded: return SIEM_E_PATH_LIMIT_EXCEEDED;
    case K::dimension_mismatch: return SIEM_E_DIMENSION_MISMATCH;
    case K::stale_remediation: return SIEM_E_STALE_REMEDIATION;
    case K::invalid_params: return SIEM_E_INVALID_PARAMS;
    case K::material_mismatch: return SIEM_E_MATERIAL_MISMATCH;
    case K::insufficient_shares: return SIEM_E_INSUFFICIENT_SHARES;
    case K::combine_failure: return SIEM_E_COMBINE_FAILURE;
    case K::quorum_unreachable: return SIEM_E_QUORUM_UNREACHABLE;
    case K::io_error: return SIEM_E_IO;
  }
  return SIEM_E_INTERNAL;
}

template <typename F>
siem_status guarded(siem_context* ctx, F&& fn) {
  if (ctx) {
    ctx->error.clear();
    ctx->stage.clear();
  }
  try {
    fn();
    return SIEM_OK;
  } catch (const pl::StageFailure& e) {
    if (ctx) {
      ctx->error = e.what();
      ctx->stage = e.stage();
    }
    return status_of(e.kind());
  } catch (const siem::Error& e) {
    if (ctx) ctx->error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    if (ctx) ctx->error = "out of memory";
    return SIEM_E_INTERNAL;
  } catch (const std::exception& e) {
    if (ctx) ctx->error = e.what();
    return SIEM_E_INTERNAL;
  }
}

bool missing(siem_context* ctx, std::initializer_list<const void*> args) {
  for (const void* a : args)
    if (!a) {
      if (ctx) ctx->error = "required argument is NULL";
      return true;
    }
  return false;
}

std::optional<std::filesystem::path> opt_path(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::filesystem::path(p);
}

}  // namespace

extern "C" {

const char* siem_version(void) { return "1.0.0"; }

const char* siem_status_name(siem_status status) {
  switch (status) {
    case SIEM_OK: return "ok";
    case SIEM_E_INVALID_ARGUMENT: return "invalid_argument";
    case SIEM_E_INTERNAL: return "internal";
    default: break;
  }
  for (int k = 0; k <= static_cast<int>(siem::ErrorKind::io_error); ++k)
    if (status_of(static_cast<siem::ErrorKind>(k)) == status)
      return siem::to_string(static_cast<siem::ErrorKind>(k));
  return "unknown";
}

int siem_status_is_config_error(siem_status status) {
  if (status == SIEM_E_INVALID_ARGUMENT) return 1;
  for (int k = 0; k <= static_cast<int>(siem::ErrorKind::io_error); ++k)
    if (status_of(static_cast<siem::ErrorKind>(k)) == status)
      return siem::is_configuration_error(static_cast<siem::ErrorKind>(k)) ? 1 : 0;
  return 0;
}

siem_context* siem_context_new(void) { return new (std::nothrow) siem_context(); }

void siem_context_free(siem_context* ctx) { delete ctx; }

void siem_context_set_os_entropy(siem_context* ctx, int on) {
  if (ctx) ctx->os_entropy = on != 0;
}

const char* siem_last_error(const siem_context* ctx) { return ctx ? ctx->error.c_str() : ""; }

const char* siem_last_stage(const siem_context* ctx) { return ctx ? ctx->stage.c_str() : ""; }

siem_status siem_run_pipeline(siem_context* ctx, const char* config_path, const char* out_dir,
                              int has_seed, uint64_t seed, int* exit_code) {
  if (missing(ctx, {config_path, exit_code})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    auto cfg = pl::load_config(config_path);
    if (out_dir && *out_dir) cfg.out_dir = out_dir;
    if (has_seed) cfg.seed = cfg.faults.seed = seed;
    if (ctx && ctx->os_entropy) cfg.os_entropy = true;
    *exit_code = pl::run_pipeline(cfg);
  });
}

siem_status siem_collect(siem_context* ctx, const char* collector_config, const char* out_dir,
                         size_t* events, size_t* quarantined) {
  if (missing(ctx, {collector_config, out_dir})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    std::filesystem::create_directories(out_dir);
    auto s = pl::collect(collector_config, out_dir);
    if (events) *events = s.events;
    if (quarantined) *quarantined = s.quarantined;
  });
}

siem_status siem_correlate(siem_context* ctx, const char* events_path, const char* rules_path,
                           const char* out_dir, size_t* alarms) {
  if (missing(ctx, {events_path, rules_path, out_dir})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    std::filesystem::create_directories(out_dir);
    auto s = pl::correlate(events_path, rules_path, out_dir);
    if (alarms) *alarms = s.alarms;
  });
}

siem_status siem_resolve_conflicts(siem_context* ctx, const char* policies_path,
                                   const char* system_path, const char* hierarchy_path,
                                   const char* out_dir, size_t* conflicts) {
  if (missing(ctx, {policies_path, system_path, out_dir})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    std::filesystem::create_directories(out_dir);
    auto s = pl::resolve_conflicts(policies_path, system_path, opt_path(hierarchy_path), out_dir);
    if (conflicts) *conflicts = s.conflicts;
  });
}

siem_status siem_reachability(siem_context* ctx, const char* policies_path, const char* system_path,
                              const char* resolutions_path, const char* out_dir, int react_after,
                              size_t* findings, size_t* findings_post) {
  if (missing(ctx, {policies_path, system_path, out_dir})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    std::filesystem::create_directories(out_dir);
    auto s = pl::reachability(policies_path, system_path, opt_path(resolutions_path), out_dir,
                              react_after != 0);
    if (findings) {
      *findings = 0;
      for (const auto& [_, n] : s.findings) *findings += n;
    }
    if (findings_post) *findings_post = s.total_post;
  });
}

siem_status siem_react(siem_context* ctx, const char* system_path, const char* remediation_path,
                       const char* out_system_path) {
  if (missing(ctx, {system_path, remediation_path, out_system_path})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] { pl::react(system_path, remediation_path, out_system_path); });
}

siem_status siem_res_keygen(siem_context* ctx, unsigned n, unsigned k, unsigned key_bits,
                            uint64_t seed, siem_res_keys** out) {
  if (missing(ctx, {out})) return SIEM_E_INVALID_ARGUMENT;
  *out = nullptr;
  return guarded(ctx, [&] {
    auto material = siem::res::dealer_keygen({n, k}, key_bits, seed, ctx && ctx->os_entropy);
    *out = new siem_res_keys{std::move(material)};
  });
}

void siem_res_keys_free(siem_res_keys* keys) { delete keys; }

siem_status siem_res_keys_write_public(siem_context* ctx, const siem_res_keys* keys,
                                       const char* path) {
  if (missing(ctx, {keys, path})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << siem::res::public_to_json(keys->material.pub).dump(2) << "\n";
    if (!out) throw siem::Error(siem::ErrorKind::io_error, std::string("cannot write ") + path);
  });
}

siem_status siem_res_sign(siem_context* ctx, const char* alarms_path, unsigned n, unsigned k,
                          unsigned key_bits, uint64_t seed, const char* faults_json,
                          const char* out_dir, size_t* stored, size_t* dead_letters) {
  if (missing(ctx, {alarms_path, out_dir})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    siem::res::FaultModel faults;
    if (faults_json && *faults_json) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(faults_json);
      } catch (const nlohmann::json::exception& e) {
        throw siem::Error(siem::ErrorKind::invalid_config, std::string("faults: ") + e.what());
      }
      faults = pl::faults_from_json(j);
    }
    faults.seed = seed;
    std::filesystem::create_directories(out_dir);
    auto s = pl::res_sign(alarms_path, {n, k}, key_bits, seed, faults, out_dir, ctx && ctx->os_entropy);
    if (stored) *stored = s.stored;
    if (dead_letters) *dead_letters = s.dead_letters;
  });
}

siem_status siem_res_audit(siem_context* ctx, const char* store_path, const char* public_path,
                           const char* report_path, size_t* failures) {
  if (missing(ctx, {store_path, public_path, report_path})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] {
    auto rep = pl::res_audit(store_path, public_path, report_path);
    if (failures) *failures = rep.failures.size();
  });
}

siem_status siem_dam_sim(siem_context* ctx, const char* out_dir) {
  if (missing(ctx, {out_dir})) return SIEM_E_INVALID_ARGUMENT;
  return guarded(ctx, [&] { pl::dam_sim(out_dir); });
}

double siem_dam_power(double rho, double eta, double g, double delta_h, double q) {
  siem::dam::DamState s;
  s.rho = rho;
  s.eta = eta;
  s.g = g;
  s.delta_h = delta_h;
  s.Q = q;
  return siem::dam::power(s);
}

}  // extern "C"
