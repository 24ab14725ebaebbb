#include "error.hpp"

namespace siem {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::malformed_event: return "MalformedEvent";
    case ErrorKind::parse_reject: return "ParseReject";
    case ErrorKind::invalid_config: return "InvalidConfig";
    case ErrorKind::nondeterministic_probe: return "NondeterministicProbe";
    case ErrorKind::unknown_attribute: return "UnknownAttribute";
    case ErrorKind::invalid_matrix: return "InvalidMatrix";
    case ErrorKind::non_convergence: return "NonConvergence";
    case ErrorKind::missing_local_priority: return "MissingLocalPriority";
    case ErrorKind::invalid_system_description: return "InvalidSystemDescription";
    case ErrorKind::unknown_endpoint: return "UnknownEndpoint";
    case ErrorKind::path_limit_exceeded: return "PathLimitExceeded";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::stale_remediation: return "StaleRemediation";
    case ErrorKind::invalid_params: return "InvalidParams";
    case ErrorKind::material_mismatch: return "MaterialMismatch";
    case ErrorKind::insufficient_shares: return "InsufficientShares";
    case ErrorKind::combine_failure: return "CombineFailure";
    case ErrorKind::quorum_unreachable: return "QuorumUnreachable";
    case ErrorKind::io_error: return "IoError";
  }
  return "Unknown";
}

bool is_configuration_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::nondeterministic_probe:
    case ErrorKind::unknown_attribute:
    case ErrorKind::invalid_system_description:
    case ErrorKind::unknown_endpoint:
    case ErrorKind::invalid_params:
      return true;
    default:
      return false;
  }
}

}  // namespace siem
