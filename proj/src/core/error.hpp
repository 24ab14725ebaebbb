#pragma once

#include <stdexcept>
#include <string>

namespace siem {

// Every failure the core can raise maps onto one of these; the C API turns
// them into siem_status values.
enum class ErrorKind {
  malformed_event,
  parse_reject,
  invalid_config,
  nondeterministic_probe,
  unknown_attribute,
  invalid_matrix,
  non_convergence,
  missing_local_priority,
  invalid_system_description,
  unknown_endpoint,
  path_limit_exceeded,
  dimension_mismatch,
  stale_remediation,
  invalid_params,
  material_mismatch,
  insufficient_shares,
  combine_failure,
  quorum_unreachable,
  io_error,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// True for errors that come from bad input documents rather than from a
// stage failing on valid input.
bool is_configuration_error(ErrorKind kind) noexcept;

}  // namespace siem
