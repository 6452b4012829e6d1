#pragma once

#include <stdexcept>
#include <string>

namespace glass {

enum class errc {
  dim_mismatch,
  zero_norm_vector,
  empty_input,
  empty_group,
  empty_caption,
  empty_concept,
  provider_failure,
  inconsistent_chain_length,
  invalid_spec,
  io_failure,
  schema_version_mismatch,
  group_too_small,
  no_groups,
  non_finite_loss,
  missing_ancestor,
  incompatible_reports,
  invalid_argument,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::dim_mismatch: return "DimMismatch";
    case errc::zero_norm_vector: return "ZeroNormVector";
    case errc::empty_input: return "EmptyInput";
    case errc::empty_group: return "EmptyGroup";
    case errc::empty_caption: return "EmptyCaption";
    case errc::empty_concept: return "EmptyConcept";
    case errc::provider_failure: return "ProviderFailure";
    case errc::inconsistent_chain_length: return "InconsistentChainLength";
    case errc::invalid_spec: return "InvalidSpec";
    case errc::io_failure: return "IoFailure";
    case errc::schema_version_mismatch: return "SchemaVersionMismatch";
    case errc::group_too_small: return "GroupTooSmall";
    case errc::no_groups: return "NoGroups";
    case errc::non_finite_loss: return "NonFiniteLoss";
    case errc::missing_ancestor: return "MissingAncestor";
    case errc::incompatible_reports: return "IncompatibleReports";
    case errc::invalid_argument: return "InvalidArgument";
  }
  return "UnknownError";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
  throw error(code, message);
}

inline void require(bool cond, errc code, const std::string& message) {
  if (!cond) raise(code, message);
}

}  // namespace glass
