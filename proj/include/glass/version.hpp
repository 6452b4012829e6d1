#pragma once

namespace glass {

inline constexpr const char* kAppVersion = "0.1.0";

// Bump when an on-disk schema changes incompatibly.
inline constexpr int kDagFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

}  // namespace glass
