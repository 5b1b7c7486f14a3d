#pragma once
#include <stdexcept>

namespace pairforge {

// Error classes map onto the tool exit codes: bad configuration or bad CLI
// usage vs file problems (missing, unreadable, malformed) vs numeric failures.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

} // namespace pairforge
