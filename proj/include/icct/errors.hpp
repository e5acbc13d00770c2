#pragma once

#include <stdexcept>
#include <string>

namespace icct {

// Error taxonomy shared by the library and the CLI. Each class maps to a
// distinct process exit code (see exit_code_for / README).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitConfig = 4;
inline constexpr int kExitNumeric = 5;
inline constexpr int kExitRun = 6;

} // namespace icct
