#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ecorr {

enum class ErrorKind {
    InvalidInput,
    NumericalFailure,
    NotPositiveDefinite,
    ConvergenceFailure,
    InsufficientDimension,
    DegenerateStructure,
    ParseError,
    DegenerateColumn,
    UnsupportedVersion,
    CorruptData,
    ShapeError,
    CacheError,
    ConfigError,
    TrainingDiverged,
    DegenerateBasis,
    RankDeficient,
    Unsupported,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for the CLI contract: 2 argument/config errors,
/// 3 data errors, 4 numerical failures.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace ecorr
