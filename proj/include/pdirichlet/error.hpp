#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pdirichlet {

/// Machine-readable error category; the CLI maps each one to an exit status.
enum class ErrorCode {
    InvalidArgument,
    InvalidOrder,
    InvalidInterval,
    EmptySample,
    InvalidBandwidth,
    IllPosedSpline,
    OutOfDomain,
    Divergence,
    InvalidK,
    Singular,
    StepSize,
    StepFailure,
    AlgebraicSolve,
    UnsupportedLayout,
    Resolution,
    Shape,
    Io,
    Parse,
};

std::string_view to_string(ErrorCode code);

/// Exit status used by the CLI for an error of the given category.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace pdirichlet
