#include "pdirichlet/error.hpp"

namespace pdirichlet {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::InvalidOrder: return "invalid-order";
        case ErrorCode::InvalidInterval: return "invalid-interval";
        case ErrorCode::EmptySample: return "empty-sample";
        case ErrorCode::InvalidBandwidth: return "invalid-bandwidth";
        case ErrorCode::IllPosedSpline: return "ill-posed-spline";
        case ErrorCode::OutOfDomain: return "out-of-domain";
        case ErrorCode::Divergence: return "divergence";
        case ErrorCode::InvalidK: return "invalid-k";
        case ErrorCode::Singular: return "singular";
        case ErrorCode::StepSize: return "step-size";
        case ErrorCode::StepFailure: return "step-failure";
        case ErrorCode::AlgebraicSolve: return "algebraic-solve";
        case ErrorCode::UnsupportedLayout: return "unsupported-layout";
        case ErrorCode::Resolution: return "resolution";
        case ErrorCode::Shape: return "shape";
        case ErrorCode::Io: return "io";
        case ErrorCode::Parse: return "parse";
    }
    return "unknown";
}

int exit_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::Parse:
        case ErrorCode::InvalidArgument: return 2;
        case ErrorCode::Io: return 3;
        case ErrorCode::Shape: return 4;
        case ErrorCode::StepSize:
        case ErrorCode::StepFailure:
        case ErrorCode::AlgebraicSolve:
        case ErrorCode::Singular:
        case ErrorCode::IllPosedSpline:
        case ErrorCode::Divergence: return 5;
        default: return 6;
    }
}

}  // namespace pdirichlet
