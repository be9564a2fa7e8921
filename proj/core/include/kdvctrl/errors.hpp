#pragma once

#include <stdexcept>
#include <string>

namespace kdvctrl {

/// Mismatched grids or incompatible vector sizes.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Inputs exceed the smallness threshold required by the nonlinear solver.
struct SmallnessError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Generic failure of a linear or nonlinear solve.
struct SolverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Picard iteration did not contract within the allowed iteration budget.
struct PicardDivergence : SolverFailure {
    PicardDivergence(const std::string& what, double t, int iters)
        : SolverFailure(what), last_valid_time(t), iterations(iters) {}
    double last_valid_time = 0.0;
    int iterations = 0;
};

/// Closed-loop energy exceeded the blow-up threshold.
struct BlowUpError : std::runtime_error {
    BlowUpError(const std::string& what, double t)
        : std::runtime_error(what), last_valid_time(t) {}
    double last_valid_time = 0.0;
};

/// Steering / second-order synthesis could not reach its target quality.
struct SynthesisFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A steering target is degenerate (quadratic response too small).
struct DegenerateTargetError : SynthesisFailure {
    using SynthesisFailure::SynthesisFailure;
};

/// The regularized steering problem cannot reach the requested target.
struct IllPosedTargetError : SynthesisFailure {
    using SynthesisFailure::SynthesisFailure;
};

/// Requested length class is not supported by the feedback construction.
struct UnsupportedClassError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Steering library failed its soundness checks.
struct LibraryInvalidError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ill-formed configuration file or flag set.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kdvctrl
