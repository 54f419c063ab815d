#pragma once

#include <stdexcept>
#include <string>

namespace auscsed {

enum class ErrorKind {
    // audio / features
    NotFound,
    UnsupportedFormat,
    CorruptHeader,
    EmptyClip,
    TooShort,
    RateMismatch,
    InvalidConfig,
    // label parsing
    SyntaxError,
    UnknownClass,
    NonPositiveDuration,
    OverlapWithinClass,
    // model / training
    ShapeMismatch,
    NonFiniteActivation,
    VersionMismatch,
    ChecksumError,
    StaleCache,
    NonFiniteGradient,
    NegativeExponent,
    EmptyDataset,
    DivergedLoss,
    UnsupportedAugment,
    InvalidParam,
    // metrics
    DegenerateInterval,
    NoEligibleRecordings,
    // pipeline
    MissingAudio,
    IncompatibleModel,
    MissingStageInput,
    InfeasibleSpec,
    // generic
    IoError,
    InvalidArgument,
};

const char* error_kind_name(ErrorKind kind);

/// Single exception type for the whole library; `kind` identifies the
/// contract violation so callers and tests can dispatch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
          kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace auscsed
