#pragma once

#include <stdexcept>
#include <string>

namespace echoseg {

enum class ErrorCode {
    OutOfRangeLabel,
    UnreadableVolume,
    EmptyVolume,
    IoWriteFailure,
    IoReadFailure,
    InvalidTarget,
    DuplicateStem,
    EmptyManifest,
    MalformedRecord,
    AreaMismatch,
    ShapeMismatch,
    NoOverlap,
    IndivisibleInput,
    TokenOverflow,
    ShapeIncompatible,
    KeyMismatch,
    LengthMismatch,
    AllZeroWeights,
    DegenerateBatch,
    EmptyStream,
    EmptyClass,
    EmptyInput,
    EmptySplit,
    Divergence,
    NonfiniteGradient,
    InvalidConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace echoseg
