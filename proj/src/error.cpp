#include "echoseg/error.hpp"

namespace echoseg {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::OutOfRangeLabel: return "OUT_OF_RANGE_LABEL";
        case ErrorCode::UnreadableVolume: return "UNREADABLE_VOLUME";
        case ErrorCode::EmptyVolume: return "EMPTY_VOLUME";
        case ErrorCode::IoWriteFailure: return "IO_WRITE_FAILURE";
        case ErrorCode::IoReadFailure: return "IO_READ_FAILURE";
        case ErrorCode::InvalidTarget: return "INVALID_TARGET";
        case ErrorCode::DuplicateStem: return "DUPLICATE_STEM";
        case ErrorCode::EmptyManifest: return "EMPTY_MANIFEST";
        case ErrorCode::MalformedRecord: return "MALFORMED_RECORD";
        case ErrorCode::AreaMismatch: return "AREA_MISMATCH";
        case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
        case ErrorCode::NoOverlap: return "NO_OVERLAP";
        case ErrorCode::IndivisibleInput: return "INDIVISIBLE_INPUT";
        case ErrorCode::TokenOverflow: return "TOKEN_OVERFLOW";
        case ErrorCode::ShapeIncompatible: return "SHAPE_INCOMPATIBLE";
        case ErrorCode::KeyMismatch: return "KEY_MISMATCH";
        case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
        case ErrorCode::AllZeroWeights: return "ALL_ZERO_WEIGHTS";
        case ErrorCode::DegenerateBatch: return "DEGENERATE_BATCH";
        case ErrorCode::EmptyStream: return "EMPTY_STREAM";
        case ErrorCode::EmptyClass: return "EMPTY_CLASS";
        case ErrorCode::EmptyInput: return "EMPTY_INPUT";
        case ErrorCode::EmptySplit: return "EMPTY_SPLIT";
        case ErrorCode::Divergence: return "DIVERGENCE";
        case ErrorCode::NonfiniteGradient: return "NONFINITE_GRADIENT";
        case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    }
    return "UNKNOWN";
}

} // namespace echoseg
