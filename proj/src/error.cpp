#include "auscsed/error.hpp"

namespace auscsed {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotFound: return "NotFound";
        case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorKind::CorruptHeader: return "CorruptHeader";
        case ErrorKind::EmptyClip: return "EmptyClip";
        case ErrorKind::TooShort: return "TooShort";
        case ErrorKind::RateMismatch: return "RateMismatch";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::SyntaxError: return "SyntaxError";
        case ErrorKind::UnknownClass: return "UnknownClass";
        case ErrorKind::NonPositiveDuration: return "NonPositiveDuration";
        case ErrorKind::OverlapWithinClass: return "OverlapWithinClass";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::ChecksumError: return "ChecksumError";
        case ErrorKind::StaleCache: return "StaleCache";
        case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorKind::NegativeExponent: return "NegativeExponent";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::DivergedLoss: return "DivergedLoss";
        case ErrorKind::UnsupportedAugment: return "UnsupportedAugment";
        case ErrorKind::InvalidParam: return "InvalidParam";
        case ErrorKind::DegenerateInterval: return "DegenerateInterval";
        case ErrorKind::NoEligibleRecordings: return "NoEligibleRecordings";
        case ErrorKind::MissingAudio: return "MissingAudio";
        case ErrorKind::IncompatibleModel: return "IncompatibleModel";
        case ErrorKind::MissingStageInput: return "MissingStageInput";
        case ErrorKind::InfeasibleSpec: return "InfeasibleSpec";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace auscsed
