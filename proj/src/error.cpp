#include "scratchq/error.hpp"

namespace scratchq {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::AllMissing: return "AllMissing";
    case ErrorKind::DurationTooShort: return "DurationTooShort";
    case ErrorKind::NoContact: return "NoContact";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::TooFewCriticalPoints: return "TooFewCriticalPoints";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::SingleParticipant: return "SingleParticipant";
    case ErrorKind::NegativePower: return "NegativePower";
    case ErrorKind::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorKind::TooFewPairs: return "TooFewPairs";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::AliasedTone: return "AliasedTone";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::ChecksumFailure: return "ChecksumFailure";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::TaskMismatch: return "TaskMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

} // namespace scratchq
