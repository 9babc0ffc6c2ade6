#include "ecorr/error.hpp"

namespace ecorr {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "InvalidInput";
        case ErrorKind::NumericalFailure: return "NumericalFailure";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorKind::InsufficientDimension: return "InsufficientDimension";
        case ErrorKind::DegenerateStructure: return "DegenerateStructure";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::DegenerateColumn: return "DegenerateColumn";
        case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorKind::CorruptData: return "CorruptData";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::CacheError: return "CacheError";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::TrainingDiverged: return "TrainingDiverged";
        case ErrorKind::DegenerateBasis: return "DegenerateBasis";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::Unsupported: return "Unsupported";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput:
        case ErrorKind::ConfigError:
        case ErrorKind::Unsupported:
            return 2;
        case ErrorKind::NumericalFailure:
        case ErrorKind::NotPositiveDefinite:
        case ErrorKind::ConvergenceFailure:
        case ErrorKind::TrainingDiverged:
        case ErrorKind::RankDeficient:
        case ErrorKind::DegenerateBasis:
            return 4;
        default:
            return 3;
    }
}

}  // namespace ecorr
