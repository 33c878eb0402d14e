#include "simtune/error.hpp"

namespace simtune {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorKind::UnknownCaption: return "UnknownCaption";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::DuplicateIdentity: return "DuplicateIdentity";
    case ErrorKind::EmptyClassName: return "EmptyClassName";
    case ErrorKind::BatchTooLarge: return "BatchTooLarge";
    case ErrorKind::NotEnoughIdentities: return "NotEnoughIdentities";
    case ErrorKind::IdentityHasSingleImage: return "IdentityHasSingleImage";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::EmptyScores: return "EmptyScores";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ConfigParse: return "ConfigParse";
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace simtune
