#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace simtune {

enum class ErrorKind {
    ZeroRow,
    DimMismatch,
    NonFinite,
    NonFiniteEvaluation,
    UnknownCaption,
    LabelOutOfRange,
    DuplicateIdentity,
    EmptyClassName,
    BatchTooLarge,
    NotEnoughIdentities,
    IdentityHasSingleImage,
    StepOutOfRange,
    ShapeMismatch,
    NonFiniteGradient,
    KOutOfRange,
    EmptyScores,
    EmptyClass,
    InvalidSpec,
    InvalidConfig,
    ConfigParse,
    MissingInput,
    DivergenceDetected,
    Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace simtune
