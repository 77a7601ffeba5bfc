#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gapsandwich {

enum class ErrorCode {
    EmptySamples,
    NonPositiveSample,
    LengthMismatch,
    LengthNotDivisible,
    InvalidK,
    EmptyGrid,
    InvalidParams,
    NonFiniteParams,
    DivergenceDetected,
    SourceFailure,
    ParseError,
    CheckpointError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::NonPositiveSample: return "NonPositiveSample";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LengthNotDivisible: return "LengthNotDivisible";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::NonFiniteParams: return "NonFiniteParams";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::SourceFailure: return "SourceFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CheckpointError: return "CheckpointError";
    }
    return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace gapsandwich
