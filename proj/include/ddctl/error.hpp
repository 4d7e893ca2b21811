#pragma once

#include <stdexcept>
#include <string>

namespace ddctl {

// Every failure the library reports maps to one of these codes; the CLI turns
// them into distinct process exit statuses.
enum class ErrorCode {
    Length = 1,
    DimensionMismatch,
    RankDeficient,
    ExcitationFailure,
    Instability,
    ConvergenceFailure,
    Parameter,
    Construction,
    Schema,
    WindowTooShort,
    Uncontrollable,
    Io,
};

[[nodiscard]] const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace ddctl
