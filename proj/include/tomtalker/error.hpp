#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tomtalker {

enum class ErrorCode {
    UnknownUser,
    UnknownTask,
    UnknownStore,
    UnknownProp,
    UnknownPet,
    DuplicateId,
    SelfEdge,
    AlreadyCompleted,
    TaskExpired,
    InvalidParams,
    InvalidProfile,
    DimensionMismatch,
    NegativeEntry,
    ZeroRow,
    Malformed,
    NotApplicable,
    EmptyTrial,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library is reported through this type;
/// `code()` lets callers (HTTP handlers, the CLI) map it to a status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    ErrorCode code() const noexcept { return code_; }

    /// The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace tomtalker
