#include "tomtalker/error.hpp"

namespace tomtalker {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::UnknownUser: return "UnknownUser";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::UnknownStore: return "UnknownStore";
    case ErrorCode::UnknownProp: return "UnknownProp";
    case ErrorCode::UnknownPet: return "UnknownPet";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::SelfEdge: return "SelfEdge";
    case ErrorCode::AlreadyCompleted: return "AlreadyCompleted";
    case ErrorCode::TaskExpired: return "TaskExpired";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::EmptyTrial: return "EmptyTrial";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

} // namespace tomtalker
