#include "agriscan/common.hpp"

namespace agriscan {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InsufficientKnots: return "InsufficientKnots";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::GapTooLarge: return "GapTooLarge";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::NonPositiveReference: return "NonPositiveReference";
    case ErrorCode::NoUVs: return "NoUVs";
    case ErrorCode::NoViews: return "NoViews";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Unobservable: return "Unobservable";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NoNormals: return "NoNormals";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::Diverged:
    case ErrorCode::SingularSystem:
    case ErrorCode::Unobservable:
    case ErrorCode::NoConvergence:
    case ErrorCode::NoNormals:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace agriscan
