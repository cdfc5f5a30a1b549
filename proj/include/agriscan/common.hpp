#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <string_view>

namespace agriscan {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

inline constexpr double kGravity = 9.81;
inline constexpr double kPi = 3.14159265358979323846;

enum class ErrorCode {
  // validation
  InvalidArgument,
  OutOfRange,
  InsufficientKnots,
  InvalidSpec,
  EmptyTrack,
  GapTooLarge,
  NoOverlap,
  EmptyStream,
  InvalidParams,
  EmptyInput,
  EmptyCloud,
  DegenerateCloud,
  NonPositiveReference,
  NoUVs,
  NoViews,
  Io,
  Config,
  // numerical
  Diverged,
  SingularSystem,
  Unobservable,
  NoConvergence,
  NoNormals,
};

std::string_view to_string(ErrorCode code);

/// True for failures of an iterative solver or an ill-posed estimation problem,
/// false for bad inputs.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace agriscan
