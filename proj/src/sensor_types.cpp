#include "agriscan/sensor_types.hpp"

#include <cmath>

namespace agriscan {

void ScannerModel::validate() const {
  if (points_per_profile < 2) fail(ErrorCode::InvalidSpec, "scanner: points_per_profile must be >= 2");
  if (!(min_range > 0.0 && min_range < max_range)) {
    fail(ErrorCode::InvalidSpec, "scanner: need 0 < min_range < max_range");
  }
  if (!(fan_half_angle > 0.0 && fan_half_angle < 0.5 * kPi)) {
    fail(ErrorCode::InvalidSpec, "scanner: fan_half_angle must be in (0, pi/2)");
  }
  if (!(scan_rate > 0.0)) fail(ErrorCode::InvalidSpec, "scanner: scan_rate must be positive");
  if (!(range_noise_sigma >= 0.0)) fail(ErrorCode::InvalidSpec, "scanner: negative range noise");
}

double ScannerModel::beam_angle(int k) const {
  const double f = static_cast<double>(k) / static_cast<double>(points_per_profile - 1);
  return -fan_half_angle + 2.0 * fan_half_angle * f;
}

HeadingConvention parse_heading_convention(const std::string& name) {
  if (name == "east_ccw") return HeadingConvention::EastCounterClockwise;
  if (name == "north_cw") return HeadingConvention::NorthClockwise;
  fail(ErrorCode::Config, "unknown heading convention '" + name + "' (expected east_ccw or north_cw)");
}

std::string to_string(HeadingConvention convention) {
  return convention == HeadingConvention::EastCounterClockwise ? "east_ccw" : "north_cw";
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double heading_to_yaw(double heading, HeadingConvention convention) {
  if (convention == HeadingConvention::NorthClockwise) return wrap_angle(0.5 * kPi - heading);
  return wrap_angle(heading);
}

double yaw_to_heading(double yaw, HeadingConvention convention) {
  // the map is an involution
  return heading_to_yaw(yaw, convention);
}

}  // namespace agriscan
