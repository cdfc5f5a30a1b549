#pragma once

#include "agriscan/common.hpp"
#include "agriscan/geometry.hpp"

#include <string>
#include <vector>

namespace agriscan {

/// Laser triangulation scanner. Rays fan out in the sensor XZ plane around +z.
struct ScannerModel {
  int points_per_profile = 1920;
  double fan_half_angle = 0.4475;  // rad, ~0.5 mm point spacing at 1 m depth
  double min_range = 0.390;
  double max_range = 2.000;
  double range_noise_sigma = 12e-6;
  double scan_rate = 200.0;  // Hz

  void validate() const;
  /// Beam angle from +z toward +x for sample k.
  double beam_angle(int k) const;
};

struct LaserSample {
  double x = 0.0;
  double z = 0.0;
  bool valid = false;
};

struct LaserProfile {
  double timestamp = 0.0;
  std::vector<LaserSample> samples;
};

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // specific force, m/s^2, body frame
};

struct GnssFix {
  double t = 0.0;
  Vec3 position = Vec3::Zero();  // antenna, global frame
  Vec3 sigma = Vec3::Constant(0.01);
};

struct HeadingPitchObs {
  double t = 0.0;
  double heading = 0.0;  // in the receiver's convention
  double pitch = 0.0;
  double heading_sigma = 0.0035;
  double pitch_sigma = 0.007;
};

enum class HeadingConvention {
  EastCounterClockwise,  // standard yaw about +z, x east
  NorthClockwise,        // compass heading, global frame is ENU
};

HeadingConvention parse_heading_convention(const std::string& name);
std::string to_string(HeadingConvention convention);

/// The single adapter between receiver heading and internal yaw. Internal
/// math always uses counter-clockwise yaw about +z with x east / y north;
/// a compass heading h maps to yaw = pi/2 - h. Output wrapped to (-pi, pi].
double heading_to_yaw(double heading, HeadingConvention convention);
double yaw_to_heading(double yaw, HeadingConvention convention);

double wrap_angle(double a);

/// Rotation from the scanner frame into the body frame, plus lever arm.
struct MountingCalibration {
  Quat boresight = Quat::Identity();
  Vec3 lever_arm = Vec3::Zero();
  std::string scanner_id = "scanner";

  Pose as_pose() const { return Pose(lever_arm, boresight); }
};

}  // namespace agriscan
