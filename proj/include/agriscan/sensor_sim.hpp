#pragma once

#include "agriscan/geometry.hpp"
#include "agriscan/raycast.hpp"
#include "agriscan/sensor_types.hpp"

#include <cstdint>
#include <vector>

namespace agriscan {

struct TrajectorySpec {
  double length = 3.0;  // m
  double speed = 0.10;  // m/s
  double wobble_amplitude = 0.0;  // m, lateral
  double wobble_frequency = 0.0;  // Hz
  double rate = 100.0;  // Hz
  Vec3 start = Vec3(0.0, 0.0, 0.6);
  double yaw = 0.0;  // direction of travel, counter-clockwise from +x
};

/// Straight drive along `yaw` with an optional sinusoidal lateral wobble whose
/// phase is drawn from `seed`. Heading stays tangent to the path.
PoseTrack generate_trajectory(const TrajectorySpec& spec, std::uint64_t seed);

/// Profiles at t0 + k / scan_rate over the track span. The sensor pose is the
/// interpolated body pose composed with the mounting calibration.
std::vector<LaserProfile> simulate_laser_profiles(const RayCaster& scene, const PoseTrack& track,
                                                  const MountingCalibration& calib, const ScannerModel& model,
                                                  std::uint64_t seed, int threads = 1);

struct ImuNoise {
  double gyro_density = 0.01;   // rad/s/sqrt(Hz)
  double accel_density = 0.05;  // m/s^2/sqrt(Hz)
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
};

struct GnssSimConfig {
  double rate = 10.0;  // Hz
  double sigma_horizontal = 0.01;
  double sigma_vertical = 0.02;
  Vec3 antenna_lever_arm = Vec3(-0.5, 0.0, 0.8);  // rear antenna, body frame
  double heading_rate = 10.0;
  double heading_sigma = 0.0035;  // rad
  double pitch_sigma = 0.007;     // rad
  HeadingConvention convention = HeadingConvention::NorthClockwise;
};

struct InertialData {
  std::vector<ImuSample> imu;
  std::vector<GnssFix> gnss;
  std::vector<HeadingPitchObs> heading;
};

/// IMU at every track knot (uniformly sampled track required), GNSS and
/// heading at their own rates. Derivatives come from local high-order
/// finite differences of the track.
InertialData simulate_inertial_and_gnss(const PoseTrack& track, const ImuNoise& imu_noise,
                                        const GnssSimConfig& gnss, std::uint64_t seed);

/// Velocity (global frame) at each knot by five-point differentiation.
std::vector<Vec3> track_velocities(const PoseTrack& track);

/// Scanner looking down and tilted toward the body x axis by `tilt` (rad).
/// Sensor x runs along body y, sensor y along body x, sensor z down. The left
/// scanner sits at +lateral, the right one at -lateral.
MountingCalibration nominal_mounting(bool left, double lateral = 0.7, double height = 0.6,
                                     double tilt = 50.0 * kPi / 180.0);

/// Independent RNG stream for (seed, index).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace agriscan
