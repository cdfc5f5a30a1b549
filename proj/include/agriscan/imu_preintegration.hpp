#pragma once

#include "agriscan/geometry.hpp"
#include "agriscan/sensor_types.hpp"

#include <span>

namespace agriscan {

struct ImuNoiseModel {
  double gyro_density = 0.01;    // rad/s/sqrt(Hz)
  double accel_density = 0.05;   // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1e-4;  // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 1e-3; // m/s^3/sqrt(Hz)
  double nominal_rate = 100.0;   // Hz
};

struct ImuBias {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

using Mat9 = Eigen::Matrix<double, 9, 9>;

/// Relative motion between two instants summarized from IMU samples in the
/// frame of the first instant. Gravity is not included; it enters at the
/// factor residual.
struct PreintegratedDelta {
  Quat delta_rotation = Quat::Identity();
  Vec3 delta_velocity = Vec3::Zero();
  Vec3 delta_position = Vec3::Zero();
  double duration = 0.0;
  Mat9 covariance = Mat9::Zero();  // order: rotation, velocity, position
  ImuBias linearization_bias;

  // First-order sensitivities to bias deviations from the linearization point.
  Mat3 rotation_by_gyro_bias = Mat3::Zero();
  Mat3 velocity_by_accel_bias = Mat3::Zero();
  Mat3 velocity_by_gyro_bias = Mat3::Zero();
  Mat3 position_by_accel_bias = Mat3::Zero();
  Mat3 position_by_gyro_bias = Mat3::Zero();

  /// Bias-corrected deltas, first order in (bias - linearization_bias).
  Quat corrected_rotation(const ImuBias& bias) const;
  Vec3 corrected_velocity(const ImuBias& bias) const;
  Vec3 corrected_position(const ImuBias& bias) const;
};

/// Midpoint on-manifold integration of bias-corrected samples over [t0, t1].
/// Samples must bracket the interval; endpoint values are interpolated
/// linearly. Throws GapTooLarge when consecutive samples are more than five
/// nominal periods apart.
PreintegratedDelta preintegrate_imu(std::span<const ImuSample> samples, const ImuBias& bias, double t0, double t1,
                                    const ImuNoiseModel& noise = {});

struct NavState {
  Quat rotation = Quat::Identity();  // body to global
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  ImuBias bias;
};

/// Propagates a state through a preintegrated delta (gravity along -z).
NavState predict(const NavState& start, const PreintegratedDelta& delta);

}  // namespace agriscan
