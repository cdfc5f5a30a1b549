#pragma once

#include "agriscan/imu_preintegration.hpp"
#include "agriscan/sensor_types.hpp"

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace agriscan {

/// Tangent layout of one node: [rotation(3), position(3), velocity(3),
/// accel bias(3), gyro bias(3)]. Rotation is perturbed on the right,
/// R * Exp(delta); everything else additively.
inline constexpr int kStateDim = 15;
using StateVector = Eigen::Matrix<double, kStateDim, 1>;

struct StateNode {
  double t = 0.0;
  NavState state;
};

NavState retract(const NavState& s, const StateVector& delta);

/// Preintegration (9) plus bias random walk (6) between nodes i and i + 1.
struct ImuFactor {
  int i = 0;
  int j = 1;
  PreintegratedDelta delta;
  ImuNoiseModel noise;
};

struct GnssFactor {
  int i = 0;
  GnssFix fix;
  Vec3 lever_arm = Vec3::Zero();  // antenna in body frame
};

struct HeadingPitchFactor {
  int i = 0;
  HeadingPitchObs obs;
  double observed_yaw = 0.0;  // obs.heading mapped through heading_to_yaw
};

struct PriorFactor {
  int i = 0;
  NavState mean;
  StateVector sigma = StateVector::Ones();
};

using Factor = std::variant<ImuFactor, GnssFactor, HeadingPitchFactor, PriorFactor>;

struct RobustLoss {
  double gnss_huber_k = 3.0;  // in units of sigma; <= 0 disables
};

struct FactorGraph {
  std::vector<StateNode> nodes;
  std::vector<Factor> factors;
  RobustLoss robust;
  // Kept so deltas can be re-preintegrated when biases move far.
  std::vector<ImuSample> imu;
  ImuNoiseModel imu_noise;
};

/// Whitened residual and per-node Jacobians of one factor.
struct FactorLinearization {
  std::vector<int> nodes;
  Eigen::VectorXd residual;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, kStateDim>> jacobians;
};

FactorLinearization linearize(const Factor& factor, std::span<const StateNode> nodes);
Eigen::VectorXd whitened_residual(const Factor& factor, std::span<const StateNode> nodes);

struct GraphConfig {
  ImuNoiseModel imu_noise;
  Vec3 antenna_lever_arm = Vec3(-0.5, 0.0, 0.8);
  HeadingConvention heading_convention = HeadingConvention::NorthClockwise;
  double heading_tolerance = 0.02;  // s, max distance to the nearest keyframe
  bool use_heading = true;
  double huber_k = 3.0;
  double prior_rotation_sigma = 0.1;
  double prior_position_sigma = 0.5;
  double prior_velocity_sigma = 0.5;
  double prior_accel_bias_sigma = 0.1;
  double prior_gyro_bias_sigma = 0.01;
};

/// One keyframe per distinct GNSS fix time inside the IMU span. Input order
/// of the streams does not matter.
FactorGraph assemble_graph(std::span<const ImuSample> imu, std::span<const GnssFix> gnss,
                           std::span<const HeadingPitchObs> heading, const GraphConfig& config = {});

/// Initial node states: gyro dead reckoning for attitude, starting from the
/// first heading observation (or the first GNSS displacement without one);
/// positions and velocities from the fixes.
std::vector<NavState> dead_reckon(const FactorGraph& graph);

/// Node states sampled from a pose track; velocities by differentiating it.
std::vector<NavState> states_from_track(const FactorGraph& graph, const PoseTrack& track);

}  // namespace agriscan
