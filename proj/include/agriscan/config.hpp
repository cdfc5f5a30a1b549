#pragma once

#include "agriscan/georef.hpp"
#include "agriscan/exposure.hpp"
#include "agriscan/factor_graph.hpp"
#include "agriscan/icp.hpp"
#include "agriscan/io.hpp"
#include "agriscan/m3c2.hpp"
#include "agriscan/scene.hpp"
#include "agriscan/sensor_sim.hpp"
#include "agriscan/smoother.hpp"
#include "agriscan/texture.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace agriscan {

struct MountingConfig {
  std::vector<MountingCalibration> scanners;  // true calibration; index = scanner id
  double init_rotation_error_deg = 5.0;       // perturbation used by `calibrate`
  double init_lever_error_m = 0.05;
};

struct EvaluationConfig {
  double reference_density = 4.0e5;  // ground-truth samples per m^2
  std::size_t max_compared_points = 2'000'000;
  std::size_t max_core_points = 50'000;
  bool run_icp = true;
  std::size_t icp_max_points = 50'000;
  IcpParams icp;
  M3C2Params m3c2;
  std::vector<double> bpa_radius_multipliers{2.0, 4.0, 8.0};
  double leaf_voxel = 0.001;
  double leaf_extract_distance = 0.015;
  double leaf_normal_radius = 0.004;
};

struct TextureConfig {
  int resolution = 512;
  int cameras = 20;
  double dome_radius = 1.5;
  CameraIntrinsics intrinsics;
};

struct ExposureConfig {
  ExposureState initial;
  ExposureParams params;
  double scene_gain = 1.0;  // brightness scale of the simulated camera response
  int max_steps = 200;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  int threads = 1;
  std::string output_dir = "out";
  SceneSpec scene;
  TrajectorySpec trajectory;
  ScannerModel scanner;
  MountingConfig mounting;
  ImuNoise imu;
  double imu_gyro_bias_walk = 1e-4;
  double imu_accel_bias_walk = 1e-3;
  GnssSimConfig gnss;
  GraphConfig graph;  // noise and lever arm fields are synced from the sensor blocks
  SolverOptions solver;
  CalibrationOptions calibration;
  int calibration_profile_stride = 10;  // scan-rate divisor for the plane scene
  EvaluationConfig evaluation;
  TextureConfig texture;
  ExposureConfig exposure;

  PipelineConfig();
  /// Copies shared settings (IMU densities, lever arm, heading convention,
  /// IMU rate) into the graph block and validates ranges.
  void finalize();
};

/// Strict parse: unknown keys and wrong types throw Config; absent keys keep
/// their defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);
/// FNV-1a of the canonical JSON dump of the resolved config, leaving out
/// output_dir and threads (neither changes any artifact).
std::string config_hash(const PipelineConfig& config);

}  // namespace agriscan
