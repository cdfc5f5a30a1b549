#pragma once

#include "agriscan/geometry.hpp"
#include "agriscan/scene.hpp"
#include "agriscan/sensor_types.hpp"

#include <cstdint>
#include <vector>

namespace agriscan {

/// p_g + R_b^g * (lever + R_s^b * [x, 0, z]) for every valid sample, using
/// one interpolated body pose per profile. Throws OutOfRange when the
/// profile time is outside the track.
std::vector<Vec3> georeference_profile(const LaserProfile& profile, const PoseTrack& track,
                                       const MountingCalibration& calib);

/// Same mapping with an explicit body pose.
std::vector<Vec3> georeference_profile(const LaserProfile& profile, const Pose& body,
                                       const MountingCalibration& calib);

struct ScannerStream {
  std::uint8_t scanner_id = 0;
  MountingCalibration calib;
  std::vector<LaserProfile> profiles;
};

struct CloudBuildReport {
  std::size_t profiles_used = 0;
  std::size_t profiles_skipped = 0;  // outside the track span
  std::size_t points = 0;
};

struct CloudBuildResult {
  PointCloud cloud;
  CloudBuildReport report;
};

/// Union of all georeferenced profiles, ordered by (scanner_id, timestamp).
/// Points carry scanner id and profile time.
CloudBuildResult build_point_cloud(const std::vector<ScannerStream>& streams, const PoseTrack& track,
                                   int threads = 1);

struct CalibrationOptions {
  int max_iterations = 50;
  double assignment_margin = 0.01;     // m, shrink plane extents when assigning points
  double assignment_distance = 0.15;   // m, max point-to-plane distance for assignment
  double gradient_tolerance = 1e-14;
  double step_tolerance = 1e-13;
  int max_reassignments = 5;
};

struct CalibrationResult {
  MountingCalibration calib;
  double initial_rms = 0.0;
  double final_rms = 0.0;
  std::size_t points_used = 0;
  int iterations = 0;
  bool converged = false;
};

/// Point-to-plane Levenberg-Marquardt over (boresight tangent, lever arm),
/// with planes known in the global frame and a known body track. Throws
/// Unobservable when the hit planes' normals span fewer than three
/// directions or the normal equations are rank deficient.
CalibrationResult calibrate_mounting(const std::vector<LaserProfile>& profiles, const PoseTrack& track,
                                     const std::vector<PlanePatch>& planes, const MountingCalibration& init,
                                     const CalibrationOptions& options = {});

}  // namespace agriscan
