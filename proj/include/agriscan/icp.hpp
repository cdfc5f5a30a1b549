#pragma once

#include "agriscan/geometry.hpp"

namespace agriscan {

struct IcpParams {
  double trim_ratio = 0.9;  // fraction of closest correspondences kept
  int max_iterations = 100;
  double tolerance = 1e-8;  // m, on the change of inlier rms
  Pose initial = Pose::identity();
};

struct IcpResult {
  Pose transform;  // maps source into the target frame
  double rms = 0.0;
  int iterations = 0;
};

/// Trimmed point-to-point ICP. Throws DegenerateCloud for clouds with fewer
/// than three points and NoConvergence when the rms is still changing after
/// max_iterations.
IcpResult register_icp(const PointCloud& source, const PointCloud& target, const IcpParams& params = {});

}  // namespace agriscan
