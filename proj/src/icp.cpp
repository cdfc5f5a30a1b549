#include "agriscan/icp.hpp"

#include "agriscan/kdtree.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agriscan {

IcpResult register_icp(const PointCloud& source, const PointCloud& target, const IcpParams& params) {
  if (source.size() < 3 || target.size() < 3) fail(ErrorCode::DegenerateCloud, "ICP needs at least three points");
  if (!(params.trim_ratio > 0.0 && params.trim_ratio <= 1.0)) {
    fail(ErrorCode::InvalidParams, "trim ratio must be in (0, 1]");
  }
  const KdTree tree(target.points);
  const std::size_t n = source.size();
  const std::size_t keep = std::max<std::size_t>(3, static_cast<std::size_t>(std::floor(params.trim_ratio * n)));

  Pose T = params.initial;
  double prev_rms = std::numeric_limits<double>::infinity();
  std::vector<int> match(n);
  std::vector<double> dist2(n);
  std::vector<std::size_t> order(n);
  Eigen::Matrix3Xd src(3, keep);
  Eigen::Matrix3Xd dst(3, keep);

  IcpResult result;
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    const Mat3 R = T.rotation_matrix();
    for (std::size_t i = 0; i < n; ++i) {
      const auto [idx, d2] = tree.nearest(R * source.points[i] + T.position);
      match[i] = idx;
      dist2[i] = d2;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist2[a] < dist2[b]; });
    double sum = 0.0;
    for (std::size_t k = 0; k < keep; ++k) sum += dist2[order[k]];
    const double rms = std::sqrt(sum / static_cast<double>(keep));
    result.rms = rms;
    result.iterations = iter;
    result.transform = T;
    if (rms == 0.0 || std::abs(prev_rms - rms) < params.tolerance) return result;
    prev_rms = rms;

    // Refit the full transform from the original source points.
    std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(kept.begin(), kept.end());
    for (std::size_t k = 0; k < keep; ++k) {
      src.col(static_cast<Eigen::Index>(k)) = source.points[kept[k]];
      dst.col(static_cast<Eigen::Index>(k)) = target.points[static_cast<std::size_t>(match[kept[k]])];
    }
    const Mat4 M = Eigen::umeyama(src, dst, false);
    T = Pose(M.block<3, 1>(0, 3), Quat(Mat3(M.block<3, 3>(0, 0))).normalized());
  }
  fail(ErrorCode::NoConvergence, "ICP did not converge in " + std::to_string(params.max_iterations) + " iterations");
}

}  // namespace agriscan
