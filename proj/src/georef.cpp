#include "agriscan/georef.hpp"

#include "agriscan/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agriscan {

std::vector<Vec3> georeference_profile(const LaserProfile& profile, const Pose& body,
                                       const MountingCalibration& calib) {
  const Mat3 Rb = body.rotation_matrix();
  const Mat3 Rs = calib.boresight.toRotationMatrix();
  std::vector<Vec3> out;
  out.reserve(profile.samples.size());
  for (const LaserSample& s : profile.samples) {
    if (!s.valid) continue;
    const Vec3 local(s.x, 0.0, s.z);
    out.push_back(body.position + Rb * (calib.lever_arm + Rs * local));
  }
  return out;
}

std::vector<Vec3> georeference_profile(const LaserProfile& profile, const PoseTrack& track,
                                       const MountingCalibration& calib) {
  if (!track.covers(profile.timestamp)) {
    fail(ErrorCode::OutOfRange, "profile time " + std::to_string(profile.timestamp) + " outside track");
  }
  return georeference_profile(profile, interpolate_pose(track, profile.timestamp), calib);
}

CloudBuildResult build_point_cloud(const std::vector<ScannerStream>& streams, const PoseTrack& track,
                                   int threads) {
  if (streams.empty()) fail(ErrorCode::EmptyInput, "no scanner streams");

  struct Job {
    std::uint8_t scanner_id;
    const LaserProfile* profile;
    const MountingCalibration* calib;
  };
  std::vector<Job> jobs;
  for (const ScannerStream& s : streams) {
    for (const LaserProfile& p : s.profiles) jobs.push_back({s.scanner_id, &p, &s.calib});
  }
  if (jobs.empty()) fail(ErrorCode::EmptyInput, "no laser profiles");
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    if (a.scanner_id != b.scanner_id) return a.scanner_id < b.scanner_id;
    return a.profile->timestamp < b.profile->timestamp;
  });

  std::vector<std::vector<Vec3>> parts(jobs.size());
  std::vector<char> skipped(jobs.size(), 0);
  parallel_for(jobs.size(), threads, [&](std::size_t k) {
    const Job& j = jobs[k];
    if (!track.covers(j.profile->timestamp)) {
      skipped[k] = 1;
      return;
    }
    parts[k] = georeference_profile(*j.profile, track, *j.calib);
  });

  CloudBuildResult result;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  PointCloud& cloud = result.cloud;
  cloud.points.reserve(total);
  cloud.scanner_ids.reserve(total);
  cloud.times.reserve(total);
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (skipped[k]) {
      ++result.report.profiles_skipped;
      continue;
    }
    ++result.report.profiles_used;
    for (const Vec3& p : parts[k]) {
      cloud.points.push_back(p);
      cloud.scanner_ids.push_back(jobs[k].scanner_id);
      cloud.times.push_back(jobs[k].profile->timestamp);
    }
  }
  result.report.points = cloud.points.size();
  return result;
}

namespace {

struct Observation {
  Pose body;
  Vec3 sensor_point;  // [x, 0, z]
  int plane = -1;
};

struct Plane {
  Vec3 n;
  double d;
};

// Residual n . p_g - d and its 1x6 Jacobian w.r.t. (boresight tangent, lever).
double point_residual(const Observation& o, const Plane& pl, const Mat3& Rs, const Vec3& lever,
                      Eigen::Matrix<double, 1, 6>* J) {
  const Mat3 Rb = o.body.rotation_matrix();
  const Vec3 ps = Rs * o.sensor_point;
  const Vec3 pg = o.body.position + Rb * (lever + ps);
  if (J) {
    const Eigen::RowVector3d nRb = pl.n.transpose() * Rb;
    J->head<3>() = -nRb * Rs * so3::skew(o.sensor_point);
    J->tail<3>() = nRb;
  }
  return pl.n.dot(pg) - pl.d;
}

int assign_plane(const Vec3& pg, const std::vector<PlanePatch>& planes, const CalibrationOptions& opt) {
  int best = -1;
  double best_dist = opt.assignment_distance;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const double dist = std::abs(planes[k].unit_normal().dot(pg) - planes[k].offset());
    if (dist <= best_dist && planes[k].contains(pg, opt.assignment_margin)) {
      best = static_cast<int>(k);
      best_dist = dist;
    }
  }
  return best;
}

}  // namespace

CalibrationResult calibrate_mounting(const std::vector<LaserProfile>& profiles, const PoseTrack& track,
                                     const std::vector<PlanePatch>& planes, const MountingCalibration& init,
                                     const CalibrationOptions& opt) {
  if (planes.empty()) fail(ErrorCode::Unobservable, "no calibration planes");
  std::vector<Plane> pl;
  for (const PlanePatch& p : planes) pl.push_back({p.unit_normal(), p.offset()});

  std::vector<Observation> obs;
  for (const LaserProfile& prof : profiles) {
    if (!track.covers(prof.timestamp)) continue;
    const Pose body = interpolate_pose(track, prof.timestamp);
    for (const LaserSample& s : prof.samples) {
      if (s.valid) obs.push_back({body, Vec3(s.x, 0.0, s.z), -1});
    }
  }
  if (obs.empty()) fail(ErrorCode::EmptyInput, "no valid samples inside the track span");

  Mat3 Rs = init.boresight.normalized().toRotationMatrix();
  Vec3 lever = init.lever_arm;
  CalibrationResult result;
  result.calib = init;

  auto assign_all = [&]() {
    bool changed = false;
    for (Observation& o : obs) {
      const Vec3 pg = o.body.position + o.body.rotation_matrix() * (lever + Rs * o.sensor_point);
      const int a = assign_plane(pg, planes, opt);
      changed |= a != o.plane;
      o.plane = a;
    }
    return changed;
  };
  auto cost_of = [&](const Mat3& R, const Vec3& l, std::size_t* used) {
    double c = 0.0;
    std::size_t n = 0;
    for (const Observation& o : obs) {
      if (o.plane < 0) continue;
      const double r = point_residual(o, pl[o.plane], R, l, nullptr);
      c += r * r;
      ++n;
    }
    if (used) *used = n;
    return c;
  };

  assign_all();
  {
    std::vector<Vec3> hit_normals;
    for (const Observation& o : obs) {
      if (o.plane >= 0) hit_normals.push_back(pl[o.plane].n);
    }
    if (hit_normals.empty()) fail(ErrorCode::Unobservable, "no samples hit a calibration plane");
    Mat3 scatter = Mat3::Zero();
    for (const Vec3& n : hit_normals) scatter += n * n.transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter / static_cast<double>(hit_normals.size()));
    if (es.eigenvalues()(0) < 1e-6) {
      fail(ErrorCode::Unobservable, "hit plane normals span fewer than three directions");
    }
  }
  std::size_t used = 0;
  result.initial_rms = std::sqrt(cost_of(Rs, lever, &used) / std::max<std::size_t>(used, 1));

  double lambda = 1e-4;
  for (int round = 0; round <= opt.max_reassignments; ++round) {
    double cost = cost_of(Rs, lever, &used);
    bool converged = false;
    for (int iter = 0; iter < opt.max_iterations && !converged; ++iter) {
      Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
      for (const Observation& o : obs) {
        if (o.plane < 0) continue;
        Eigen::Matrix<double, 1, 6> J;
        const double r = point_residual(o, pl[o.plane], Rs, lever, &J);
        H += J.transpose() * J;
        g += J.transpose() * r;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
      if (es.eigenvalues()(0) <= 1e-12 * std::max(es.eigenvalues()(5), 1e-300)) {
        fail(ErrorCode::Unobservable, "calibration normal equations are rank deficient");
      }
      if (g.cwiseAbs().maxCoeff() <= opt.gradient_tolerance || cost == 0.0) {
        converged = true;
        break;
      }
      bool accepted = false;
      for (int retry = 0; retry < 20; ++retry) {
        Eigen::Matrix<double, 6, 6> A = H;
        A.diagonal() += lambda * H.diagonal();
        const Eigen::Matrix<double, 6, 1> step = A.ldlt().solve(-g);
        const Mat3 R_new = Rs * so3::exp(step.head<3>());
        const Vec3 l_new = lever + step.tail<3>();
        const double c_new = cost_of(R_new, l_new, nullptr);
        if (c_new <= cost) {
          Rs = R_new;
          lever = l_new;
          const double change = cost - c_new;
          cost = c_new;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          ++result.iterations;
          if (step.norm() <= opt.step_tolerance || change <= 1e-15 * cost) converged = true;
          break;
        }
        lambda *= 10.0;
      }
      if (!accepted) {
        // No decrease possible along the damped direction: at the numerical floor.
        converged = true;
      }
    }
    result.converged = converged;
    if (!assign_all()) break;
  }

  if (!result.converged) fail(ErrorCode::Diverged, "mounting calibration did not converge");
  result.final_rms = std::sqrt(cost_of(Rs, lever, &used) / std::max<std::size_t>(used, 1));
  result.points_used = used;
  if (result.iterations > 0) {
    Quat q = Quat(Rs).normalized();
    if (q.dot(init.boresight) < 0.0) q.coeffs() = -q.coeffs();
    result.calib.boresight = q;
    result.calib.lever_arm = lever;
  }
  return result;
}

}  // namespace agriscan
