#include "agriscan/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace agriscan {

namespace {

using Mat15 = Eigen::Matrix<double, kStateDim, kStateDim>;
using JacBlock = Eigen::Matrix<double, Eigen::Dynamic, kStateDim>;

const Vec3 kGravityVec(0.0, 0.0, -kGravity);

Eigen::Matrix<double, 9, 9> imu_sqrt_information(const Mat9& covariance) {
  Eigen::LLT<Mat9> llt(covariance);
  if (llt.info() != Eigen::Success) fail(ErrorCode::SingularSystem, "IMU factor covariance is not positive definite");
  // L L^T = C  =>  whitening W = L^{-1}, so W^T W = C^{-1}.
  return llt.matrixL().solve(Mat9::Identity());
}

FactorLinearization linearize_imu(const ImuFactor& f, std::span<const StateNode> nodes) {
  const NavState& a = nodes[f.i].state;
  const NavState& b = nodes[f.j].state;
  const PreintegratedDelta& d = f.delta;
  const double T = d.duration;
  const Mat3 Ri = a.rotation.toRotationMatrix();
  const Mat3 Rj = b.rotation.toRotationMatrix();
  const Mat3 RiT = Ri.transpose();
  const Vec3 dbg = a.bias.gyro - d.linearization_bias.gyro;
  const Vec3 phi = d.rotation_by_gyro_bias * dbg;
  const Mat3 corrected = d.delta_rotation.toRotationMatrix() * so3::exp(phi);

  const Mat3 err_rot = corrected.transpose() * RiT * Rj;
  const Vec3 r_rot = so3::log(err_rot);
  const Vec3 vel_term = RiT * (b.velocity - a.velocity - kGravityVec * T);
  const Vec3 pos_term = RiT * (b.position - a.position - a.velocity * T - 0.5 * kGravityVec * T * T);
  const Vec3 r_vel = vel_term - d.corrected_velocity(a.bias);
  const Vec3 r_pos = pos_term - d.corrected_position(a.bias);

  Eigen::Matrix<double, 15, 1> r;
  r << r_rot, r_vel, r_pos, b.bias.accel - a.bias.accel, b.bias.gyro - a.bias.gyro;

  Eigen::Matrix<double, 15, 15> Ji = Eigen::Matrix<double, 15, 15>::Zero();
  Eigen::Matrix<double, 15, 15> Jj = Eigen::Matrix<double, 15, 15>::Zero();
  const Mat3 jr_inv = so3::right_jacobian_inverse(r_rot);
  // rotation rows
  Ji.block<3, 3>(0, 0) = -jr_inv * Rj.transpose() * Ri;
  Ji.block<3, 3>(0, 12) = -jr_inv * err_rot.transpose() * so3::right_jacobian(phi) * d.rotation_by_gyro_bias;
  Jj.block<3, 3>(0, 0) = jr_inv;
  // velocity rows
  Ji.block<3, 3>(3, 0) = so3::skew(vel_term);
  Ji.block<3, 3>(3, 6) = -RiT;
  Ji.block<3, 3>(3, 9) = -d.velocity_by_accel_bias;
  Ji.block<3, 3>(3, 12) = -d.velocity_by_gyro_bias;
  Jj.block<3, 3>(3, 6) = RiT;
  // position rows
  Ji.block<3, 3>(6, 0) = so3::skew(pos_term);
  Ji.block<3, 3>(6, 3) = -RiT;
  Ji.block<3, 3>(6, 6) = -RiT * T;
  Ji.block<3, 3>(6, 9) = -d.position_by_accel_bias;
  Ji.block<3, 3>(6, 12) = -d.position_by_gyro_bias;
  Jj.block<3, 3>(6, 3) = RiT;
  // bias random walk
  Ji.block<6, 6>(9, 9) = -Eigen::Matrix<double, 6, 6>::Identity();
  Jj.block<6, 6>(9, 9) = Eigen::Matrix<double, 6, 6>::Identity();

  Eigen::Matrix<double, 15, 15> W = Eigen::Matrix<double, 15, 15>::Zero();
  W.block<9, 9>(0, 0) = imu_sqrt_information(d.covariance);
  const double sa = f.noise.accel_bias_walk * std::sqrt(T);
  const double sg = f.noise.gyro_bias_walk * std::sqrt(T);
  if (!(sa > 0.0) || !(sg > 0.0)) fail(ErrorCode::InvalidParams, "bias random walk must be positive");
  W.block<3, 3>(9, 9) = Mat3::Identity() / sa;
  W.block<3, 3>(12, 12) = Mat3::Identity() / sg;

  FactorLinearization lin;
  lin.nodes = {f.i, f.j};
  lin.residual = W * r;
  lin.jacobians = {W * Ji, W * Jj};
  return lin;
}

FactorLinearization linearize_gnss(const GnssFactor& f, std::span<const StateNode> nodes) {
  const NavState& s = nodes[f.i].state;
  const Mat3 R = s.rotation.toRotationMatrix();
  const Vec3 inv_sigma = f.fix.sigma.cwiseInverse();
  const Vec3 r = (s.position + R * f.lever_arm - f.fix.position).cwiseProduct(inv_sigma);
  JacBlock J = JacBlock::Zero(3, kStateDim);
  J.block<3, 3>(0, 0) = -R * so3::skew(f.lever_arm);
  J.block<3, 3>(0, 3) = Mat3::Identity();
  J = inv_sigma.asDiagonal() * J;
  FactorLinearization lin;
  lin.nodes = {f.i};
  lin.residual = r;
  lin.jacobians = {J};
  return lin;
}

FactorLinearization linearize_heading(const HeadingPitchFactor& f, std::span<const StateNode> nodes) {
  const NavState& s = nodes[f.i].state;
  const Mat3 R = s.rotation.toRotationMatrix();
  const Vec3 d = R.col(0);
  const double rho2 = d.x() * d.x() + d.y() * d.y();
  const double rho = std::sqrt(rho2);
  const double heading = std::atan2(d.y(), d.x());
  const double pitch = std::atan2(d.z(), rho);
  Eigen::Vector2d r(wrap_angle(heading - f.observed_yaw) / f.obs.heading_sigma,
                    (pitch - f.obs.pitch) / f.obs.pitch_sigma);

  Eigen::Matrix<double, 2, 3> dh_dd;
  const double n2 = rho2 + d.z() * d.z();
  dh_dd.row(0) << -d.y() / rho2, d.x() / rho2, 0.0;
  dh_dd.row(1) << -d.z() * d.x() / (rho * n2), -d.z() * d.y() / (rho * n2), rho / n2;
  const Mat3 dd_dtheta = -R * so3::skew(Vec3::UnitX());
  JacBlock J = JacBlock::Zero(2, kStateDim);
  J.block<2, 3>(0, 0) = dh_dd * dd_dtheta;
  J.row(0) /= f.obs.heading_sigma;
  J.row(1) /= f.obs.pitch_sigma;
  FactorLinearization lin;
  lin.nodes = {f.i};
  lin.residual = r;
  lin.jacobians = {J};
  return lin;
}

FactorLinearization linearize_prior(const PriorFactor& f, std::span<const StateNode> nodes) {
  const NavState& s = nodes[f.i].state;
  StateVector r;
  const Vec3 r_rot = so3::log(Quat(f.mean.rotation.conjugate() * s.rotation));
  r << r_rot, s.position - f.mean.position, s.velocity - f.mean.velocity, s.bias.accel - f.mean.bias.accel,
      s.bias.gyro - f.mean.bias.gyro;
  JacBlock J = JacBlock::Identity(kStateDim, kStateDim);
  J.block<3, 3>(0, 0) = so3::right_jacobian_inverse(r_rot);
  const StateVector w = f.sigma.cwiseInverse();
  FactorLinearization lin;
  lin.nodes = {f.i};
  lin.residual = r.cwiseProduct(w);
  lin.jacobians = {w.asDiagonal() * J};
  return lin;
}

}  // namespace

NavState retract(const NavState& s, const StateVector& delta) {
  NavState out;
  out.rotation = renormalized(s.rotation * so3::exp_quat(delta.segment<3>(0)));
  out.position = s.position + delta.segment<3>(3);
  out.velocity = s.velocity + delta.segment<3>(6);
  out.bias.accel = s.bias.accel + delta.segment<3>(9);
  out.bias.gyro = s.bias.gyro + delta.segment<3>(12);
  return out;
}

FactorLinearization linearize(const Factor& factor, std::span<const StateNode> nodes) {
  return std::visit(
      [&](const auto& f) -> FactorLinearization {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ImuFactor>) {
          return linearize_imu(f, nodes);
        } else if constexpr (std::is_same_v<T, GnssFactor>) {
          return linearize_gnss(f, nodes);
        } else if constexpr (std::is_same_v<T, HeadingPitchFactor>) {
          return linearize_heading(f, nodes);
        } else {
          return linearize_prior(f, nodes);
        }
      },
      factor);
}

Eigen::VectorXd whitened_residual(const Factor& factor, std::span<const StateNode> nodes) {
  return linearize(factor, nodes).residual;
}

FactorGraph assemble_graph(std::span<const ImuSample> imu_in, std::span<const GnssFix> gnss_in,
                           std::span<const HeadingPitchObs> heading_in, const GraphConfig& config) {
  if (imu_in.empty()) fail(ErrorCode::EmptyStream, "IMU stream is empty");
  if (gnss_in.empty()) fail(ErrorCode::EmptyStream, "GNSS stream is empty");

  FactorGraph graph;
  graph.imu_noise = config.imu_noise;
  graph.robust.gnss_huber_k = config.huber_k;
  graph.imu.assign(imu_in.begin(), imu_in.end());
  std::stable_sort(graph.imu.begin(), graph.imu.end(),
                   [](const ImuSample& a, const ImuSample& b) { return a.t < b.t; });
  for (std::size_t k = 1; k < graph.imu.size(); ++k) {
    if (!(graph.imu[k].t > graph.imu[k - 1].t)) fail(ErrorCode::InvalidArgument, "duplicate IMU timestamps");
  }
  const double imu_t0 = graph.imu.front().t;
  const double imu_t1 = graph.imu.back().t;

  auto fix_key = [](const GnssFix& f) {
    return std::make_tuple(f.t, f.position.x(), f.position.y(), f.position.z(), f.sigma.x(), f.sigma.y(),
                           f.sigma.z());
  };
  std::vector<GnssFix> gnss;
  for (const GnssFix& f : gnss_in) {
    if (f.t >= imu_t0 && f.t <= imu_t1) gnss.push_back(f);
  }
  if (gnss.empty()) fail(ErrorCode::NoOverlap, "no GNSS fix falls inside the IMU time span");
  std::sort(gnss.begin(), gnss.end(), [&](const GnssFix& a, const GnssFix& b) { return fix_key(a) < fix_key(b); });

  std::vector<int> fix_node(gnss.size());
  for (std::size_t k = 0; k < gnss.size(); ++k) {
    if (graph.nodes.empty() || gnss[k].t != graph.nodes.back().t) {
      StateNode node;
      node.t = gnss[k].t;
      graph.nodes.push_back(node);
    }
    fix_node[k] = static_cast<int>(graph.nodes.size()) - 1;
  }

  PriorFactor prior;
  prior.i = 0;
  prior.sigma << Vec3::Constant(config.prior_rotation_sigma), Vec3::Constant(config.prior_position_sigma),
      Vec3::Constant(config.prior_velocity_sigma), Vec3::Constant(config.prior_accel_bias_sigma),
      Vec3::Constant(config.prior_gyro_bias_sigma);
  graph.factors.emplace_back(prior);

  for (std::size_t k = 0; k + 1 < graph.nodes.size(); ++k) {
    ImuFactor f;
    f.i = static_cast<int>(k);
    f.j = static_cast<int>(k + 1);
    f.delta = preintegrate_imu(graph.imu, ImuBias{}, graph.nodes[k].t, graph.nodes[k + 1].t, config.imu_noise);
    f.noise = config.imu_noise;
    graph.factors.emplace_back(std::move(f));
  }
  for (std::size_t k = 0; k < gnss.size(); ++k) {
    GnssFactor f;
    f.i = fix_node[k];
    f.fix = gnss[k];
    f.lever_arm = config.antenna_lever_arm;
    graph.factors.emplace_back(f);
  }

  if (config.use_heading) {
    std::vector<HeadingPitchObs> hp(heading_in.begin(), heading_in.end());
    std::sort(hp.begin(), hp.end(), [](const HeadingPitchObs& a, const HeadingPitchObs& b) {
      return std::tie(a.t, a.heading, a.pitch) < std::tie(b.t, b.heading, b.pitch);
    });
    for (const HeadingPitchObs& obs : hp) {
      auto it = std::lower_bound(graph.nodes.begin(), graph.nodes.end(), obs.t,
                                 [](const StateNode& n, double t) { return n.t < t; });
      int best = -1;
      double best_dt = config.heading_tolerance;
      for (auto c : {it, it == graph.nodes.begin() ? it : it - 1}) {
        if (c == graph.nodes.end()) continue;
        const double dt = std::abs(c->t - obs.t);
        if (dt <= best_dt && (best < 0 || dt < std::abs(graph.nodes[best].t - obs.t))) {
          best = static_cast<int>(c - graph.nodes.begin());
          best_dt = dt;
        }
      }
      if (best < 0) continue;
      HeadingPitchFactor f;
      f.i = best;
      f.obs = obs;
      f.observed_yaw = heading_to_yaw(obs.heading, config.heading_convention);
      graph.factors.emplace_back(f);
    }
  }

  const std::vector<NavState> init = dead_reckon(graph);
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) graph.nodes[k].state = init[k];
  std::get<PriorFactor>(graph.factors.front()).mean = init.front();
  return graph;
}

std::vector<NavState> dead_reckon(const FactorGraph& graph) {
  const std::size_t n = graph.nodes.size();
  std::vector<const GnssFactor*> fix(n, nullptr);
  const HeadingPitchFactor* first_heading = nullptr;
  std::vector<const ImuFactor*> imu(n, nullptr);
  for (const Factor& f : graph.factors) {
    if (const auto* g = std::get_if<GnssFactor>(&f)) {
      if (!fix[g->i]) fix[g->i] = g;
    } else if (const auto* h = std::get_if<HeadingPitchFactor>(&f)) {
      if (!first_heading || h->obs.t < first_heading->obs.t) first_heading = h;
    } else if (const auto* m = std::get_if<ImuFactor>(&f)) {
      imu[m->i] = m;
    }
  }

  double yaw = 0.0;
  double pitch = 0.0;
  if (first_heading) {
    yaw = first_heading->observed_yaw;
    pitch = first_heading->obs.pitch;
  } else if (fix[0]) {
    for (std::size_t k = 1; k < n; ++k) {
      if (!fix[k]) continue;
      const Vec3 d = fix[k]->fix.position - fix[0]->fix.position;
      if (d.head<2>().norm() > 0.05) {
        yaw = std::atan2(d.y(), d.x());
        break;
      }
    }
  }

  std::vector<NavState> out(n);
  out[0].rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(-pitch, Vec3::UnitY()));
  for (std::size_t k = 0; k + 1 < n; ++k) {
    out[k + 1].rotation =
        imu[k] ? renormalized(out[k].rotation * imu[k]->delta.delta_rotation) : out[k].rotation;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (fix[k]) {
      out[k].position = fix[k]->fix.position - out[k].rotation * fix[k]->lever_arm;
    } else if (k > 0) {
      out[k].position = out[k - 1].position;
    }
  }
  for (std::size_t k = 0; k < n && n > 1; ++k) {
    const std::size_t a = k == 0 ? 0 : k - 1;
    const std::size_t b = k + 1 == n ? k : k + 1;
    out[k].velocity = (out[b].position - out[a].position) / (graph.nodes[b].t - graph.nodes[a].t);
  }
  return out;
}

std::vector<NavState> states_from_track(const FactorGraph& graph, const PoseTrack& track) {
  std::vector<NavState> out(graph.nodes.size());
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
    const double t = graph.nodes[k].t;
    const Pose p = interpolate_pose(track, t);
    out[k].rotation = p.rotation;
    out[k].position = p.position;
    const double h = 1e-3;
    const double ta = std::max(track.start_time(), t - h);
    const double tb = std::min(track.end_time(), t + h);
    if (tb > ta) {
      out[k].velocity = (interpolate_pose(track, tb).position - interpolate_pose(track, ta).position) / (tb - ta);
    }
  }
  return out;
}

}  // namespace agriscan
