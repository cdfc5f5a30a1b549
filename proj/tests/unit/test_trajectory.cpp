#include "doctest.h"
#include "support.hpp"

#include <algorithm>

using namespace agriscan;
using namespace agriscan::testing;

TEST_CASE("factor jacobians agree with central differences") {
  std::mt19937 rng(1234);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const RandomFactorCase c = random_factor_case(rng);
    for (const Factor& f : c.factors) worst = std::max(worst, jacobian_error(f, c.nodes));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("preintegration round trip reproduces the simulated track") {
  TrajectorySpec ts;
  ts.length = 0.2;
  ts.wobble_amplitude = 0.05;
  ts.wobble_frequency = 0.2;
  const PoseTrack track = generate_trajectory(ts, 5);
  ImuNoise quiet;
  quiet.gyro_density = 0.0;
  quiet.accel_density = 0.0;
  const InertialData d = simulate_inertial_and_gnss(track, quiet, GnssSimConfig{}, 5);
  const std::vector<Vec3> vel = track_velocities(track);
  NavState s;
  s.rotation = track.poses().front().rotation;
  s.position = track.poses().front().position;
  s.velocity = vel.front();
  const double t1 = 1.0;
  const NavState e = predict(s, preintegrate_imu(d.imu, ImuBias{}, track.start_time(), t1));
  const Pose truth = interpolate_pose(track, t1);
  CHECK((e.position - truth.position).norm() < 1e-4);
  CHECK(angle_between(e.rotation, truth.rotation) < 1e-4);
}

TEST_CASE("preintegration bias correction is first-order accurate") {
  std::mt19937 rng(7);
  const auto imu = random_imu(rng, 0.0, 0.3, 100.0);
  const PreintegratedDelta d0 = preintegrate_imu(imu, ImuBias{}, 0.0, 0.3);
  // The first-order model error must shrink quadratically with the bias step.
  auto errors = [&](double scale) {
    ImuBias b;
    b.accel = scale * Vec3(1e-2, -2e-2, 1e-2);
    b.gyro = scale * Vec3(1e-3, 2e-3, -1e-3);
    const PreintegratedDelta d = preintegrate_imu(imu, b, 0.0, 0.3);
    return Eigen::Vector3d((d0.corrected_position(b) - d.delta_position).norm(),
                           (d0.corrected_velocity(b) - d.delta_velocity).norm(),
                           angle_between(d0.corrected_rotation(b), d.delta_rotation));
  };
  const Eigen::Vector3d e1 = errors(1.0);
  const Eigen::Vector3d e2 = errors(0.5);
  for (int k = 0; k < 3; ++k) CHECK(e2[k] < 0.3 * e1[k]);
}

TEST_CASE("preintegration rejects gaps and uncovered intervals") {
  std::mt19937 rng(3);
  auto imu = random_imu(rng, 0.0, 1.0, 100.0);
  CHECK_THROWS_AS(preintegrate_imu(imu, ImuBias{}, -0.5, 0.5), Error);
  imu.erase(imu.begin() + 20, imu.begin() + 40);
  try {
    preintegrate_imu(imu, ImuBias{}, 0.0, 0.9);
    FAIL("expected GapTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GapTooLarge);
  }
}

TEST_CASE("noiseless data is recovered from a perturbed start") {
  const NoiselessCase c = noiseless_case(20.0, 11);
  const FactorGraph g = assemble_graph(c.imu, c.gnss, c.heading, c.config);
  REQUIRE(g.nodes.size() == c.truth.size());
  std::mt19937 rng(99);
  std::vector<NavState> init = c.truth;
  for (std::size_t k = 1; k < init.size(); ++k) {
    init[k].position += random_vec(rng, 0.05);
    init[k].velocity += random_vec(rng, 0.02);
    init[k].rotation = (init[k].rotation * so3::exp_quat(random_vec(rng, 0.02))).normalized();
  }
  const TrajectoryEstimate est = optimize_trajectory(g, &init);
  CHECK(est.report.converged);
  double worst = 0.0;
  for (std::size_t k = 0; k < c.truth.size(); ++k) {
    worst = std::max(worst, (est.states[k].position - c.truth[k].position).norm());
    worst = std::max(worst, angle_between(est.states[k].rotation, c.truth[k].rotation));
    worst = std::max(worst, (est.states[k].velocity - c.truth[k].velocity).norm());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("cost never increases between relinearizations") {
  TrajectorySpec ts;
  ts.length = 2.0;
  const PoseTrack truth = generate_trajectory(ts, 4);
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 4);
  const FactorGraph g = assemble_graph(d.imu, d.gnss, d.heading);
  const TrajectoryEstimate est = optimize_trajectory(g);
  const auto& h = est.report.cost_history;
  REQUIRE(h.size() >= 2);
  for (std::size_t k = 1; k < h.size(); ++k) {
    const bool relin = std::find(est.report.relinearized_at.begin(), est.report.relinearized_at.end(), k) !=
                       est.report.relinearized_at.end();
    if (!relin) CHECK(h[k] <= h[k - 1]);
  }
  CHECK(est.report.final_cost < est.report.initial_cost);
}

TEST_CASE("graph assembly is invariant to input order") {
  TrajectorySpec ts;
  ts.length = 1.0;
  const PoseTrack truth = generate_trajectory(ts, 8);
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 8);
  const FactorGraph g0 = assemble_graph(d.imu, d.gnss, d.heading);
  const double c0 = graph_cost(g0);
  std::mt19937 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    auto gnss = d.gnss;
    auto imu = d.imu;
    auto heading = d.heading;
    std::shuffle(gnss.begin(), gnss.end(), rng);
    std::shuffle(imu.begin(), imu.end(), rng);
    std::shuffle(heading.begin(), heading.end(), rng);
    const FactorGraph g = assemble_graph(imu, gnss, heading);
    REQUIRE(g.nodes.size() == g0.nodes.size());
    for (std::size_t k = 0; k < g.nodes.size(); ++k) {
      CHECK(g.nodes[k].t == g0.nodes[k].t);
      CHECK(g.nodes[k].state.position == g0.nodes[k].state.position);
    }
    CHECK(graph_cost(g) == c0);
  }
}

TEST_CASE("graph assembly errors") {
  TrajectorySpec ts;
  ts.length = 0.5;
  const PoseTrack truth = generate_trajectory(ts, 2);
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 2);
  try {
    assemble_graph({}, d.gnss, d.heading);
    FAIL("expected EmptyStream");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyStream);
  }
  auto late = d.gnss;
  for (GnssFix& f : late) f.t += 100.0;
  try {
    assemble_graph(d.imu, late, d.heading);
    FAIL("expected NoOverlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoOverlap);
  }
}

TEST_CASE("short noisy run converges near the truth") {
  TrajectorySpec ts;
  ts.length = 1.0;
  ts.wobble_amplitude = 0.05;
  ts.wobble_frequency = 0.1;
  const PoseTrack truth = generate_trajectory(ts, 3);
  GnssSimConfig gc;
  gc.sigma_vertical = 0.01;
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, gc, 3);
  const FactorGraph g = assemble_graph(d.imu, d.gnss, d.heading);
  const TrajectoryEstimate est = optimize_trajectory(g);
  CHECK(est.report.converged);
  double se = 0.0;
  for (std::size_t k = 0; k < est.states.size(); ++k) {
    se += (est.states[k].position - interpolate_pose(truth, g.nodes[k].t).position).squaredNorm();
  }
  CHECK(std::sqrt(se / static_cast<double>(est.states.size())) < 0.02);
  CHECK(est.track.size() == g.nodes.size());
}

TEST_CASE("constant specific force and constant rate integrate analytically") {
  const double T = 1.3;
  const Vec3 a(0.4, -0.2, 0.7);
  std::vector<ImuSample> imu;
  for (int k = 0; k <= 130; ++k) imu.push_back({0.01 * k, Vec3::Zero(), a});
  const PreintegratedDelta d = preintegrate_imu(imu, ImuBias{}, 0.0, T);
  CHECK((d.delta_velocity - a * T).norm() < 1e-9);
  CHECK((d.delta_position - 0.5 * a * T * T).norm() < 1e-9);
  CHECK(angle_between(d.delta_rotation, Quat::Identity()) < 1e-12);

  const double w = 0.35;
  for (ImuSample& s : imu) {
    s.gyro = Vec3(0.0, 0.0, w);
    s.accel = Vec3::Zero();
  }
  const PreintegratedDelta r = preintegrate_imu(imu, ImuBias{}, 0.0, T);
  CHECK(std::abs(so3::log(r.delta_rotation).z() - w * T) < 1e-9);
  CHECK(so3::log(r.delta_rotation).head<2>().norm() < 1e-12);

  for (ImuSample& s : imu) s.gyro.setZero();
  const PreintegratedDelta z = preintegrate_imu(imu, ImuBias{}, 0.0, 1.0);
  CHECK(z.delta_position.norm() == 0.0);
  CHECK(z.delta_velocity.norm() == 0.0);
  CHECK(z.duration == doctest::Approx(1.0));
}

TEST_CASE("one keyframe per fix and one imu factor per pair") {
  TrajectorySpec ts;
  ts.length = 0.6;
  const PoseTrack truth = generate_trajectory(ts, 6);
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 6);
  REQUIRE(d.gnss.size() == 61);
  const FactorGraph g = assemble_graph(d.imu, d.gnss, d.heading);
  std::size_t imu = 0, gnss = 0, prior = 0;
  for (const Factor& f : g.factors) {
    imu += std::holds_alternative<ImuFactor>(f);
    gnss += std::holds_alternative<GnssFactor>(f);
    prior += std::holds_alternative<PriorFactor>(f);
  }
  CHECK(g.nodes.size() == 61);
  CHECK(imu == 60);
  CHECK(gnss == 61);
  CHECK(prior == 1);
}

TEST_CASE("a gnss outage is bridged by a single imu factor") {
  TrajectorySpec ts;
  ts.length = 1.2;
  const PoseTrack truth = generate_trajectory(ts, 7);
  InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 7);
  const double t0 = truth.start_time() + 3.0, t1 = t0 + 5.0;
  std::erase_if(d.gnss, [&](const GnssFix& f) { return f.t > t0 + 1e-9 && f.t < t1 - 1e-9; });
  const FactorGraph g = assemble_graph(d.imu, d.gnss, d.heading);
  bool bridged = false;
  for (const Factor& f : g.factors) {
    if (const auto* imu = std::get_if<ImuFactor>(&f)) {
      CHECK(imu->j == imu->i + 1);
      if (std::abs(imu->delta.duration - 5.0) < 1e-9) bridged = true;
    }
  }
  CHECK(bridged);
  const TrajectoryEstimate est = optimize_trajectory(g);
  CHECK(est.report.converged);
}

TEST_CASE("solver converges without heading observations") {
  TrajectorySpec ts;
  ts.length = 1.0;
  ts.wobble_amplitude = 0.05;
  ts.wobble_frequency = 0.1;
  const PoseTrack truth = generate_trajectory(ts, 12);
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 12);
  GraphConfig with, without;
  without.use_heading = false;
  SolverOptions opts;
  opts.compute_marginals = true;
  const TrajectoryEstimate a = optimize_trajectory(assemble_graph(d.imu, d.gnss, d.heading, with), nullptr, opts);
  const TrajectoryEstimate b = optimize_trajectory(assemble_graph(d.imu, d.gnss, d.heading, without), nullptr, opts);
  CHECK(a.report.converged);
  CHECK(b.report.converged);
  REQUIRE(a.report.yaw_sigma.size() == b.report.yaw_sigma.size());
  const std::size_t mid = a.report.yaw_sigma.size() / 2;
  CHECK(b.report.yaw_sigma[mid] > a.report.yaw_sigma[mid]);
}

TEST_CASE("zero-bias simulation keeps estimated biases within their priors") {
  TrajectorySpec ts;
  ts.length = 1.0;
  ts.wobble_amplitude = 0.05;
  ts.wobble_frequency = 0.1;
  const PoseTrack truth = generate_trajectory(ts, 13);
  const InertialData d = simulate_inertial_and_gnss(truth, ImuNoise{}, GnssSimConfig{}, 13);
  const GraphConfig gc;
  const TrajectoryEstimate est = optimize_trajectory(assemble_graph(d.imu, d.gnss, d.heading, gc));
  REQUIRE(est.report.converged);
  for (const ImuBias& b : est.biases) {
    CHECK(b.accel.cwiseAbs().maxCoeff() < 3.0 * gc.prior_accel_bias_sigma);
    CHECK(b.gyro.cwiseAbs().maxCoeff() < 3.0 * gc.prior_gyro_bias_sigma);
  }
}
