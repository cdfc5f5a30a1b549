#pragma once

#include "agriscan/factor_graph.hpp"

#include <optional>
#include <vector>

namespace agriscan {

struct SolverOptions {
  double lambda_init = 1e-4;
  double lambda_factor = 10.0;
  int max_iterations = 100;
  double relative_tolerance = 1e-9;
  int max_retries = 12;
  // Re-preintegrate when a node's bias leaves the delta's linearization point
  // by more than these amounts.
  double accel_bias_relinearize = 0.02;
  double gyro_bias_relinearize = 0.002;
  int max_relinearizations = 3;
  bool compute_marginals = false;
};

struct OptimReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  int relinearizations = 0;
  std::vector<double> cost_history;  // after every accepted step, starting with the initial cost
  // Indices into cost_history where IMU deltas were re-preintegrated; the
  // objective changes there, so monotonicity holds only between them.
  std::vector<std::size_t> relinearized_at;
  // Filled when SolverOptions::compute_marginals is set.
  std::vector<double> yaw_sigma;       // rad, about the body z axis
  std::vector<double> position_sigma;  // m, sqrt of the position covariance trace
};

struct TrajectoryEstimate {
  PoseTrack track;
  std::vector<NavState> states;
  std::vector<ImuBias> biases;
  OptimReport report;
};

/// Total robust cost 0.5 * sum rho(|r|^2) of the graph at its node states.
double graph_cost(const FactorGraph& graph);

/// Levenberg-Marquardt on the sparse normal equations. `init` replaces the
/// graph's node states when given; the prior on node 0 is re-centered on the
/// initial value of node 0.
TrajectoryEstimate optimize_trajectory(const FactorGraph& graph, const std::vector<NavState>* init = nullptr,
                                       const SolverOptions& options = {});

}  // namespace agriscan
