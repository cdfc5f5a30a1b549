#include "agriscan/smoother.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <string>

namespace agriscan {

namespace {

using Mat15 = Eigen::Matrix<double, kStateDim, kStateDim>;

struct RobustWeight {
  double cost;    // 0.5 * rho(s^2)
  double weight;  // IRLS weight on the whitened residual
};

RobustWeight robust_weight(const Factor& factor, double squared_norm, const RobustLoss& loss) {
  if (std::holds_alternative<GnssFactor>(factor) && loss.gnss_huber_k > 0.0) {
    const double k = loss.gnss_huber_k;
    const double s = std::sqrt(squared_norm);
    if (s > k) return {0.5 * (2.0 * k * s - k * k), k / s};
  }
  return {0.5 * squared_norm, 1.0};
}

double total_cost(const FactorGraph& graph, std::span<const StateNode> nodes) {
  double cost = 0.0;
  for (const Factor& f : graph.factors) {
    cost += robust_weight(f, whitened_residual(f, nodes).squaredNorm(), graph.robust).cost;
  }
  return cost;
}

// Normal equations accumulated into a block-tridiagonal layout; every factor
// touches one node or two consecutive nodes.
struct NormalEquations {
  std::vector<Mat15> diag;
  std::vector<Mat15> upper;  // block (k, k+1)
  Eigen::VectorXd gradient;  // J^T r

  explicit NormalEquations(std::size_t n)
      : diag(n, Mat15::Zero()), upper(n > 0 ? n - 1 : 0, Mat15::Zero()), gradient(Eigen::VectorXd::Zero(15 * n)) {}

  Eigen::SparseMatrix<double> to_sparse(double lambda) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(diag.size() * 225 + upper.size() * 450);
    for (std::size_t k = 0; k < diag.size(); ++k) {
      const int o = static_cast<int>(15 * k);
      for (int c = 0; c < 15; ++c) {
        for (int r = 0; r < 15; ++r) {
          double v = diag[k](r, c);
          if (r == c) v += lambda * diag[k](r, c);
          if (v != 0.0 || r == c) trip.emplace_back(o + r, o + c, v);
        }
      }
    }
    for (std::size_t k = 0; k < upper.size(); ++k) {
      const int o = static_cast<int>(15 * k);
      for (int c = 0; c < 15; ++c) {
        for (int r = 0; r < 15; ++r) {
          const double v = upper[k](r, c);
          if (v == 0.0) continue;
          trip.emplace_back(o + r, o + 15 + c, v);
          trip.emplace_back(o + 15 + c, o + r, v);
        }
      }
    }
    Eigen::SparseMatrix<double> H(static_cast<Eigen::Index>(15 * diag.size()),
                                  static_cast<Eigen::Index>(15 * diag.size()));
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
  }
};

NormalEquations build_normal_equations(const FactorGraph& graph, std::span<const StateNode> nodes) {
  NormalEquations ne(nodes.size());
  for (const Factor& f : graph.factors) {
    FactorLinearization lin = linearize(f, nodes);
    const double w = robust_weight(f, lin.residual.squaredNorm(), graph.robust).weight;
    const double sw = std::sqrt(w);
    lin.residual *= sw;
    for (auto& J : lin.jacobians) J *= sw;
    for (std::size_t a = 0; a < lin.nodes.size(); ++a) {
      const int na = lin.nodes[a];
      ne.gradient.segment<15>(15 * na) += lin.jacobians[a].transpose() * lin.residual;
      ne.diag[na] += lin.jacobians[a].transpose() * lin.jacobians[a];
      for (std::size_t b = 0; b < lin.nodes.size(); ++b) {
        const int nb = lin.nodes[b];
        if (nb != na + 1) continue;
        ne.upper[na] += lin.jacobians[a].transpose() * lin.jacobians[b];
      }
    }
  }
  return ne;
}

bool factorize(Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt, const Eigen::SparseMatrix<double>& H) {
  ldlt.compute(H);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd D = ldlt.vectorD();
  const double dmax = D.cwiseAbs().maxCoeff();
  return D.minCoeff() > 1e-13 * dmax && std::isfinite(dmax);
}

void check_connected(const FactorGraph& graph) {
  const std::size_t n = graph.nodes.size();
  std::vector<char> linked(n > 0 ? n - 1 : 0, 0);
  for (const Factor& f : graph.factors) {
    if (const auto* m = std::get_if<ImuFactor>(&f)) {
      if (m->i < 0 || m->j != m->i + 1 || m->j >= static_cast<int>(n)) {
        fail(ErrorCode::InvalidArgument, "IMU factor must link consecutive existing nodes");
      }
      linked[m->i] = 1;
    }
  }
  for (std::size_t k = 0; k < linked.size(); ++k) {
    if (!linked[k]) fail(ErrorCode::InvalidArgument, "factor graph is not connected at node " + std::to_string(k));
  }
}

void relinearize(FactorGraph& graph) {
  for (Factor& f : graph.factors) {
    if (auto* m = std::get_if<ImuFactor>(&f)) {
      const NavState& s = graph.nodes[m->i].state;
      m->delta = preintegrate_imu(graph.imu, s.bias, graph.nodes[m->i].t, graph.nodes[m->j].t, m->noise);
    }
  }
}

bool needs_relinearization(const FactorGraph& graph, const SolverOptions& opt) {
  for (const Factor& f : graph.factors) {
    if (const auto* m = std::get_if<ImuFactor>(&f)) {
      const ImuBias& b = graph.nodes[m->i].state.bias;
      if ((b.accel - m->delta.linearization_bias.accel).norm() > opt.accel_bias_relinearize ||
          (b.gyro - m->delta.linearization_bias.gyro).norm() > opt.gyro_bias_relinearize) {
        return true;
      }
    }
  }
  return false;
}

// One LM run; updates graph.nodes in place.
void run_lm(FactorGraph& graph, const SolverOptions& opt, OptimReport& report) {
  double cost = total_cost(graph, graph.nodes);
  if (!std::isfinite(cost)) fail(ErrorCode::Diverged, "initial cost is not finite");
  if (report.cost_history.empty()) report.cost_history.push_back(cost);
  double lambda = opt.lambda_init;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  std::vector<StateNode> trial(graph.nodes.size());

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    if (cost <= 1e-30) {
      report.converged = true;
      return;
    }
    const NormalEquations ne = build_normal_equations(graph, graph.nodes);
    bool accepted = false;
    for (int retry = 0; retry <= opt.max_retries; ++retry) {
      const Eigen::SparseMatrix<double> H = ne.to_sparse(lambda);
      if (!factorize(ldlt, H)) {
        if (lambda > 1e6 || retry == opt.max_retries) {
          fail(ErrorCode::SingularSystem, "normal equations are rank deficient");
        }
        lambda *= opt.lambda_factor;
        continue;
      }
      const Eigen::VectorXd delta = ldlt.solve(-ne.gradient);
      for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
        trial[k].t = graph.nodes[k].t;
        trial[k].state = retract(graph.nodes[k].state, delta.segment<15>(static_cast<Eigen::Index>(15 * k)));
      }
      const double new_cost = total_cost(graph, trial);
      if (std::isfinite(new_cost) && new_cost <= cost) {
        graph.nodes.swap(trial);
        const double change = cost - new_cost;
        cost = new_cost;
        report.cost_history.push_back(cost);
        ++report.iterations;
        lambda = std::max(lambda / opt.lambda_factor, 1e-12);
        accepted = true;
        if (change <= opt.relative_tolerance * std::max(cost, 1e-300)) {
          report.converged = true;
          return;
        }
        break;
      }
      // Rejected. If the quadratic model itself promises no meaningful
      // decrease we are at the floating-point floor of a minimum.
      const Eigen::VectorXd Hundamped_delta = ne.to_sparse(0.0) * delta;
      const double predicted = -ne.gradient.dot(delta) - 0.5 * delta.dot(Hundamped_delta);
      if (predicted <= opt.relative_tolerance * cost) {
        report.converged = true;
        return;
      }
      lambda *= opt.lambda_factor;
    }
    if (!accepted) {
      fail(ErrorCode::Diverged, "cost did not decrease after " + std::to_string(opt.max_retries) + " retries");
    }
  }
}

void compute_marginals(const FactorGraph& graph, OptimReport& report) {
  const NormalEquations ne = build_normal_equations(graph, graph.nodes);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  if (!factorize(ldlt, ne.to_sparse(0.0))) fail(ErrorCode::SingularSystem, "information matrix is singular");
  const Eigen::Index dim = static_cast<Eigen::Index>(15 * graph.nodes.size());
  report.yaw_sigma.resize(graph.nodes.size());
  report.position_sigma.resize(graph.nodes.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
    const Eigen::Index o = static_cast<Eigen::Index>(15 * k);
    auto column_variance = [&](Eigen::Index idx) {
      e.setZero();
      e[idx] = 1.0;
      return ldlt.solve(e)[idx];
    };
    report.yaw_sigma[k] = std::sqrt(column_variance(o + 2));
    report.position_sigma[k] =
        std::sqrt(column_variance(o + 3) + column_variance(o + 4) + column_variance(o + 5));
  }
}

}  // namespace

double graph_cost(const FactorGraph& graph) { return total_cost(graph, graph.nodes); }

TrajectoryEstimate optimize_trajectory(const FactorGraph& input, const std::vector<NavState>* init,
                                       const SolverOptions& options) {
  if (input.nodes.empty()) fail(ErrorCode::EmptyStream, "factor graph has no nodes");
  FactorGraph graph = input;
  check_connected(graph);
  if (init) {
    if (init->size() != graph.nodes.size()) fail(ErrorCode::InvalidArgument, "init size does not match node count");
    for (std::size_t k = 0; k < graph.nodes.size(); ++k) graph.nodes[k].state = (*init)[k];
  }
  for (Factor& f : graph.factors) {
    if (auto* p = std::get_if<PriorFactor>(&f)) p->mean = graph.nodes[p->i].state;
  }

  TrajectoryEstimate est;
  OptimReport& report = est.report;
  report.initial_cost = total_cost(graph, graph.nodes);
  run_lm(graph, options, report);
  while (report.relinearizations < options.max_relinearizations && needs_relinearization(graph, options)) {
    relinearize(graph);
    ++report.relinearizations;
    report.relinearized_at.push_back(report.cost_history.size());
    report.cost_history.push_back(total_cost(graph, graph.nodes));
    report.converged = false;
    run_lm(graph, options, report);
  }
  report.final_cost = report.cost_history.back();
  if (options.compute_marginals) compute_marginals(graph, report);

  std::vector<double> times;
  std::vector<Pose> poses;
  for (const StateNode& n : graph.nodes) {
    times.push_back(n.t);
    poses.emplace_back(n.state.position, n.state.rotation);
    est.states.push_back(n.state);
    est.biases.push_back(n.state.bias);
  }
  est.track = PoseTrack(std::move(times), std::move(poses), "global");
  return est;
}

}  // namespace agriscan
