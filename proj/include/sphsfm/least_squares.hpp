#pragma once

// Small dense damped least squares for problems with a handful of parameters
// living on a manifold (pose refinement, relative-orientation refinement).
//
// A Problem provides:
//   static constexpr int kDof;
//   int num_residuals() const;
//   template <typename T>
//   void residuals(const Eigen::Matrix<T, kDof, 1>& delta, T* out) const;
//   void retract(const Eigen::Matrix<double, kDof, 1>& delta);
//
// residuals() is only ever evaluated at delta = 0: with double to get the
// cost, and with forward-mode autodiff scalars to get the Jacobian, so the
// local parameterization inside it only needs to be correct to first order.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>
#include <cmath>
#include <vector>

namespace sphsfm {

struct DampingSchedule {
  double initial = 1e-4;
  double increase = 10.0;
  double decrease = 10.0;
  double max = 1e16;
};

struct LeastSquaresOptions {
  int max_iterations = 100;
  double function_tolerance = 1e-8;
  DampingSchedule damping;
};

struct LeastSquaresReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;
};

namespace detail {

template <typename Problem>
double dense_cost(const Problem& problem) {
  const int m = problem.num_residuals();
  std::vector<double> r(static_cast<size_t>(m));
  problem.residuals(Eigen::Matrix<double, Problem::kDof, 1>::Zero().eval(), r.data());
  double cost = 0.0;
  for (double v : r) cost += v * v;
  return cost;
}

template <typename Problem>
void dense_linearize(const Problem& problem, Eigen::MatrixXd& jacobian, Eigen::VectorXd& residual) {
  constexpr int n = Problem::kDof;
  using Derivative = Eigen::Matrix<double, n, 1>;
  using Scalar = Eigen::AutoDiffScalar<Derivative>;
  const int m = problem.num_residuals();
  Eigen::Matrix<Scalar, n, 1> delta;
  for (int i = 0; i < n; ++i) delta(i) = Scalar(0.0, n, i);
  std::vector<Scalar> r(static_cast<size_t>(m));
  problem.residuals(delta, r.data());
  jacobian.resize(m, n);
  residual.resize(m);
  for (int k = 0; k < m; ++k) {
    residual(k) = r[k].value();
    if (r[k].derivatives().size() == n) {
      jacobian.row(k) = r[k].derivatives().transpose();
    } else {
      jacobian.row(k).setZero();
    }
  }
}

}  // namespace detail

template <typename Problem>
LeastSquaresReport solve_dense(Problem& problem, const LeastSquaresOptions& options = {}) {
  constexpr int n = Problem::kDof;
  LeastSquaresReport report;
  double cost = detail::dense_cost(problem);
  report.initial_cost = cost;
  report.cost_history.push_back(cost);
  if (!std::isfinite(cost)) {
    report.final_cost = cost;
    return report;
  }
  double lambda = options.damping.initial;
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd residual;
  bool relinearize = true;
  Eigen::Matrix<double, n, n> hessian;
  Eigen::Matrix<double, n, 1> gradient;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (cost <= 1e-30) {
      report.converged = true;
      break;
    }
    if (relinearize) {
      detail::dense_linearize(problem, jacobian, residual);
      hessian = jacobian.transpose() * jacobian;
      gradient = jacobian.transpose() * residual;
      relinearize = false;
      if (gradient.cwiseAbs().maxCoeff() < 1e-300) {
        report.converged = true;
        break;
      }
    }
    ++report.iterations;
    Eigen::Matrix<double, n, n> damped = hessian;
    for (int i = 0; i < n; ++i) damped(i, i) += lambda * std::max(hessian(i, i), 1e-12);
    const Eigen::Matrix<double, n, 1> step = damped.ldlt().solve(-gradient);
    Problem trial = problem;
    trial.retract(step);
    const double trial_cost = detail::dense_cost(trial);
    if (std::isfinite(trial_cost) && trial_cost < cost) {
      const double decrease = cost - trial_cost;
      problem = trial;
      cost = trial_cost;
      report.cost_history.push_back(cost);
      lambda /= options.damping.decrease;
      relinearize = true;
      if (decrease <= options.function_tolerance * report.cost_history[report.cost_history.size() - 2]) {
        report.converged = true;
        break;
      }
    } else {
      lambda *= options.damping.increase;
      if (lambda > options.damping.max) {
        report.converged = true;
        break;
      }
    }
  }
  report.final_cost = cost;
  return report;
}

}  // namespace sphsfm
