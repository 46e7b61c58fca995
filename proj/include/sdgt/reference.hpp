#pragma once

// Independent oracles. Nothing here calls into the algorithms, topology
// weight, or co-optimizer code paths it is used to check; every routine is a
// deliberately plain re-derivation.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "sdgt/cooptimizer.hpp"
#include "sdgt/problems.hpp"

namespace sdgt::reference {

// Metropolis-Hastings weights computed entry by entry from an edge list.
Eigen::MatrixXd mh_weights(int m, const std::vector<std::pair<int, int>>& edges);

// 1 - (second largest |eigenvalue| of the symmetric W)^2, from a full
// eigen-decomposition (the production path uses an SVD of W - J).
double mixing_rate_eig(const Eigen::MatrixXd& w);

// Decentralized gradient tracking over one D2D group with the server
// re-broadcasting the client average after every step:
//   p_i      = sum_j w_ij (x_j - gamma zhat_j)        (pre-broadcast model)
//   x^{t+1}  = (1/n) sum_i p_i                        (every client)
//   zhat_i'  = sum_j w_ij zhat_j + g_i(x^{t+1}) - g_i(x^t)
// with zhat_i^0 = g_i(x^0). zhat_i is the tracked direction g_i + z_i.
struct GtTrace {
  std::vector<Eigen::MatrixXd> pre_broadcast;  // p after each step (d x n)
  std::vector<Eigen::MatrixXd> zhat;           // zhat after each step
  std::vector<Eigen::VectorXd> x;              // broadcast model after each step
};
GtTrace gradient_tracking(const Problem& problem, const Eigen::MatrixXd& w, double gamma,
                          int steps);

// Objective written out term by term (no shared code with the solver).
double coopt_objective(const std::vector<int>& sizes, const std::vector<int>& samples, int K,
                       const CoOptProblem& problem);

struct BruteForceResult {
  double objective = 0.0;
  std::vector<int> samples;
  int K = 1;
  long long points = 0;
};
// Exhaustive minimum over every (h_1..h_S, K). Keeps the first minimizer in
// enumeration order, so only the objective value is comparable with solve().
BruteForceResult coopt_brute_force(const CoOptProblem& problem);

// Central finite differences of a scalar function.
Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h);

struct GradientCheck {
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};
// Compares Problem::gradient (full batch) with finite differences of
// Problem::loss at x; relative error is ||g - g_fd|| / max(||g_fd||, 1e-12).
GradientCheck check_gradient(const Problem& problem, int client, const Eigen::VectorXd& x,
                             double h = 1e-6);

// Least-squares slope of log(values) against their index; non-positive
// entries are skipped.
double log_slope(const std::vector<double>& values);

}  // namespace sdgt::reference
