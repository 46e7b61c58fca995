#include "sdgt/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdgt/error.hpp"

namespace sdgt::reference {

Eigen::MatrixXd mh_weights(int m, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> degree(m, 0);
  for (const auto& [a, b] : edges) {
    ++degree[a];
    ++degree[b];
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [a, b] : edges) {
    const double v = 1.0 / (1.0 + std::max(degree[a], degree[b]));
    w(a, b) = v;
    w(b, a) = v;
  }
  for (int i = 0; i < m; ++i) {
    double off = 0.0;
    for (int j = 0; j < m; ++j)
      if (j != i) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return w;
}

double mixing_rate_eig(const Eigen::MatrixXd& w) {
  const int m = static_cast<int>(w.rows());
  if (m == 1) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w);
  Eigen::VectorXd values = eig.eigenvalues();  // ascending
  // Drop the eigenvalue closest to 1 (the consensus direction).
  int top = 0;
  for (int i = 1; i < m; ++i)
    if (std::abs(values[i] - 1.0) < std::abs(values[top] - 1.0)) top = i;
  double second = 0.0;
  for (int i = 0; i < m; ++i)
    if (i != top) second = std::max(second, std::abs(values[i]));
  return 1.0 - second * second;
}

GtTrace gradient_tracking(const Problem& problem, const Eigen::MatrixXd& w, double gamma,
                          int steps) {
  const int n = problem.num_clients();
  const int d = problem.dim();
  require(w.rows() == n && w.cols() == n, "mixing matrix must be n x n");

  auto local_gradients = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd g(d, n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd gi;
      problem.gradient(i, x, {}, gi);
      g.col(i) = gi;
    }
    return g;
  };

  GtTrace out;
  Eigen::VectorXd x = problem.initial_point();
  Eigen::MatrixXd g_old = local_gradients(x);
  Eigen::MatrixXd zhat = g_old;
  for (int t = 0; t < steps; ++t) {
    Eigen::MatrixXd p(d, n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
      for (int j = 0; j < n; ++j) acc += w(i, j) * (x - gamma * zhat.col(j));
      p.col(i) = acc;
    }
    Eigen::VectorXd x_new = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) x_new += p.col(i);
    x_new /= n;

    const Eigen::MatrixXd g_new = local_gradients(x_new);
    Eigen::MatrixXd zhat_new(d, n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
      for (int j = 0; j < n; ++j) acc += w(i, j) * zhat.col(j);
      zhat_new.col(i) = acc + g_new.col(i) - g_old.col(i);
    }
    x = x_new;
    zhat = zhat_new;
    g_old = g_new;
    out.pre_broadcast.push_back(p);
    out.zhat.push_back(zhat);
    out.x.push_back(x);
  }
  return out;
}

double coopt_objective(const std::vector<int>& sizes, const std::vector<int>& samples, int K,
                       const CoOptProblem& problem) {
  double p = 1.0;
  double sampling = 0.0;
  double d2d = 0.0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const double beta = static_cast<double>(sizes[s] - samples[s]) / static_cast<double>(sizes[s]);
    p = std::min(p, 1.0 - beta * beta);
    sampling += (1.0 - beta) * problem.ds_cost[s];
  }
  for (double e : problem.d2d_cost) d2d += e;
  const double k = K;
  return 1.0 / std::pow(p, 4) + problem.lambda[0] * std::sqrt(1.0 / k) +
         problem.lambda[1] * std::pow(1.0 / (k * p * p), 2.0 / 3.0) +
         problem.lambda[2] * sampling + problem.lambda[3] * k * d2d;
}

BruteForceResult coopt_brute_force(const CoOptProblem& problem) {
  const auto& sizes = problem.subnet_sizes;
  const std::size_t S = sizes.size();
  BruteForceResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> h(S, 1);
  while (true) {
    for (int K = 1; K <= problem.k_max; ++K) {
      const double value = coopt_objective(sizes, h, K, problem);
      ++best.points;
      if (value < best.objective) {
        best.objective = value;
        best.samples = h;
        best.K = K;
      }
    }
    // Odometer increment over h in {1..m_s}.
    std::size_t s = 0;
    while (s < S && h[s] == sizes[s]) h[s++] = 1;
    if (s == S) break;
    ++h[s];
  }
  return best;
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

GradientCheck check_gradient(const Problem& problem, int client, const Eigen::VectorXd& x,
                             double h) {
  Eigen::VectorXd g;
  problem.gradient(client, x, {}, g);
  const Eigen::VectorXd fd = finite_difference_gradient(
      [&](const Eigen::VectorXd& v) { return problem.loss(client, v); }, x, h);
  GradientCheck out;
  out.analytic_norm = g.norm();
  out.relative_error = (g - fd).norm() / std::max(fd.norm(), 1e-12);
  return out;
}

double log_slope(const std::vector<double>& values) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) continue;
    const double x = static_cast<double>(i);
    const double y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) return 0.0;
  const double denom = count * sxx - sx * sx;
  return denom == 0.0 ? 0.0 : (count * sxy - sx * sy) / denom;
}

}  // namespace sdgt::reference
