#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sdgt/rng.hpp"

namespace sdgt {

using Vec = Eigen::VectorXd;

// Batch size 0 means "use every local sample".
inline constexpr int kFullBatch = 0;

// Per-client differentiable losses f_i; the global objective is their mean.
// Instances are immutable after construction and safe to share across threads.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string kind() const = 0;
  virtual int num_clients() const = 0;
  virtual int dim() const = 0;
  virtual int samples(int client) const = 0;

  virtual double loss(int client, const Vec& x) const = 0;
  // Mean gradient over `batch` (indices into the client's samples); an empty
  // batch means every sample.
  virtual void gradient(int client, const Vec& x, std::span<const std::size_t> batch,
                        Vec& out) const = 0;

  virtual Vec initial_point() const = 0;
  virtual std::optional<Vec> x_star() const { return std::nullopt; }
  virtual std::optional<double> f_star() const { return std::nullopt; }

  // Parameters, seed, and the generated data.
  virtual nlohmann::json snapshot() const = 0;

  Vec full_gradient(int client, const Vec& x) const;
  double global_loss(const Vec& x) const;
  Vec global_gradient(const Vec& x) const;

 protected:
  void check_client(int client) const;
};

// Exact gradient for kFullBatch (or any batch >= |D_i|), otherwise the mean
// gradient over a uniform minibatch drawn without replacement from `rng`.
Vec stochastic_gradient(const Problem& problem, int client, const Vec& x, int batch_size,
                        RandomStream& rng);
Vec stochastic_gradient(const Problem& problem, int client, const Vec& x, int batch_size,
                        std::uint64_t rng_seed);

struct LeastSquaresParams {
  int n = 30;
  int d = 200;
  int samples_per_client = 30;
  double omega = 0.0;
  double noise_std = 0.2;
  std::uint64_t seed = 1;
};

// f_i(x) = 1/(2|D_i|) ||A_i x - b_i||^2 with autoregressive sensing rows.
class LeastSquaresProblem final : public Problem {
 public:
  // Generates A_i, b_i, x0 from `params`.
  explicit LeastSquaresProblem(const LeastSquaresParams& params);
  // Adopts explicit data (used for snapshots and hand-built tests).
  LeastSquaresProblem(const LeastSquaresParams& params, std::vector<Eigen::MatrixXd> a,
                      std::vector<Vec> b, Vec x0);

  std::string kind() const override { return "least_squares"; }
  int num_clients() const override { return static_cast<int>(a_.size()); }
  int dim() const override { return static_cast<int>(x0_.size()); }
  int samples(int client) const override;
  double loss(int client, const Vec& x) const override;
  void gradient(int client, const Vec& x, std::span<const std::size_t> batch,
                Vec& out) const override;
  Vec initial_point() const override { return Vec::Zero(dim()); }
  std::optional<Vec> x_star() const override { return x_star_; }
  std::optional<double> f_star() const override { return f_star_; }
  nlohmann::json snapshot() const override;

  const LeastSquaresParams& params() const { return params_; }
  const Eigen::MatrixXd& sensing(int client) const { return a_[client]; }
  const Vec& observations(int client) const { return b_[client]; }
  const Vec& signal() const { return x0_; }

  // (1/n) sum_i A_i^T A_i / |D_i|
  Eigen::MatrixXd aggregate_gram() const;

 private:
  void finish();

  LeastSquaresParams params_;
  std::vector<Eigen::MatrixXd> a_;
  std::vector<Vec> b_;
  Vec x0_;
  Vec x_star_;
  double f_star_ = 0.0;
};

// lambda_max / lambda_min of the aggregate Gram matrix.
double condition_number(const LeastSquaresProblem& problem);
double condition_number(const Eigen::MatrixXd& gram);

struct ClassificationParams {
  int n = 30;
  int input_dim = 10;
  int classes = 10;
  int samples_per_client = 40;
  int hidden_width = 16;
  double center_scale = 2.0;
  double init_scale = 0.1;
  bool strict_sharding = false;
  std::uint64_t seed = 1;
};

// Softmax cross-entropy of a two-layer network with softplus hidden units.
// Each client holds samples of a single class (round-robin assignment).
// Parameter layout: W1 (hidden x input, column-major), b1, W2 (classes x
// hidden, column-major), b2.
class ClassificationProblem final : public Problem {
 public:
  explicit ClassificationProblem(const ClassificationParams& params);
  ClassificationProblem(const ClassificationParams& params, std::vector<Eigen::MatrixXd> features,
                        std::vector<std::vector<int>> labels);

  std::string kind() const override { return "classification"; }
  int num_clients() const override { return static_cast<int>(features_.size()); }
  int dim() const override;
  int samples(int client) const override;
  double loss(int client, const Vec& x) const override;
  void gradient(int client, const Vec& x, std::span<const std::size_t> batch,
                Vec& out) const override;
  Vec initial_point() const override;
  nlohmann::json snapshot() const override;

  const ClassificationParams& params() const { return params_; }
  int client_class(int client) const { return labels_[client].front(); }
  const Eigen::MatrixXd& features(int client) const { return features_[client]; }

 private:
  double evaluate(int client, const Vec& x, std::span<const std::size_t> batch, Vec* grad) const;

  ClassificationParams params_;
  std::vector<Eigen::MatrixXd> features_;  // input_dim x samples
  std::vector<std::vector<int>> labels_;
};

std::shared_ptr<const LeastSquaresProblem> generate_least_squares(const LeastSquaresParams& params);
std::shared_ptr<const ClassificationProblem> generate_cluster_classification(
    const ClassificationParams& params);

// Regenerates or reloads a problem from a snapshot document.
std::shared_ptr<const Problem> problem_from_snapshot(const nlohmann::json& doc);
std::shared_ptr<const Problem> problem_from_config(const nlohmann::json& cfg);

// Calibrated correlation parameters for the default least-squares instance
// (n=30, d=200, 30 samples per client): aggregate condition numbers of about
// 80 and 800 respectively.
inline constexpr double kOmegaKappa80 = 0.697602;
inline constexpr double kOmegaKappa800 = 0.900712;

}  // namespace sdgt
