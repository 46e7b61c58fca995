#include <cmath>
#include <set>

#include "doctest.h"
#include "sdgt/error.hpp"
#include "sdgt/problems.hpp"
#include "sdgt/reference.hpp"
#include "test_support.hpp"

using namespace sdgt;

TEST_SUITE("problems") {

TEST_CASE("noiseless least squares recovers the signal") {
  LeastSquaresParams params;
  params.omega = kOmegaKappa80;
  params.noise_std = 0.0;
  const auto problem = generate_least_squares(params);
  const Vec& x0 = problem->signal();
  CHECK((*problem->x_star() - x0).norm() <= 1e-8 * x0.norm());
  CHECK(problem->global_gradient(x0).norm() < 1e-10);
  CHECK(*problem->f_star() < 1e-20);
}

TEST_CASE("omega = 0 gives i.i.d. standard normal rows") {
  LeastSquaresParams params;
  params.omega = 0.0;
  params.n = 10;
  params.d = 50;
  params.samples_per_client = 200;
  const auto problem = generate_least_squares(params);
  double s1 = 0.0, s2 = 0.0, lag = 0.0;
  long count = 0;
  for (int i = 0; i < problem->num_clients(); ++i) {
    const auto& a = problem->sensing(i);
    s1 += a.sum();
    s2 += a.squaredNorm();
    lag += (a.leftCols(49).array() * a.rightCols(49).array()).sum();
    count += a.size();
  }
  CHECK(std::abs(s1 / count) < 0.02);
  CHECK(std::abs(s2 / count - 1.0) < 0.02);
  CHECK(std::abs(lag / count) < 0.02);
}

TEST_CASE("calibrated omegas give the target condition numbers") {
  LeastSquaresParams params;
  params.omega = kOmegaKappa80;
  const auto p80 = generate_least_squares(params);
  const double k80 = condition_number(*p80);
  CHECK(k80 == doctest::Approx(80.0).epsilon(0.10));
  // Independent eigenvalue path: singular values of the Gram matrix.
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(p80->aggregate_gram());
  const auto sv = svd.singularValues();
  CHECK(sv(0) / sv(sv.size() - 1) == doctest::Approx(k80).epsilon(1e-8));

  params.omega = kOmegaKappa800;
  CHECK(condition_number(*generate_least_squares(params)) == doctest::Approx(800.0).epsilon(0.10));
}

TEST_CASE("singular Gram matrices are rejected") {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
  g(0, 0) = 1.0;
  try {
    condition_number(g);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingular);
  }
}

TEST_CASE("least-squares gradient has the closed form") {
  const auto problem = test::tiny_least_squares();
  Vec x(2);
  x << -1.25, 0.5;
  for (int i = 0; i < problem->num_clients(); ++i) {
    const auto& a = problem->sensing(i);
    const Vec expected = a.transpose() * (a * x - problem->observations(i)) / a.rows();
    CHECK((problem->full_gradient(i, x) - expected).norm() < 1e-14);
  }
}

TEST_CASE("gradients match finite differences") {
  LeastSquaresParams lp;
  lp.n = 4;
  lp.d = 12;
  lp.samples_per_client = 8;
  lp.omega = 0.5;
  const auto ls = generate_least_squares(lp);
  ClassificationParams cp;
  cp.n = 4;
  const auto cls = generate_cluster_classification(cp);
  RandomStream rng(17, StreamId::kTest);
  for (int trial = 0; trial < 5; ++trial) {
    Vec x(ls->dim());
    for (auto& v : x) v = rng.normal();
    CHECK(reference::check_gradient(*ls, trial % 4, x).relative_error < 1e-5);
    Vec w(cls->dim());
    for (auto& v : w) v = 0.5 * rng.normal();
    CHECK(reference::check_gradient(*cls, trial % 4, w).relative_error < 1e-5);
  }
}

TEST_CASE("classification: one class per client, heterogeneous gradients") {
  ClassificationParams params;
  const auto problem = generate_cluster_classification(params);
  CHECK(problem->num_clients() == 30);
  std::set<int> classes;
  for (int i = 0; i < problem->num_clients(); ++i) {
    classes.insert(problem->client_class(i));
    CHECK(problem->samples(i) == params.samples_per_client);
  }
  CHECK(static_cast<int>(classes.size()) == params.classes);
  const Vec zero = Vec::Zero(problem->dim());
  CHECK(problem->loss(0, zero) == doctest::Approx(std::log(params.classes)).epsilon(1e-12));
  // Clients 0 and 1 hold different classes.
  REQUIRE(problem->client_class(0) != problem->client_class(1));
  CHECK((problem->full_gradient(0, zero) - problem->full_gradient(1, zero)).norm() > 1e-3);
}

TEST_CASE("single-class data: zero-parameter gradient has no class-imbalance component") {
  ClassificationParams params;
  params.input_dim = 3;
  params.classes = 4;
  params.hidden_width = 5;
  Eigen::MatrixXd feats(3, 6);
  feats.setConstant(0.3);
  const ClassificationProblem problem(params, {feats}, {{2, 2, 2, 2, 2, 2}});
  const Vec g = problem.full_gradient(0, Vec::Zero(problem.dim()));
  // Output-bias gradient is softmax - onehot = 1/4 - [class == 2].
  const Vec gb2 = g.tail(4);
  for (int c = 0; c < 4; ++c) CHECK(gb2(c) == doctest::Approx(c == 2 ? -0.75 : 0.25));
  CHECK(gb2.sum() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("minibatch gradients") {
  const auto problem = test::tiny_least_squares();
  Vec x(2);
  x << 0.4, -0.2;
  const Vec full = problem->full_gradient(2, x);
  CHECK((stochastic_gradient(*problem, 2, x, kFullBatch, 1) - full).norm() == 0.0);
  CHECK((stochastic_gradient(*problem, 2, x, problem->samples(2), 1) - full).norm() < 1e-15);

  LeastSquaresParams params;
  params.n = 2;
  params.d = 5;
  params.samples_per_client = 20;
  params.omega = 0.3;
  const auto ls = generate_least_squares(params);
  Vec y = Vec::LinSpaced(5, -1.0, 1.0);
  const Vec exact = ls->full_gradient(0, y);
  RandomStream rng(21, StreamId::kBatching);
  const int draws = 10000;
  Vec mean = Vec::Zero(5), sq = Vec::Zero(5);
  for (int k = 0; k < draws; ++k) {
    const Vec g = stochastic_gradient(*ls, 0, y, 4, rng);
    mean += g;
    sq += g.cwiseProduct(g);
  }
  mean /= draws;
  const Vec stddev = (sq / draws - mean.cwiseProduct(mean)).cwiseSqrt();
  for (int k = 0; k < 5; ++k)
    CHECK(std::abs(mean(k) - exact(k)) <= 3.0 * stddev(k) / std::sqrt(double(draws)) + 1e-12);
}

TEST_CASE("snapshots reproduce problems exactly") {
  LeastSquaresParams params;
  params.n = 3;
  params.d = 6;
  params.samples_per_client = 5;
  params.omega = 0.4;
  const auto ls = generate_least_squares(params);
  const auto back = problem_from_snapshot(ls->snapshot());
  const Vec x = Vec::LinSpaced(6, -1.0, 2.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(back->loss(i, x) == ls->loss(i, x));
    CHECK(back->full_gradient(i, x) == ls->full_gradient(i, x));
  }
  CHECK(back->snapshot() == ls->snapshot());

  ClassificationParams cp;
  cp.n = 3;
  const auto cls = generate_cluster_classification(cp);
  const auto cback = problem_from_snapshot(cls->snapshot());
  CHECK(cback->snapshot() == cls->snapshot());
  CHECK(cback->initial_point() == cls->initial_point());
}

TEST_CASE("problem configs") {
  const auto p = problem_from_config({{"kind", "least_squares"}, {"kappa_preset", 80}, {"seed", 1}});
  CHECK(p->dim() == 200);
  CHECK_THROWS_AS(problem_from_config({{"kind", "least_squares"}, {"kappa_preset", 5}}), Error);
  CHECK_THROWS_AS(problem_from_config({{"kind", "images"}}), Error);
}

}  // TEST_SUITE
