#include "sdgt/problems.hpp"

#include <cmath>

#include "sdgt/error.hpp"
#include "sdgt/io.hpp"

namespace sdgt {

// ---------------------------------------------------------------------------
// Problem

void Problem::check_client(int client) const {
  require(client >= 0 && client < num_clients(),
          "client index " + std::to_string(client) + " out of range");
}

Vec Problem::full_gradient(int client, const Vec& x) const {
  Vec g;
  gradient(client, x, {}, g);
  return g;
}

double Problem::global_loss(const Vec& x) const {
  double total = 0.0;
  for (int i = 0; i < num_clients(); ++i) total += loss(i, x);
  return total / num_clients();
}

Vec Problem::global_gradient(const Vec& x) const {
  Vec total = Vec::Zero(dim());
  Vec g;
  for (int i = 0; i < num_clients(); ++i) {
    gradient(i, x, {}, g);
    total += g;
  }
  return total / num_clients();
}

Vec stochastic_gradient(const Problem& problem, int client, const Vec& x, int batch_size,
                        RandomStream& rng) {
  require(client >= 0 && client < problem.num_clients(),
          "client index " + std::to_string(client) + " out of range");
  require(batch_size >= 0, "batch size must be non-negative");
  const int available = problem.samples(client);
  Vec g;
  if (batch_size == kFullBatch || batch_size >= available) {
    require(batch_size <= available, "batch size exceeds the client's sample count");
    problem.gradient(client, x, {}, g);
    return g;
  }
  const auto batch = rng.sample_without_replacement(static_cast<std::size_t>(available),
                                                    static_cast<std::size_t>(batch_size));
  problem.gradient(client, x, batch, g);
  return g;
}

Vec stochastic_gradient(const Problem& problem, int client, const Vec& x, int batch_size,
                        std::uint64_t rng_seed) {
  RandomStream rng(rng_seed, StreamId::kBatching);
  return stochastic_gradient(problem, client, x, batch_size, rng);
}

// ---------------------------------------------------------------------------
// Least squares

namespace {

void check_ls_params(const LeastSquaresParams& p) {
  require(p.n >= 1, "least squares: n must be >= 1");
  require(p.d >= 1, "least squares: d must be >= 1");
  require(p.samples_per_client >= 1, "least squares: samples_per_client must be >= 1");
  require(p.omega >= 0.0 && p.omega < 1.0,
          "least squares: omega must lie in [0, 1) (the row recursion diverges otherwise)");
  require(p.noise_std >= 0.0, "least squares: noise_std must be non-negative");
}

}  // namespace

LeastSquaresProblem::LeastSquaresProblem(const LeastSquaresParams& params) : params_(params) {
  check_ls_params(params_);
  const int d = params_.d;
  const int rows = params_.samples_per_client;
  const double head_scale = 1.0 / std::sqrt(1.0 - params_.omega * params_.omega);

  RandomStream signal(params_.seed, StreamId::kData, 0);
  x0_.resize(d);
  for (int k = 0; k < d; ++k) x0_(k) = signal.normal();

  for (int i = 0; i < params_.n; ++i) {
    RandomStream sensing(params_.seed, StreamId::kData, mix_key({1, static_cast<std::uint64_t>(i)}));
    RandomStream noise(params_.seed, StreamId::kData, mix_key({2, static_cast<std::uint64_t>(i)}));
    Eigen::MatrixXd a(rows, d);
    for (int r = 0; r < rows; ++r) {
      a(r, 0) = sensing.normal() * head_scale;
      for (int k = 1; k < d; ++k) a(r, k) = params_.omega * a(r, k - 1) + sensing.normal();
    }
    Vec b = a * x0_;
    if (params_.noise_std > 0.0)
      for (int r = 0; r < rows; ++r) b(r) += params_.noise_std * noise.normal();
    a_.push_back(std::move(a));
    b_.push_back(std::move(b));
  }
  finish();
}

LeastSquaresProblem::LeastSquaresProblem(const LeastSquaresParams& params,
                                         std::vector<Eigen::MatrixXd> a, std::vector<Vec> b,
                                         Vec x0)
    : params_(params), a_(std::move(a)), b_(std::move(b)), x0_(std::move(x0)) {
  require(!a_.empty() && a_.size() == b_.size(), "least squares: need matching A_i and b_i");
  for (std::size_t i = 0; i < a_.size(); ++i) {
    require(a_[i].cols() == x0_.size(), "least squares: A_i has wrong column count");
    require(a_[i].rows() == b_[i].size() && a_[i].rows() >= 1,
            "least squares: b_i length must match A_i rows");
  }
  params_.n = static_cast<int>(a_.size());
  params_.d = static_cast<int>(x0_.size());
  finish();
}

Eigen::MatrixXd LeastSquaresProblem::aggregate_gram() const {
  const int d = dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (const auto& a : a_) h.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / a.rows());
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  return h / static_cast<double>(a_.size());
}

void LeastSquaresProblem::finish() {
  const Eigen::MatrixXd h = aggregate_gram();
  Vec rhs = Vec::Zero(dim());
  for (std::size_t i = 0; i < a_.size(); ++i) rhs += a_[i].transpose() * b_[i] / a_[i].rows();
  rhs /= static_cast<double>(a_.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(dim() - 1);
  if (!(lo > 1e-12 * std::max(hi, 1.0)))
    fail(ErrorCode::kSingular, "least squares: aggregate Gram matrix is singular (lambda_min=" +
                                   format_double(lo) + ", lambda_max=" + format_double(hi) +
                                   ", condition estimate " +
                                   (lo > 0 ? format_double(hi / lo) : std::string("inf")) + ")");
  x_star_ = h.llt().solve(rhs);
  // One step of iterative refinement keeps ||grad f(x*)|| near machine level.
  x_star_ += h.llt().solve(rhs - h * x_star_);
  f_star_ = global_loss(x_star_);
}

int LeastSquaresProblem::samples(int client) const {
  check_client(client);
  return static_cast<int>(a_[client].rows());
}

double LeastSquaresProblem::loss(int client, const Vec& x) const {
  check_client(client);
  return 0.5 * (a_[client] * x - b_[client]).squaredNorm() / a_[client].rows();
}

void LeastSquaresProblem::gradient(int client, const Vec& x, std::span<const std::size_t> batch,
                                   Vec& out) const {
  check_client(client);
  const Eigen::MatrixXd& a = a_[client];
  if (batch.empty()) {
    out.noalias() = a.transpose() * (a * x - b_[client]);
    out /= static_cast<double>(a.rows());
    return;
  }
  out.setZero(dim());
  for (std::size_t r : batch) {
    const auto row = a.row(static_cast<Eigen::Index>(r));
    out += row.transpose() * (row.dot(x) - b_[client](static_cast<Eigen::Index>(r)));
  }
  out /= static_cast<double>(batch.size());
}

nlohmann::json LeastSquaresProblem::snapshot() const {
  nlohmann::json doc;
  doc["format"] = "sdgt-problem/1";
  doc["kind"] = kind();
  doc["params"] = {{"n", params_.n},
                   {"d", params_.d},
                   {"samples_per_client", params_.samples_per_client},
                   {"omega", params_.omega},
                   {"noise_std", params_.noise_std},
                   {"seed", params_.seed}};
  auto& data = doc["data"];
  data["x0"] = std::vector<double>(x0_.data(), x0_.data() + x0_.size());
  auto clients = nlohmann::json::array();
  for (std::size_t i = 0; i < a_.size(); ++i) {
    nlohmann::json c;
    const Eigen::MatrixXd& a = a_[i];
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      std::vector<double> row(a.cols());
      for (Eigen::Index k = 0; k < a.cols(); ++k) row[k] = a(r, k);
      rows.push_back(std::move(row));
    }
    c["A"] = std::move(rows);
    c["b"] = std::vector<double>(b_[i].data(), b_[i].data() + b_[i].size());
    clients.push_back(std::move(c));
  }
  data["clients"] = std::move(clients);
  return doc;
}

double condition_number(const Eigen::MatrixXd& gram) {
  require(gram.rows() == gram.cols() && gram.rows() >= 1, "Gram matrix must be square");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(gram.rows() - 1);
  if (!(lo > 1e-14 * std::max(std::abs(hi), 1.0)))
    fail(ErrorCode::kSingular, "condition number undefined: lambda_min=" + format_double(lo));
  return hi / lo;
}

double condition_number(const LeastSquaresProblem& problem) {
  return condition_number(problem.aggregate_gram());
}

// ---------------------------------------------------------------------------
// Cluster classification

namespace {

void check_cls_params(const ClassificationParams& p) {
  require(p.n >= 1, "classification: n must be >= 1");
  require(p.input_dim >= 1, "classification: input_dim must be >= 1");
  require(p.classes >= 2, "classification: need at least 2 classes");
  require(p.samples_per_client >= 1, "classification: samples_per_client must be >= 1");
  require(p.hidden_width >= 1, "classification: hidden_width must be >= 1");
  if (p.strict_sharding)
    require(p.n % p.classes == 0,
            "classification: strict sharding needs n divisible by the number of classes");
}

inline double softplus(double a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }
inline double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace

ClassificationProblem::ClassificationProblem(const ClassificationParams& params)
    : params_(params) {
  check_cls_params(params_);
  const int p = params_.input_dim;
  RandomStream centers_rng(params_.seed, StreamId::kData, 0);
  Eigen::MatrixXd centers(p, params_.classes);
  for (int c = 0; c < params_.classes; ++c)
    for (int k = 0; k < p; ++k) centers(k, c) = params_.center_scale * centers_rng.normal();

  for (int i = 0; i < params_.n; ++i) {
    const int cls = i % params_.classes;
    RandomStream rng(params_.seed, StreamId::kData, mix_key({3, static_cast<std::uint64_t>(i)}));
    Eigen::MatrixXd f(p, params_.samples_per_client);
    for (int s = 0; s < params_.samples_per_client; ++s)
      for (int k = 0; k < p; ++k) f(k, s) = centers(k, cls) + rng.normal();
    features_.push_back(std::move(f));
    labels_.emplace_back(params_.samples_per_client, cls);
  }
}

ClassificationProblem::ClassificationProblem(const ClassificationParams& params,
                                             std::vector<Eigen::MatrixXd> features,
                                             std::vector<std::vector<int>> labels)
    : params_(params), features_(std::move(features)), labels_(std::move(labels)) {
  require(!features_.empty() && features_.size() == labels_.size(),
          "classification: need matching features and labels");
  params_.n = static_cast<int>(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    require(features_[i].rows() == params_.input_dim, "classification: wrong feature dimension");
    require(static_cast<std::size_t>(features_[i].cols()) == labels_[i].size() &&
                !labels_[i].empty(),
            "classification: label count must match samples");
    for (int y : labels_[i]) require(y >= 0 && y < params_.classes, "classification: bad label");
  }
}

int ClassificationProblem::dim() const {
  const int h = params_.hidden_width;
  return h * params_.input_dim + h + params_.classes * h + params_.classes;
}

int ClassificationProblem::samples(int client) const {
  check_client(client);
  return static_cast<int>(features_[client].cols());
}

Vec ClassificationProblem::initial_point() const {
  RandomStream rng(params_.seed, StreamId::kInit, 0);
  const int h = params_.hidden_width;
  const int p = params_.input_dim;
  const int c = params_.classes;
  Vec x = Vec::Zero(dim());
  const double s1 = params_.init_scale / std::sqrt(static_cast<double>(p));
  const double s2 = params_.init_scale / std::sqrt(static_cast<double>(h));
  for (int k = 0; k < h * p; ++k) x(k) = s1 * rng.normal();
  for (int k = 0; k < c * h; ++k) x(h * p + h + k) = s2 * rng.normal();
  return x;
}

double ClassificationProblem::evaluate(int client, const Vec& x, std::span<const std::size_t> batch,
                                       Vec* grad) const {
  check_client(client);
  require(x.size() == dim(), "classification: parameter vector has wrong size");
  const int h = params_.hidden_width;
  const int p = params_.input_dim;
  const int c = params_.classes;
  using Map = Eigen::Map<const Eigen::MatrixXd>;
  using VMap = Eigen::Map<const Vec>;
  const Map w1(x.data(), h, p);
  const VMap b1(x.data() + h * p, h);
  const Map w2(x.data() + h * p + h, c, h);
  const VMap b2(x.data() + h * p + h + c * h, c);

  const Eigen::MatrixXd& all = features_[client];
  const auto& labels = labels_[client];
  const Eigen::Index count = batch.empty() ? all.cols() : static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd in(p, count);
  std::vector<int> y(count);
  for (Eigen::Index s = 0; s < count; ++s) {
    const Eigen::Index src = batch.empty() ? s : static_cast<Eigen::Index>(batch[s]);
    in.col(s) = all.col(src);
    y[s] = labels[src];
  }

  const Eigen::MatrixXd pre = (w1 * in).colwise() + b1;
  const Eigen::MatrixXd hidden = pre.unaryExpr([](double a) { return softplus(a); });
  Eigen::MatrixXd logits = (w2 * hidden).colwise() + b2;

  double total = 0.0;
  for (Eigen::Index s = 0; s < count; ++s) {
    auto col = logits.col(s);
    const double mx = col.maxCoeff();
    const double lse = mx + std::log((col.array() - mx).exp().sum());
    total += lse - col(y[s]);
    if (grad) {
      col = (col.array() - lse).exp();  // softmax probabilities
      col(y[s]) -= 1.0;
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  if (grad) {
    const Eigen::MatrixXd& dz = logits;
    grad->resize(dim());
    Eigen::Map<Eigen::MatrixXd> gw1(grad->data(), h, p);
    Eigen::Map<Vec> gb1(grad->data() + h * p, h);
    Eigen::Map<Eigen::MatrixXd> gw2(grad->data() + h * p + h, c, h);
    Eigen::Map<Vec> gb2(grad->data() + h * p + h + c * h, c);
    gw2.noalias() = dz * hidden.transpose() * inv;
    gb2 = dz.rowwise().sum() * inv;
    const Eigen::MatrixXd da =
        (w2.transpose() * dz).cwiseProduct(pre.unaryExpr([](double a) { return sigmoid(a); }));
    gw1.noalias() = da * in.transpose() * inv;
    gb1 = da.rowwise().sum() * inv;
  }
  return total * inv;
}

double ClassificationProblem::loss(int client, const Vec& x) const {
  return evaluate(client, x, {}, nullptr);
}

void ClassificationProblem::gradient(int client, const Vec& x, std::span<const std::size_t> batch,
                                     Vec& out) const {
  evaluate(client, x, batch, &out);
}

nlohmann::json ClassificationProblem::snapshot() const {
  nlohmann::json doc;
  doc["format"] = "sdgt-problem/1";
  doc["kind"] = kind();
  doc["params"] = {{"n", params_.n},
                   {"input_dim", params_.input_dim},
                   {"classes", params_.classes},
                   {"samples_per_client", params_.samples_per_client},
                   {"hidden_width", params_.hidden_width},
                   {"center_scale", params_.center_scale},
                   {"init_scale", params_.init_scale},
                   {"strict_sharding", params_.strict_sharding},
                   {"seed", params_.seed}};
  auto clients = nlohmann::json::array();
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const Eigen::MatrixXd& f = features_[i];
    auto cols = nlohmann::json::array();
    for (Eigen::Index s = 0; s < f.cols(); ++s)
      cols.push_back(std::vector<double>(f.col(s).data(), f.col(s).data() + f.rows()));
    clients.push_back({{"features", std::move(cols)}, {"labels", labels_[i]}});
  }
  doc["data"]["clients"] = std::move(clients);
  return doc;
}

// ---------------------------------------------------------------------------
// Factories

std::shared_ptr<const LeastSquaresProblem> generate_least_squares(const LeastSquaresParams& params) {
  return std::make_shared<const LeastSquaresProblem>(params);
}

std::shared_ptr<const ClassificationProblem> generate_cluster_classification(
    const ClassificationParams& params) {
  return std::make_shared<const ClassificationProblem>(params);
}

namespace {

LeastSquaresParams ls_params_from(const nlohmann::json& j) {
  LeastSquaresParams p;
  p.n = j.value("n", p.n);
  p.d = j.value("d", p.d);
  p.samples_per_client = j.value("samples_per_client", p.samples_per_client);
  p.omega = j.value("omega", p.omega);
  p.noise_std = j.value("noise_std", p.noise_std);
  p.seed = j.value("seed", p.seed);
  return p;
}

ClassificationParams cls_params_from(const nlohmann::json& j) {
  ClassificationParams p;
  p.n = j.value("n", p.n);
  p.input_dim = j.value("input_dim", p.input_dim);
  p.classes = j.value("classes", p.classes);
  p.samples_per_client = j.value("samples_per_client", p.samples_per_client);
  p.hidden_width = j.value("hidden_width", p.hidden_width);
  p.center_scale = j.value("center_scale", p.center_scale);
  p.init_scale = j.value("init_scale", p.init_scale);
  p.strict_sharding = j.value("strict_sharding", p.strict_sharding);
  p.seed = j.value("seed", p.seed);
  return p;
}

}  // namespace

std::shared_ptr<const Problem> problem_from_config(const nlohmann::json& cfg) {
  try {
    const std::string kind = cfg.at("kind").get<std::string>();
    if (kind == "least_squares") {
      LeastSquaresParams p = ls_params_from(cfg);
      if (cfg.contains("kappa_preset")) {
        const int preset = cfg.at("kappa_preset").get<int>();
        require(preset == 80 || preset == 800, "kappa_preset must be 80 or 800");
        p.omega = preset == 80 ? kOmegaKappa80 : kOmegaKappa800;
      }
      return generate_least_squares(p);
    }
    if (kind == "classification") return generate_cluster_classification(cls_params_from(cfg));
    fail(ErrorCode::kInvalidArgument, "unknown problem kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed problem config: ") + e.what());
  }
}

std::shared_ptr<const Problem> problem_from_snapshot(const nlohmann::json& doc) {
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    const auto& params = doc.at("params");
    if (!doc.contains("data")) {
      nlohmann::json cfg = params;
      cfg["kind"] = kind;
      return problem_from_config(cfg);
    }
    const auto& clients = doc.at("data").at("clients");
    if (kind == "least_squares") {
      const LeastSquaresParams p = ls_params_from(params);
      const auto x0v = doc.at("data").at("x0").get<std::vector<double>>();
      Vec x0 = Eigen::Map<const Vec>(x0v.data(), static_cast<Eigen::Index>(x0v.size()));
      std::vector<Eigen::MatrixXd> a;
      std::vector<Vec> b;
      for (const auto& c : clients) {
        const auto& rows = c.at("A");
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), x0.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const auto row = rows[r].get<std::vector<double>>();
          require(static_cast<Eigen::Index>(row.size()) == x0.size(), "snapshot: bad A row length");
          for (std::size_t k = 0; k < row.size(); ++k) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[k];
        }
        const auto bv = c.at("b").get<std::vector<double>>();
        a.push_back(std::move(m));
        b.emplace_back(Eigen::Map<const Vec>(bv.data(), static_cast<Eigen::Index>(bv.size())));
      }
      return std::make_shared<const LeastSquaresProblem>(p, std::move(a), std::move(b), std::move(x0));
    }
    if (kind == "classification") {
      const ClassificationParams p = cls_params_from(params);
      std::vector<Eigen::MatrixXd> features;
      std::vector<std::vector<int>> labels;
      for (const auto& c : clients) {
        const auto& cols = c.at("features");
        Eigen::MatrixXd f(p.input_dim, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t s = 0; s < cols.size(); ++s) {
          const auto col = cols[s].get<std::vector<double>>();
          require(static_cast<int>(col.size()) == p.input_dim, "snapshot: bad feature length");
          for (int k = 0; k < p.input_dim; ++k) f(k, static_cast<Eigen::Index>(s)) = col[k];
        }
        features.push_back(std::move(f));
        labels.push_back(c.at("labels").get<std::vector<int>>());
      }
      return std::make_shared<const ClassificationProblem>(p, std::move(features), std::move(labels));
    }
    fail(ErrorCode::kInvalidArgument, "unknown problem kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed problem snapshot: ") + e.what());
  }
}

}  // namespace sdgt
