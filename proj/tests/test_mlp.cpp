#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qip/mlp.hpp"

using qip::Activation;
using qip::AdamState;
using qip::Gradients;
using qip::Loss;
using qip::Mlp;
using qip::RealVector;
using qip::TrainConfig;
using qip::TrainingPair;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};

RealVector rvec(std::initializer_list<double> xs) {
  RealVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

double loss_of(const Mlp& net, const RealVector& x, const RealVector& target,
               Loss loss) {
  const RealVector e = qip::forward(net, x) - target;
  return loss == Loss::mae ? qip::loss_mae(e) : qip::loss_mse(e);
}

// Central finite differences over every parameter.
Gradients fd_gradients(const Mlp& net, const RealVector& x,
                       const RealVector& target, Loss loss, double h) {
  Gradients g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.w.emplace_back(net.weights[l].rows(), net.weights[l].cols());
    g.b.emplace_back(net.biases[l].size());
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) {
        Mlp plus = net, minus = net;
        plus.weights[l](i, j) += h;
        minus.weights[l](i, j) -= h;
        g.w[l](i, j) = (loss_of(plus, x, target, loss) -
                        loss_of(minus, x, target, loss)) /
                       (2.0 * h);
      }
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) {
      Mlp plus = net, minus = net;
      plus.biases[l][i] += h;
      minus.biases[l][i] -= h;
      g.b[l][i] = (loss_of(plus, x, target, loss) -
                   loss_of(minus, x, target, loss)) /
                  (2.0 * h);
    }
  }
  return g;
}

double max_relative_gap(const Gradients& a, const Gradients& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.w.size(); ++l) {
    for (Eigen::Index i = 0; i < a.w[l].size(); ++i)
      worst = std::max(worst,
                       std::abs(a.w[l](i) - b.w[l](i)) /
                           std::max(1.0, std::abs(b.w[l](i))));
    for (Eigen::Index i = 0; i < a.b[l].size(); ++i)
      worst = std::max(worst,
                       std::abs(a.b[l][i] - b.b[l][i]) /
                           std::max(1.0, std::abs(b.b[l][i])));
  }
  return worst;
}

// True when every output error and (for relu) every hidden pre-activation
// sits safely away from a kink, so finite differences stay one-sided-free.
bool kink_safe(const Mlp& net, const RealVector& x, const RealVector& target,
               double margin) {
  const RealVector e = qip::forward(net, x) - target;
  if (e.cwiseAbs().minCoeff() <= margin) return false;
  if (net.activation == Activation::relu) {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
      Eigen::MatrixXd z = (net.weights[l] * a).colwise() + net.biases[l];
      if (z.cwiseAbs().minCoeff() <= margin) return false;
      a = z.cwiseMax(0.0);
    }
  }
  return true;
}

std::vector<TrainingPair> toy_pairs(int n, Eigen::Index m,
                                    std::uint64_t seed) {
  qip::Rng rng(seed);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < n; ++i) {
    TrainingPair p;
    p.c = rng.normal_vector(m);
    p.theta = qip::ThermalParams{rng.normal_vector(m)};
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

TEST_CASE("mlp_new shapes, parameter count, and determinism") {
  const Mlp net = qip::mlp_new({3, 100, 100, 3}, Activation::relu, 7);
  // 100*3+100 + 100*100+100 + 3*100+3
  CHECK(net.parameter_count() == 10803);
  CHECK(net.weights[0].rows() == 100);
  CHECK(net.weights[0].cols() == 3);
  CHECK(net.biases[2].size() == 3);
  for (const auto& b : net.biases) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  // Initialization bounds.
  const double limit0 = std::sqrt(6.0 / (3 + 100));
  CHECK(net.weights[0].cwiseAbs().maxCoeff() <= limit0);
  CHECK(net.weights[0].cwiseAbs().maxCoeff() > 0.5 * limit0);

  const Mlp same = qip::mlp_new({3, 100, 100, 3}, Activation::relu, 7);
  const Mlp other = qip::mlp_new({3, 100, 100, 3}, Activation::relu, 8);
  CHECK((net.weights[1] - same.weights[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((net.weights[1] - other.weights[1]).cwiseAbs().maxCoeff() > 0.0);

  const Mlp wide = qip::mlp_new({51, 100, 100, 51}, Activation::relu, 1);
  CHECK(wide.input_size() == 51);
  CHECK(wide.output_size() == 51);

  CHECK_THROWS_AS((void)qip::mlp_new({5}, Activation::relu, 0),
                  qip::ContractError);
  CHECK_THROWS_AS((void)qip::mlp_new({3, 0, 3}, Activation::relu, 0),
                  qip::ContractError);
}

TEST_CASE("forward: zero net, identity layer, hand-computed relu net") {
  Mlp zero = qip::mlp_new({3, 4, 3}, Activation::relu, 0);
  for (auto& w : zero.weights) w.setZero();
  CHECK(qip::forward(zero, rvec({1.0, -2.0, 3.0})).cwiseAbs().maxCoeff() ==
        0.0);

  Mlp ident;
  ident.sizes = {3, 3};
  ident.weights = {Eigen::MatrixXd::Identity(3, 3)};
  ident.biases = {Eigen::VectorXd::Zero(3)};
  const RealVector x = rvec({0.3, -1.2, 4.0});
  CHECK((qip::forward(ident, x) - x).cwiseAbs().maxCoeff() == 0.0);

  Mlp tiny;
  tiny.sizes = {1, 2, 1};
  tiny.activation = Activation::relu;
  tiny.weights = {(Eigen::MatrixXd(2, 1) << 2.0, -3.0).finished(),
                  (Eigen::MatrixXd(1, 2) << 1.0, -2.0).finished()};
  tiny.biases = {rvec({0.5, 1.0}), rvec({0.25})};
  // x=0.7: hidden pre-acts (1.9, -1.1) -> (1.9, 0); output 1.9 + 0.25.
  CHECK(qip::forward(tiny, rvec({0.7}))[0] ==
        doctest::Approx(2.15).epsilon(1e-15));
  // x=-1: hidden (-1.5, 4) -> (0, 4); output -8 + 0.25.
  CHECK(qip::forward(tiny, rvec({-1.0}))[0] ==
        doctest::Approx(-7.75).epsilon(1e-15));

  CHECK_THROWS_AS((void)qip::forward(tiny, rvec({1.0, 2.0})),
                  qip::ContractError);
}

TEST_CASE("loss values and the MAE <= sqrt(MSE) inequality") {
  CHECK(qip::loss_mae(rvec({0.0, 0.0})) == 0.0);
  CHECK(qip::loss_mse(rvec({0.0, 0.0})) == 0.0);
  const RealVector e = rvec({1.0, -1.0, 2.0});
  CHECK(qip::loss_mae(e) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(qip::loss_mse(e) == doctest::Approx(2.0).epsilon(1e-15));
  qip::Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const RealVector r = rng.normal_vector(5);
    CHECK(qip::loss_mae(r) <= std::sqrt(qip::loss_mse(r)) + 1e-15);
  }
}

TEST_CASE("backward: zero error under MSE gives a zero gradient") {
  Mlp net = qip::mlp_new({2, 3, 2}, Activation::tanh, 11);
  const RealVector x = rvec({0.4, -0.6});
  const RealVector target = qip::forward(net, x);
  const Gradients g = qip::backward(net, x, target, Loss::mse);
  for (const auto& w : g.w) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& b : g.b) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: MAE output-layer gradient entries are in {-1/m, 0, 1/m}") {
  Mlp net = qip::mlp_new({3, 5, 3}, Activation::relu, 21);
  const RealVector x = rvec({0.2, -0.8, 0.5});
  RealVector target = qip::forward(net, x);
  target[0] += 1.0;   // prediction below target: sign -1
  target[1] -= 2.0;   // prediction above target: sign +1
  // target[2] stays equal: subgradient 0 at the kink.
  const Gradients g = qip::backward(net, x, target, Loss::mae);
  // The output-layer bias gradient is exactly the output delta.
  const RealVector& db = g.b.back();
  CHECK(db[0] == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(db[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(db[2] == 0.0);
}

TEST_CASE("backward matches central finite differences on random tiny nets") {
  int tested_mse = 0, tested_mae = 0;
  for (std::uint64_t seed = 0; tested_mse < 10 || tested_mae < 10; ++seed) {
    REQUIRE(seed < 500);  // the kink filter must not starve the loop
    const Activation act =
        seed % 2 == 0 ? Activation::tanh : Activation::relu;
    Mlp net = qip::mlp_new({4, 8, 4}, act, seed);
    qip::Rng rng(seed * 31 + 1);
    const RealVector x = rng.normal_vector(4);
    const RealVector target = rng.normal_vector(4);
    if (!kink_safe(net, x, target, 1e-3)) continue;
    if (tested_mse < 10) {
      const Gradients analytic = qip::backward(net, x, target, Loss::mse);
      const Gradients fd = fd_gradients(net, x, target, Loss::mse, 1e-5);
      CHECK(max_relative_gap(analytic, fd) < 1e-6);
      ++tested_mse;
    } else {
      const Gradients analytic = qip::backward(net, x, target, Loss::mae);
      const Gradients fd = fd_gradients(net, x, target, Loss::mae, 1e-5);
      CHECK(max_relative_gap(analytic, fd) < 1e-5);
      ++tested_mae;
    }
  }
}

TEST_CASE("batch gradient equals the mean of per-sample gradients") {
  Mlp net = qip::mlp_new({3, 6, 3}, Activation::tanh, 5);
  qip::Rng rng(17);
  Eigen::MatrixXd x(3, 4), t(3, 4);
  for (int j = 0; j < 4; ++j) {
    x.col(j) = rng.normal_vector(3);
    t.col(j) = rng.normal_vector(3);
  }
  double batch_loss = 0.0;
  const Gradients batch =
      qip::backward_batch(net, x, t, Loss::mse, &batch_loss);
  Gradients mean = qip::backward(net, x.col(0), t.col(0), Loss::mse);
  double mean_loss = loss_of(net, x.col(0), t.col(0), Loss::mse);
  for (int j = 1; j < 4; ++j) {
    const Gradients g = qip::backward(net, x.col(j), t.col(j), Loss::mse);
    for (std::size_t l = 0; l < mean.w.size(); ++l) {
      mean.w[l] += g.w[l];
      mean.b[l] += g.b[l];
    }
    mean_loss += loss_of(net, x.col(j), t.col(j), Loss::mse);
  }
  for (std::size_t l = 0; l < mean.w.size(); ++l) {
    CHECK((batch.w[l] - mean.w[l] / 4.0).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((batch.b[l] - mean.b[l] / 4.0).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK(batch_loss == doctest::Approx(mean_loss / 4.0).epsilon(1e-14));
}

TEST_CASE("adam_step: zero gradient is a no-op, one step matches the formula") {
  Mlp net = qip::mlp_new({2, 3, 2}, Activation::relu, 9);
  AdamState adam = AdamState::ForNetwork(net, 0.01);
  const Mlp before = net;
  Gradients zero;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    zero.w.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                           net.weights[l].cols()));
    zero.b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  qip::adam_step(net, adam, zero);
  qip::adam_step(net, adam, zero);
  CHECK(adam.t == 2);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    CHECK((net.weights[l] - before.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((net.biases[l] - before.biases[l]).cwiseAbs().maxCoeff() == 0.0);
  }

  // Fresh state, one step: update must be alpha * g / (|g| + eps) exactly
  // (the bias corrections cancel at t = 1).
  Mlp single;
  single.sizes = {1, 1};
  single.weights = {(Eigen::MatrixXd(1, 1) << 0.5).finished()};
  single.biases = {rvec({0.0})};
  AdamState s = AdamState::ForNetwork(single, 0.25);
  Gradients g;
  g.w = {(Eigen::MatrixXd(1, 1) << -0.8).finished()};
  g.b = {rvec({0.0})};
  qip::adam_step(single, s, g);
  const double want =
      0.5 + 0.25 * 0.8 / (std::sqrt(0.8 * 0.8) + s.epsilon);
  CHECK(single.weights[0](0, 0) == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("train memorizes a single pair") {
  const std::vector<TrainingPair> pairs = toy_pairs(1, 3, 99);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.epochs = 2000;
  cfg.learning_rate = 1e-2;
  cfg.loss = Loss::mse;
  const qip::TrainResult r =
      qip::train(qip::mlp_new({3, 8, 3}, Activation::tanh, 4), pairs, cfg);
  CHECK(r.epoch_loss.back() < 1e-3);
  CHECK(r.epoch_loss.size() == 2000);
}

TEST_CASE("train is bit-reproducible and counts ceil(n/batch) steps") {
  const std::vector<TrainingPair> pairs = toy_pairs(10, 2, 123);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 5;
  cfg.shuffle_seed = 3;
  const Mlp init = qip::mlp_new({2, 6, 2}, Activation::relu, 8);
  const qip::TrainResult a = qip::train(init, pairs, cfg);
  const qip::TrainResult b = qip::train(init, pairs, cfg);
  CHECK(a.epoch_loss == b.epoch_loss);
  for (std::size_t l = 0; l < a.net.weights.size(); ++l)
    CHECK((a.net.weights[l] - b.net.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  // 10 pairs in batches of 4 -> 3 steps per epoch.
  CHECK(a.adam.t == 5 * 3);
  for (double loss : a.epoch_loss) CHECK(std::isfinite(loss));
}

TEST_CASE("a split run with start_epoch continues bit-exactly") {
  const std::vector<TrainingPair> pairs = toy_pairs(24, 2, 7);
  const Mlp init = qip::mlp_new({2, 5, 2}, Activation::relu, 2);
  TrainConfig full;
  full.batch_size = 8;
  full.epochs = 6;
  full.shuffle_seed = 11;
  const qip::TrainResult whole = qip::train(init, pairs, full);

  TrainConfig first = full;
  first.epochs = 3;
  const qip::TrainResult part1 = qip::train(init, pairs, first);
  TrainConfig second = full;
  second.epochs = 3;
  second.start_epoch = 3;
  const qip::TrainResult part2 =
      qip::train(part1.net, pairs, second, part1.adam);

  for (std::size_t l = 0; l < whole.net.weights.size(); ++l) {
    CHECK((whole.net.weights[l] - part2.net.weights[l])
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((whole.net.biases[l] - part2.net.biases[l]).cwiseAbs().maxCoeff() ==
          0.0);
  }
  std::vector<double> stitched = part1.epoch_loss;
  stitched.insert(stitched.end(), part2.epoch_loss.begin(),
                  part2.epoch_loss.end());
  CHECK(stitched == whole.epoch_loss);
}

TEST_CASE("train reserves the trailing holdout fraction") {
  const std::vector<TrainingPair> pairs = toy_pairs(20, 2, 55);
  TrainConfig cfg;
  cfg.batch_size = 5;
  cfg.epochs = 3;
  cfg.holdout_fraction = 0.25;
  const qip::TrainResult r =
      qip::train(qip::mlp_new({2, 4, 2}, Activation::relu, 1), pairs, cfg);
  CHECK(r.holdout_loss.size() == 3);
  // 15 training pairs in batches of 5 -> 3 steps per epoch.
  CHECK(r.adam.t == 9);
}

TEST_CASE("train aborts on non-finite loss naming epoch and batch") {
  const std::vector<TrainingPair> pairs = toy_pairs(4, 2, 31);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 10;
  cfg.learning_rate = 1e300;
  try {
    (void)qip::train(qip::mlp_new({2, 4, 2}, Activation::relu, 3), pairs, cfg);
    FAIL("expected NumericalError");
  } catch (const qip::NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("model JSON round-trip is lossless") {
  TempFile tmp("qip_test_model.json");
  const std::vector<TrainingPair> pairs = toy_pairs(6, 3, 1);
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.epochs = 4;
  const qip::TrainResult r =
      qip::train(qip::mlp_new({3, 7, 3}, Activation::tanh, 12), pairs, cfg);
  qip::save_model(r.net, tmp.path);
  const Mlp loaded = qip::load_model(tmp.path);
  CHECK(loaded.sizes == r.net.sizes);
  CHECK(loaded.activation == Activation::tanh);
  for (std::size_t l = 0; l < loaded.weights.size(); ++l) {
    CHECK((loaded.weights[l] - r.net.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.biases[l] - r.net.biases[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("model loading rejects bad documents") {
  CHECK_THROWS_AS((void)qip::load_model("/nonexistent/model.json"),
                  qip::IoError);
  TempFile garbage("qip_test_model_garbage.json");
  std::ofstream(garbage.path) << "{broken";
  CHECK_THROWS_AS((void)qip::load_model(garbage.path), qip::IoError);
  TempFile wrong("qip_test_model_wrong.json");
  std::ofstream(wrong.path)
      << R"({"format":"qipmlp-v2","sizes":[1,1],"activation":"relu","weights":[[[1.0]]],"biases":[[0.0]]})";
  CHECK_THROWS_AS((void)qip::load_model(wrong.path), qip::IoError);
}

TEST_CASE("checkpoint round-trip preserves optimizer state exactly") {
  TempFile tmp("qip_test_ckpt.json");
  const std::vector<TrainingPair> pairs = toy_pairs(12, 2, 77);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  const qip::TrainResult r =
      qip::train(qip::mlp_new({2, 5, 2}, Activation::relu, 6), pairs, cfg);
  qip::Checkpoint ckpt{r.net, r.adam, 3, r.epoch_loss, r.holdout_loss};
  qip::save_checkpoint(ckpt, tmp.path);
  const qip::Checkpoint loaded = qip::load_checkpoint(tmp.path);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.epoch_loss == r.epoch_loss);
  CHECK(loaded.adam.t == r.adam.t);
  CHECK(loaded.adam.alpha == r.adam.alpha);
  for (std::size_t l = 0; l < r.adam.m_w.size(); ++l) {
    CHECK((loaded.adam.m_w[l] - r.adam.m_w[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.adam.v_w[l] - r.adam.v_w[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.adam.m_b[l] - r.adam.m_b[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.adam.v_b[l] - r.adam.v_b[l]).cwiseAbs().maxCoeff() == 0.0);
  }

  // Resuming from the loaded checkpoint matches resuming from the live one.
  TrainConfig more;
  more.batch_size = 4;
  more.epochs = 2;
  more.start_epoch = 3;
  const qip::TrainResult a = qip::train(r.net, pairs, more, r.adam);
  const qip::TrainResult b =
      qip::train(loaded.net, pairs, more, loaded.adam);
  for (std::size_t l = 0; l < a.net.weights.size(); ++l)
    CHECK((a.net.weights[l] - b.net.weights[l]).cwiseAbs().maxCoeff() == 0.0);
}
