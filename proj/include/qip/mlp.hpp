#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "qip/datagen.hpp"

namespace qip {

enum class Activation { relu, tanh };
enum class Loss { mae, mse };

/// Fully-connected feed-forward network. weights[l] maps layer l to layer
/// l+1 (shape sizes[l+1] x sizes[l]); hidden layers apply the activation,
/// the output layer is linear.
struct Mlp {
  std::vector<Eigen::Index> sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::relu;

  Eigen::Index input_size() const { return sizes.front(); }
  Eigen::Index output_size() const { return sizes.back(); }
  std::size_t parameter_count() const;
};

/// Parameter-shaped gradient (same layout as Mlp weights/biases).
struct Gradients {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

/// Adam optimizer state. The hyperparameters live here so that a resumed
/// run continues with exactly the optimizer it checkpointed.
struct AdamState {
  std::size_t t = 0;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;

  static AdamState ForNetwork(const Mlp& net, double alpha = 1e-3);
};

struct TrainConfig {
  Eigen::Index batch_size = 40000;
  int epochs = 300;
  double learning_rate = 1e-3;
  Loss loss = Loss::mae;
  std::uint64_t shuffle_seed = 0;
  /// Fraction of the dataset (taken from the end) reserved for a per-epoch
  /// holdout loss; 0 trains on everything.
  double holdout_fraction = 0.0;
  /// Global index of the first epoch this call runs; a resumed run passes
  /// the checkpointed epoch so the per-epoch shuffle streams line up with
  /// an uninterrupted run.
  int start_epoch = 0;
};

struct TrainResult {
  Mlp net;
  AdamState adam;
  std::vector<double> epoch_loss;
  std::vector<double> holdout_loss;
};

/// Fresh network with uniform Glorot-style weights in
/// +-sqrt(6/(fan_in+fan_out)) and zero biases, deterministic per seed.
Mlp mlp_new(std::vector<Eigen::Index> sizes, Activation activation,
            std::uint64_t seed);

RealVector forward(const Mlp& net, const RealVector& x);

/// Columns of x are independent inputs; returns the matching output columns.
Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x);

/// L(e) = sum_i |e_i| / m and sum_i e_i^2 / m.
double loss_mae(const RealVector& e);
double loss_mse(const RealVector& e);

/// Gradient of the chosen loss at one example. The MAE subgradient at a
/// kink (e_i = 0) is taken as 0.
Gradients backward(const Mlp& net, const RealVector& x,
                   const RealVector& target, Loss loss);

/// Gradient of the batch-mean loss over the columns of x/target. When
/// batch_loss is non-null it receives that mean loss (computed before any
/// update, so it is the pre-step training loss).
Gradients backward_batch(const Mlp& net, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& target, Loss loss,
                         double* batch_loss = nullptr);

/// One canonical Adam update (bias-corrected moments). A zero gradient
/// leaves the parameters unchanged.
void adam_step(Mlp& net, AdamState& state, const Gradients& grads);

/// Mini-batch training: cfg.epochs passes over the data, reshuffled every
/// epoch from derive_seed(shuffle_seed, epoch), ceil(n/batch) Adam steps per
/// epoch. Throws NumericalError naming epoch and batch if the loss goes
/// non-finite. Single-threaded and bit-reproducible.
TrainResult train(Mlp net, const std::vector<TrainingPair>& data,
                  const TrainConfig& cfg, AdamState adam);

/// Convenience overload: fresh Adam state at cfg.learning_rate.
TrainResult train(Mlp net, const std::vector<TrainingPair>& data,
                  const TrainConfig& cfg);

/// JSON model document ("qipmlp-v1"): sizes, activation, weights, biases.
void save_model(const Mlp& net, const std::filesystem::path& path);
Mlp load_model(const std::filesystem::path& path);

/// Mid-training snapshot: everything needed to continue bit-exactly.
struct Checkpoint {
  Mlp net;
  AdamState adam;
  int epoch = 0;  // epochs completed so far
  std::vector<double> epoch_loss;
  std::vector<double> holdout_loss;
};

/// JSON checkpoint document ("qipckpt-v1").
void save_checkpoint(const Checkpoint& ckpt,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qip
