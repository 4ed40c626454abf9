#include "qip/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <json.hpp>

#include "qip/rng.hpp"

namespace qip {

namespace {

using nlohmann::json;

// Salt separating the per-epoch shuffle streams from other derived streams.
constexpr std::uint64_t kShuffleSalt = 0x5AFF1E;

void check_net(const Mlp& net) {
  if (net.sizes.size() < 2)
    throw ContractError("Mlp: need at least input and output layers");
  const std::size_t n_layers = net.sizes.size() - 1;
  if (net.weights.size() != n_layers || net.biases.size() != n_layers)
    throw ContractError("Mlp: layer count mismatch between sizes and "
                        "parameters");
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (net.weights[l].rows() != net.sizes[l + 1] ||
        net.weights[l].cols() != net.sizes[l])
      throw ContractError("Mlp: weight shape mismatch at layer " +
                          std::to_string(l));
    if (net.biases[l].size() != net.sizes[l + 1])
      throw ContractError("Mlp: bias shape mismatch at layer " +
                          std::to_string(l));
    if (!net.weights[l].allFinite() || !net.biases[l].allFinite())
      throw ContractError("Mlp: non-finite parameters at layer " +
                          std::to_string(l));
  }
}

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Derivative of the hidden activation as a function of the pre-activation.
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::relu)
    return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

}  // namespace

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::size_t>(sizes[l + 1]) *
             static_cast<std::size_t>(sizes[l]) +
         static_cast<std::size_t>(sizes[l + 1]);
  return n;
}

Mlp mlp_new(std::vector<Eigen::Index> sizes, Activation activation,
            std::uint64_t seed) {
  if (sizes.size() < 2)
    throw ContractError("mlp_new: need at least input and output layers");
  for (Eigen::Index s : sizes)
    if (s < 1) throw ContractError("mlp_new: layer sizes must be positive");
  Mlp net;
  net.sizes = std::move(sizes);
  net.activation = activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    const Eigen::Index fan_in = net.sizes[l], fan_out = net.sizes[l + 1];
    const double limit =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < fan_out; ++i)
      for (Eigen::Index j = 0; j < fan_in; ++j)
        w(i, j) = limit * (2.0 * rng.uniform01() - 1.0);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

RealVector forward(const Mlp& net, const RealVector& x) {
  if (x.size() != net.input_size())
    throw ContractError("forward: input size " + std::to_string(x.size()) +
                        ", network expects " +
                        std::to_string(net.input_size()));
  return forward_batch(net, x);
}

Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x) {
  if (x.rows() != net.input_size())
    throw ContractError("forward_batch: input rows " +
                        std::to_string(x.rows()) + ", network expects " +
                        std::to_string(net.input_size()));
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::MatrixXd z =
        (net.weights[l] * a).colwise() + net.biases[l];
    a = (l + 1 < net.weights.size()) ? apply_activation(z, net.activation)
                                     : std::move(z);
  }
  return a;
}

double loss_mae(const RealVector& e) {
  return e.cwiseAbs().sum() / static_cast<double>(e.size());
}

double loss_mse(const RealVector& e) {
  return e.squaredNorm() / static_cast<double>(e.size());
}

Gradients backward(const Mlp& net, const RealVector& x,
                   const RealVector& target, Loss loss) {
  return backward_batch(net, x, target, loss);
}

Gradients backward_batch(const Mlp& net, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& target, Loss loss,
                         double* batch_loss) {
  if (x.rows() != net.input_size() || target.rows() != net.output_size() ||
      x.cols() != target.cols())
    throw ContractError("backward_batch: shape mismatch");
  const std::size_t n_layers = net.weights.size();
  const double b = static_cast<double>(x.cols());
  const double m = static_cast<double>(net.output_size());

  // Forward pass, keeping pre-activations for the backward sweep.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> pre;
  activations.reserve(n_layers + 1);
  pre.reserve(n_layers);
  activations.push_back(x);
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre.push_back((net.weights[l] * activations[l]).colwise() +
                  net.biases[l]);
    activations.push_back(l + 1 < n_layers
                              ? apply_activation(pre[l], net.activation)
                              : pre[l]);
  }

  const Eigen::MatrixXd error = activations.back() - target;
  if (batch_loss) {
    if (loss == Loss::mae)
      *batch_loss = error.cwiseAbs().sum() / (m * b);
    else
      *batch_loss = error.squaredNorm() / (m * b);
  }

  Gradients grads;
  grads.w.resize(n_layers);
  grads.b.resize(n_layers);
  // d(batch-mean loss)/d(output pre-activation); sign(0) = 0 covers the MAE
  // kink subgradient choice.
  Eigen::MatrixXd delta;
  if (loss == Loss::mae)
    delta = (error.array().sign() / (m * b)).matrix();
  else
    delta = (2.0 / (m * b)) * error;
  for (std::size_t l = n_layers; l-- > 0;) {
    grads.w[l].noalias() = delta * activations[l].transpose();
    grads.b[l] = delta.rowwise().sum();
    if (l > 0)
      delta = (net.weights[l].transpose() * delta)
                  .cwiseProduct(activation_grad(pre[l - 1], net.activation));
  }
  return grads;
}

AdamState AdamState::ForNetwork(const Mlp& net, double alpha) {
  AdamState s;
  s.alpha = alpha;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                          net.weights[l].cols()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                          net.weights[l].cols()));
    s.m_b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    s.v_b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return s;
}

void adam_step(Mlp& net, AdamState& state, const Gradients& grads) {
  if (state.m_w.size() != net.weights.size())
    throw ContractError("adam_step: state does not match network layout");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1,
                                    static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2,
                                    static_cast<double>(state.t));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    state.m_w[l] = state.beta1 * state.m_w[l] +
                   (1.0 - state.beta1) * grads.w[l];
    state.v_w[l] = state.beta2 * state.v_w[l] +
                   (1.0 - state.beta2) * grads.w[l].cwiseProduct(grads.w[l]);
    net.weights[l].array() -=
        state.alpha * (state.m_w[l].array() / bc1) /
        ((state.v_w[l].array() / bc2).sqrt() + state.epsilon);
    state.m_b[l] = state.beta1 * state.m_b[l] +
                   (1.0 - state.beta1) * grads.b[l];
    state.v_b[l] = state.beta2 * state.v_b[l] +
                   (1.0 - state.beta2) * grads.b[l].cwiseProduct(grads.b[l]);
    net.biases[l].array() -=
        state.alpha * (state.m_b[l].array() / bc1) /
        ((state.v_b[l].array() / bc2).sqrt() + state.epsilon);
  }
}

TrainResult train(Mlp net, const std::vector<TrainingPair>& data,
                  const TrainConfig& cfg, AdamState adam) {
  check_net(net);
  if (data.empty()) throw ContractError("train: empty dataset");
  if (cfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0)
    throw ContractError("train: holdout_fraction must be in [0, 1)");
  const Eigen::Index m_in = net.input_size(), m_out = net.output_size();
  if (data[0].c.size() != m_in || data[0].theta.size() != m_out)
    throw ContractError("train: dataset pair shape does not match network");

  const std::size_t n_total = data.size();
  const std::size_t n_hold = static_cast<std::size_t>(
      std::floor(cfg.holdout_fraction * static_cast<double>(n_total)));
  const std::size_t n_train = n_total - n_hold;
  if (n_train == 0) throw ContractError("train: holdout leaves no data");

  // Pack the dataset into column matrices once; batches gather columns.
  Eigen::MatrixXd x(m_in, static_cast<Eigen::Index>(n_train));
  Eigen::MatrixXd t(m_out, static_cast<Eigen::Index>(n_train));
  for (std::size_t i = 0; i < n_train; ++i) {
    x.col(static_cast<Eigen::Index>(i)) = data[i].c;
    t.col(static_cast<Eigen::Index>(i)) = data[i].theta.theta();
  }
  Eigen::MatrixXd xh(m_in, static_cast<Eigen::Index>(n_hold));
  Eigen::MatrixXd th(m_out, static_cast<Eigen::Index>(n_hold));
  for (std::size_t i = 0; i < n_hold; ++i) {
    xh.col(static_cast<Eigen::Index>(i)) = data[n_train + i].c;
    th.col(static_cast<Eigen::Index>(i)) = data[n_train + i].theta.theta();
  }

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index max_batch = std::min<Eigen::Index>(
      cfg.batch_size, static_cast<Eigen::Index>(n_train));
  Eigen::MatrixXd xb(m_in, max_batch), tb(m_out, max_batch);

  TrainResult result;
  for (int e = 0; e < cfg.epochs; ++e) {
    const int global_epoch = cfg.start_epoch + e;
    // The visit order must depend only on (shuffle_seed, global_epoch) so a
    // resumed run replays the same batches; start from identity every epoch.
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.shuffle_seed, kShuffleSalt,
                                static_cast<std::uint64_t>(global_epoch)));
    shuffle(order, shuffle_rng);
    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < n_train;
         first += static_cast<std::size_t>(max_batch), ++batch_index) {
      const Eigen::Index count = static_cast<Eigen::Index>(
          std::min<std::size_t>(static_cast<std::size_t>(max_batch),
                                n_train - first));
      for (Eigen::Index j = 0; j < count; ++j) {
        const std::size_t src = order[first + static_cast<std::size_t>(j)];
        xb.col(j) = x.col(static_cast<Eigen::Index>(src));
        tb.col(j) = t.col(static_cast<Eigen::Index>(src));
      }
      double batch_loss = 0.0;
      const Gradients grads = backward_batch(
          net, xb.leftCols(count), tb.leftCols(count), cfg.loss, &batch_loss);
      if (!std::isfinite(batch_loss))
        throw NumericalError(
            "train: non-finite loss at epoch " +
            std::to_string(global_epoch) + ", batch " +
            std::to_string(batch_index));
      epoch_sum += batch_loss * static_cast<double>(count);
      adam_step(net, adam, grads);
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(n_train));
    if (n_hold > 0) {
      const Eigen::MatrixXd err = forward_batch(net, xh) - th;
      const double h =
          cfg.loss == Loss::mae
              ? err.cwiseAbs().sum() /
                    (static_cast<double>(m_out) * static_cast<double>(n_hold))
              : err.squaredNorm() /
                    (static_cast<double>(m_out) * static_cast<double>(n_hold));
      result.holdout_loss.push_back(h);
    }
  }
  result.net = std::move(net);
  result.adam = std::move(adam);
  return result;
}

TrainResult train(Mlp net, const std::vector<TrainingPair>& data,
                  const TrainConfig& cfg) {
  AdamState adam = AdamState::ForNetwork(net, cfg.learning_rate);
  return train(std::move(net), data, cfg, std::move(adam));
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  if (r == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != c)
      throw IoError("ragged matrix rows in model document");
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

json model_to_json(const Mlp& net) {
  json doc;
  doc["format"] = "qipmlp-v1";
  doc["sizes"] = net.sizes;
  doc["activation"] = net.activation == Activation::relu ? "relu" : "tanh";
  json weights = json::array(), biases = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    weights.push_back(matrix_to_json(net.weights[l]));
    biases.push_back(std::vector<double>(net.biases[l].begin(),
                                         net.biases[l].end()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc;
}

Mlp model_from_json(const json& doc, const std::string& where) {
  if (doc.at("format").get<std::string>() != "qipmlp-v1")
    throw IoError("unsupported format in " + where + ": expected qipmlp-v1, "
                  "found " +
                  doc.at("format").get<std::string>());
  Mlp net;
  net.sizes = doc.at("sizes").get<std::vector<Eigen::Index>>();
  const std::string act = doc.at("activation").get<std::string>();
  if (act == "relu")
    net.activation = Activation::relu;
  else if (act == "tanh")
    net.activation = Activation::tanh;
  else
    throw IoError("unknown activation in " + where + ": " + act);
  for (const auto& w : doc.at("weights"))
    net.weights.push_back(matrix_from_json(w));
  for (const auto& b : doc.at("biases")) {
    const auto vals = b.get<std::vector<double>>();
    net.biases.push_back(Eigen::Map<const Eigen::VectorXd>(
        vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  try {
    check_net(net);
  } catch (const ContractError& e) {
    throw IoError("invalid model in " + where + ": " + e.what());
  }
  return net;
}

json adam_to_json(const AdamState& s) {
  json doc;
  doc["t"] = s.t;
  doc["alpha"] = s.alpha;
  doc["beta1"] = s.beta1;
  doc["beta2"] = s.beta2;
  doc["epsilon"] = s.epsilon;
  json mw = json::array(), vw = json::array(), mb = json::array(),
       vb = json::array();
  for (std::size_t l = 0; l < s.m_w.size(); ++l) {
    mw.push_back(matrix_to_json(s.m_w[l]));
    vw.push_back(matrix_to_json(s.v_w[l]));
    mb.push_back(std::vector<double>(s.m_b[l].begin(), s.m_b[l].end()));
    vb.push_back(std::vector<double>(s.v_b[l].begin(), s.v_b[l].end()));
  }
  doc["m_w"] = std::move(mw);
  doc["v_w"] = std::move(vw);
  doc["m_b"] = std::move(mb);
  doc["v_b"] = std::move(vb);
  return doc;
}

AdamState adam_from_json(const json& doc) {
  AdamState s;
  s.t = doc.at("t").get<std::size_t>();
  s.alpha = doc.at("alpha").get<double>();
  s.beta1 = doc.at("beta1").get<double>();
  s.beta2 = doc.at("beta2").get<double>();
  s.epsilon = doc.at("epsilon").get<double>();
  for (const auto& m : doc.at("m_w")) s.m_w.push_back(matrix_from_json(m));
  for (const auto& v : doc.at("v_w")) s.v_w.push_back(matrix_from_json(v));
  for (const auto& b : doc.at("m_b")) {
    const auto vals = b.get<std::vector<double>>();
    s.m_b.push_back(Eigen::Map<const Eigen::VectorXd>(
        vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  for (const auto& b : doc.at("v_b")) {
    const auto vals = b.get<std::vector<double>>();
    s.v_b.push_back(Eigen::Map<const Eigen::VectorXd>(
        vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  return s;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw IoError("parse error in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void save_model(const Mlp& net, const std::filesystem::path& path) {
  write_json_file(model_to_json(net), path);
}

Mlp load_model(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  try {
    return model_from_json(doc, path.string());
  } catch (const json::exception& e) {
    throw IoError("malformed model document " + path.string() + ": " +
                  e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt,
                     const std::filesystem::path& path) {
  json doc;
  doc["format"] = "qipckpt-v1";
  doc["epoch"] = ckpt.epoch;
  doc["epoch_loss"] = ckpt.epoch_loss;
  doc["holdout_loss"] = ckpt.holdout_loss;
  doc["model"] = model_to_json(ckpt.net);
  doc["adam"] = adam_to_json(ckpt.adam);
  write_json_file(doc, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  try {
    if (doc.at("format").get<std::string>() != "qipckpt-v1")
      throw IoError("unsupported format in " + path.string() +
                    ": expected qipckpt-v1, found " +
                    doc.at("format").get<std::string>());
    Checkpoint ckpt;
    ckpt.epoch = doc.at("epoch").get<int>();
    ckpt.epoch_loss = doc.at("epoch_loss").get<std::vector<double>>();
    ckpt.holdout_loss = doc.at("holdout_loss").get<std::vector<double>>();
    ckpt.net = model_from_json(doc.at("model"), path.string());
    ckpt.adam = adam_from_json(doc.at("adam"));
    if (ckpt.adam.m_w.size() != ckpt.net.weights.size())
      throw IoError("checkpoint optimizer state does not match model in " +
                    path.string());
    return ckpt;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint document " + path.string() + ": " +
                  e.what());
  }
}

}  // namespace qip
