// qip: command-line driver for the maximum-entropy estimation toolkit.
//
// Subcommands: profile, gen, train, eval, estimate, baseline, ingest.
// Every run is reproducible from its flags (or a --config file) plus the
// explicit seeds; a resolved-config snapshot is written next to each run's
// primary output. Exit codes: 0 success, 1 usage/config error, 2 numerical
// failure, 3 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qip/baselines.hpp"
#include "qip/datagen.hpp"
#include "qip/errors.hpp"
#include "qip/estimate.hpp"
#include "qip/mlp.hpp"
#include "qip/opsets.hpp"
#include "qip/qcore.hpp"
#include "qip/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Small shared helpers

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string join(const qip::RealVector& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, sep)) out.push_back(tok);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw qip::ContractError("not a number: '" + tok + "' in " + where);
  }
}

qip::RealVector parse_vector(const std::string& s, const std::string& where) {
  const auto toks = split(s, ',');
  if (toks.empty()) throw qip::ContractError("empty vector in " + where);
  qip::RealVector v(static_cast<Eigen::Index>(toks.size()));
  for (std::size_t i = 0; i < toks.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = parse_double(toks[i], where);
  return v;
}

/// Operator-set selector:
///   builtin_f1 | builtin_f2 | pauli:N | random:D,M,SEED | file:PATH
qip::OperatorSet parse_opset(const std::string& sel) {
  if (sel == "builtin_f1") return qip::builtin_f1();
  if (sel == "builtin_f2") return qip::builtin_f2();
  if (sel.rfind("pauli:", 0) == 0) {
    const double n = parse_double(sel.substr(6), "opset selector");
    if (n < 1 || n != std::floor(n))
      throw qip::ContractError("opset selector: pauli:N needs integer N >= 1");
    return qip::pauli_lattice(static_cast<int>(n));
  }
  if (sel.rfind("random:", 0) == 0) {
    const auto toks = split(sel.substr(7), ',');
    if (toks.size() != 3)
      throw qip::ContractError("opset selector: random:D,M,SEED needs three fields");
    const double d = parse_double(toks[0], "opset selector");
    const double m = parse_double(toks[1], "opset selector");
    const double seed = parse_double(toks[2], "opset selector");
    if (d < 2 || m < 1 || d != std::floor(d) || m != std::floor(m) ||
        seed != std::floor(seed) || seed < 0)
      throw qip::ContractError("opset selector: random:D,M,SEED needs D >= 2, M >= 1");
    return qip::random_hermitian_set(static_cast<Eigen::Index>(d),
                                     static_cast<int>(m),
                                     static_cast<std::uint64_t>(seed));
  }
  if (sel.rfind("file:", 0) == 0) return qip::load_opset(sel.substr(5));
  throw qip::ContractError(
      "bad opset selector '" + sel +
      "' (expected builtin_f1 | builtin_f2 | pauli:N | random:D,M,SEED | file:PATH)");
}

/// Beta-distribution selector; beta/flat need a roughness profile.
qip::BetaDistribution make_distribution(const std::string& kind,
                                        const qip::OperatorSet& f_set,
                                        Eigen::Index intervals,
                                        Eigen::Index profile_samples,
                                        std::uint64_t profile_seed,
                                        int workers) {
  if (kind == "even") return qip::distribution_even(intervals);
  const qip::RealVector lambda_bar =
      qip::roughness_profile(f_set, intervals, profile_samples, profile_seed, workers);
  if (kind == "beta") return qip::distribution_beta(lambda_bar);
  if (kind == "flat") return qip::distribution_flat(lambda_bar);
  throw qip::ContractError("bad distribution selector '" + kind + "'");
}

void require_writable(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw qip::ContractError("output directory does not exist: " + parent.string());
}

/// Resolved-config snapshot next to the run's primary output, for provenance.
void write_snapshot(const CLI::App& app, const fs::path& anchor) {
  const fs::path path = anchor.string() + ".config";
  std::ofstream out(path);
  out << app.config_to_str(true, false);
  if (!out) throw qip::IoError("cannot write config snapshot: " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw qip::IoError("cannot open for writing: " + path.string());
  return out;
}

void write_json(const json& doc, const fs::path& path) {
  auto out = open_out(path);
  out << doc.dump(1) << "\n";
  if (!out) throw qip::IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// CSV input: header on line 1, one record per following line. Errors carry
// the 1-based file line number.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw qip::IoError("cannot open: " + path.string());
  CsvTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto toks = split(line, ',');
    if (lineno == 1) {
      t.header = toks;
      continue;
    }
    if (t.header.empty()) throw qip::IoError("missing header", 1);
    if (toks.size() != t.header.size())
      throw qip::IoError("expected " + std::to_string(t.header.size()) +
                             " fields, got " + std::to_string(toks.size()),
                         lineno);
    std::vector<double> row;
    row.reserve(toks.size());
    for (const auto& tok : toks) {
      try {
        row.push_back(parse_double(tok, "csv"));
      } catch (const qip::ContractError&) {
        throw qip::IoError("not a number: '" + tok + "'", lineno);
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw qip::IoError("empty file: " + path.string());
  return t;
}

// ---------------------------------------------------------------------------
// Density-matrix file format ("qipstate-v1"): dim + row-major [re, im] pairs.

json state_to_json(const qip::DensityMatrix& rho) {
  const auto& m = rho.matrix();
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return json{{"format", "qipstate-v1"}, {"dim", m.rows()}, {"rho", rows}};
}

qip::DensityMatrix load_state(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw qip::IoError("cannot open: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw qip::IoError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "qipstate-v1")
    throw qip::IoError(path.string() + ": not a qipstate-v1 document");
  try {
    const auto dim = doc.at("dim").get<Eigen::Index>();
    qip::ComplexMatrix m(dim, dim);
    const auto& rows = doc.at("rho");
    if (static_cast<Eigen::Index>(rows.size()) != dim)
      throw qip::IoError(path.string() + ": rho has wrong row count");
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != dim)
        throw qip::IoError(path.string() + ": rho has wrong column count");
      for (Eigen::Index j = 0; j < dim; ++j) {
        const auto& c = row.at(static_cast<std::size_t>(j));
        m(i, j) = qip::Complex(c.at(0).get<double>(), c.at(1).get<double>());
      }
    }
    return qip::DensityMatrix::FromMatrix(m);
  } catch (const json::exception& e) {
    throw qip::IoError(path.string() + ": " + e.what());
  }
}

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// profile: roughness profile and the three derived interval distributions.

struct ProfileArgs {
  std::string opset;
  Eigen::Index intervals = 100;
  Eigen::Index samples = 1000;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
};

void run_profile(const CLI::App& root, const ProfileArgs& a) {
  const fs::path json_path = a.out + ".json";
  const fs::path csv_path = a.out + ".csv";
  require_writable(json_path);

  const qip::OperatorSet f_set = parse_opset(a.opset);
  const qip::RealVector lambda_bar =
      qip::roughness_profile(f_set, a.intervals, a.samples, a.seed, a.workers);
  const qip::RealVector p_even = qip::distribution_even(a.intervals).weights();
  const qip::RealVector p_beta = qip::distribution_beta(lambda_bar).weights();
  const qip::RealVector p_flat = qip::distribution_flat(lambda_bar).weights();

  auto to_array = [](const qip::RealVector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  write_json(json{{"lambda_bar", to_array(lambda_bar)},
                  {"p_even", to_array(p_even)},
                  {"p_beta", to_array(p_beta)},
                  {"p_flat", to_array(p_flat)}},
             json_path);

  auto csv = open_out(csv_path);
  csv << "interval_start,interval_end,lambda_bar,p_even,p_beta,p_flat\n";
  for (Eigen::Index i = 0; i < a.intervals; ++i)
    csv << i << "," << i + 1 << "," << fmt(lambda_bar[i]) << ","
        << fmt(p_even[i]) << "," << fmt(p_beta[i]) << "," << fmt(p_flat[i])
        << "\n";
  if (!csv) throw qip::IoError("write failed: " + csv_path.string());

  write_snapshot(root, json_path);
  std::cout << "profile: intervals=" << a.intervals << " samples=" << a.samples
            << " seed=" << a.seed << " -> " << json_path.string() << ", "
            << csv_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// gen: supervised dataset generation.

struct GenArgs {
  std::string opset;
  std::string dist = "flat";
  std::size_t count = 0;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  Eigen::Index intervals = 100;
  Eigen::Index profile_samples = 1000;
  std::uint64_t profile_seed = 0;
  int workers = 1;
  std::string out;
};

void run_gen(const CLI::App& root, const GenArgs& a) {
  const fs::path out_path = a.out;
  require_writable(out_path);

  const qip::OperatorSet f_set = parse_opset(a.opset);
  const qip::BetaDistribution dist = make_distribution(
      a.dist, f_set, a.intervals, a.profile_samples, a.profile_seed, a.workers);
  std::optional<qip::NoiseSpec> noise;
  if (a.noise_sigma > 0.0) noise = qip::NoiseSpec{a.noise_sigma, a.noise_seed};

  const auto pairs =
      qip::generate_dataset(f_set, dist, a.count, noise, a.seed, a.workers);
  qip::DatasetMeta meta;
  meta.m = f_set.size();
  meta.dim = f_set.dim();
  meta.opset_label = a.opset;
  qip::save_dataset(pairs, meta, out_path);

  write_snapshot(root, out_path);
  std::cout << "gen: count=" << pairs.size() << " m=" << meta.m
            << " dim=" << meta.dim << " seed=" << a.seed << " -> "
            << out_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// train: supervised training with optional checkpointing and resume.

struct TrainArgs {
  std::string data;
  std::string out;
  std::string sizes;  // "h1,h2,..." hidden layers; input/output from the data
  std::string activation = "relu";
  std::string loss = "mae";
  Eigen::Index batch = 40000;
  int epochs = 300;
  double lr = 1e-3;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t init_seed = 0;
  double holdout = 0.0;
  std::string loss_csv;
  std::string checkpoint;
  int checkpoint_every = 0;
  std::string resume;
};

void run_train(const CLI::App& root, const TrainArgs& a) {
  const fs::path model_path = a.out;
  const fs::path csv_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  require_writable(model_path);
  require_writable(csv_path);
  const fs::path ckpt_path =
      a.checkpoint.empty() ? a.out + ".ckpt.json" : a.checkpoint;
  if (a.checkpoint_every > 0) require_writable(ckpt_path);

  const qip::Dataset ds = qip::load_dataset(a.data);
  const Eigen::Index m = ds.meta.m;

  std::vector<Eigen::Index> sizes{m};
  if (a.sizes.empty()) {
    sizes.insert(sizes.end(), {100, 100});
  } else {
    for (const auto& tok : split(a.sizes, ',')) {
      const double h = parse_double(tok, "--sizes");
      if (h < 1 || h != std::floor(h))
        throw qip::ContractError("--sizes: layer widths must be positive integers");
      sizes.push_back(static_cast<Eigen::Index>(h));
    }
  }
  sizes.push_back(m);

  const qip::Activation act = a.activation == "tanh" ? qip::Activation::tanh
                                                     : qip::Activation::relu;
  const qip::Loss loss = a.loss == "mse" ? qip::Loss::mse : qip::Loss::mae;

  qip::Mlp net;
  qip::AdamState adam;
  int done = 0;
  std::vector<double> history, hold_history;
  if (!a.resume.empty()) {
    qip::Checkpoint ckpt = qip::load_checkpoint(a.resume);
    if (ckpt.net.input_size() != m || ckpt.net.output_size() != m)
      throw qip::ContractError("checkpoint network does not match the dataset width");
    net = std::move(ckpt.net);
    adam = std::move(ckpt.adam);
    done = ckpt.epoch;
    history = std::move(ckpt.epoch_loss);
    hold_history = std::move(ckpt.holdout_loss);
  } else {
    net = qip::mlp_new(sizes, act, a.init_seed);
    adam = qip::AdamState::ForNetwork(net, a.lr);
  }

  if (done >= a.epochs)
    std::cout << "train: checkpoint already at epoch " << done
              << ", nothing to do\n";
  while (done < a.epochs) {
    const int chunk = a.checkpoint_every > 0
                          ? std::min(a.checkpoint_every, a.epochs - done)
                          : a.epochs - done;
    qip::TrainConfig cfg;
    cfg.batch_size = a.batch;
    cfg.epochs = chunk;
    cfg.learning_rate = a.lr;
    cfg.loss = loss;
    cfg.shuffle_seed = a.shuffle_seed;
    cfg.holdout_fraction = a.holdout;
    cfg.start_epoch = done;
    qip::TrainResult r = qip::train(std::move(net), ds.pairs, cfg, std::move(adam));
    net = std::move(r.net);
    adam = std::move(r.adam);
    history.insert(history.end(), r.epoch_loss.begin(), r.epoch_loss.end());
    hold_history.insert(hold_history.end(), r.holdout_loss.begin(),
                        r.holdout_loss.end());
    done += chunk;
    if (a.checkpoint_every > 0)
      qip::save_checkpoint({net, adam, done, history, hold_history}, ckpt_path);
  }

  qip::save_model(net, model_path);
  auto csv = open_out(csv_path);
  const bool with_holdout = hold_history.size() == history.size() && !hold_history.empty();
  csv << (with_holdout ? "epoch,loss,holdout_loss\n" : "epoch,loss\n");
  for (std::size_t e = 0; e < history.size(); ++e) {
    csv << e << "," << fmt(history[e]);
    if (with_holdout) csv << "," << fmt(hold_history[e]);
    csv << "\n";
  }
  if (!csv) throw qip::IoError("write failed: " + csv_path.string());

  write_snapshot(root, model_path);
  std::cout << "train: epochs=" << done << " final_loss="
            << (history.empty() ? std::string("n/a") : fmt6(history.back()))
            << " -> " << model_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval: fidelity report on fresh test data plus per-interval boxplot CSV.

struct EvalArgs {
  std::string model;
  std::string opset;
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  std::uint64_t train_seed = 0;
  bool allow_same_seed = false;
  Eigen::Index intervals = 100;
  int per_interval = 10;
  int group = 5;
  std::string out;
};

void run_eval(const CLI::App& root, const EvalArgs& a, bool train_seed_given) {
  if (!a.allow_same_seed) {
    if (!train_seed_given)
      throw qip::ContractError(
          "eval: pass --train-seed so the test seed can be checked against it "
          "(or --allow-same-seed to skip the check)");
    if (a.train_seed == a.seed)
      throw qip::ContractError(
          "eval: test seed equals the training seed; pick a fresh one or pass "
          "--allow-same-seed");
  }
  const fs::path json_path = a.out + ".json";
  const fs::path csv_path = a.out + ".csv";
  const fs::path box_path = a.out + ".intervals.csv";
  require_writable(json_path);

  const qip::OperatorSet f_set = parse_opset(a.opset);
  const qip::Mlp net = qip::load_model(a.model);
  if (net.input_size() != static_cast<Eigen::Index>(f_set.size()))
    throw qip::ContractError("eval: model width does not match the operator set");

  const auto pairs = qip::generate_dataset(
      f_set, qip::distribution_even(a.intervals), a.count, std::nullopt, a.seed);
  const qip::FidelityReport report = qip::evaluate(net, f_set, pairs);
  qip::save_report(report, "mee", json_path);
  qip::save_report_csv(report, csv_path);

  // Boxplot sampling gets its own derived stream so it never aliases the
  // test-set streams above.
  const auto groups = qip::interval_boxplots(
      net, f_set, static_cast<int>(a.intervals), a.per_interval,
      qip::derive_seed(a.seed, 1), a.group);
  auto box = open_out(box_path);
  box << "beta_lo,beta_hi,mean,median,std,q1,q3,min,max,outliers\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& r = groups[g];
    box << g * static_cast<std::size_t>(a.group) << ","
        << (g + 1) * static_cast<std::size_t>(a.group) << "," << fmt(r.mean)
        << "," << fmt(r.median) << "," << fmt(r.std_dev) << "," << fmt(r.q1)
        << "," << fmt(r.q3) << "," << fmt(r.fidelities.front()) << ","
        << fmt(r.fidelities.back()) << "," << r.outliers.size() << "\n";
  }
  if (!box) throw qip::IoError("write failed: " + box_path.string());

  write_snapshot(root, json_path);
  std::cout << "eval: n=" << report.fidelities.size() << " mean="
            << fmt6(report.mean) << " median=" << fmt6(report.median)
            << " std=" << fmt6(report.std_dev) << " -> " << json_path.string()
            << "\n";
}

// ---------------------------------------------------------------------------
// estimate: single measurement vector, or a timed batch from a CSV.

struct EstimateArgs {
  std::string model;
  std::string opset;
  std::string c;
  std::string csv;
  std::string metric = "l2";
  std::string out;
  bool skip_residual = false;
};

void run_estimate(const CLI::App& root, const EstimateArgs& a) {
  const qip::Metric metric =
      a.metric == "linf" ? qip::Metric::linf : qip::Metric::l2;
  const qip::OperatorSet f_set = parse_opset(a.opset);
  const qip::Mlp net = qip::load_model(a.model);
  if (net.input_size() != static_cast<Eigen::Index>(f_set.size()))
    throw qip::ContractError("estimate: model width does not match the operator set");
  const Eigen::Index m = f_set.size();

  if (!a.c.empty()) {
    const qip::RealVector c = parse_vector(a.c, "--c");
    if (c.size() != m)
      throw qip::ContractError("estimate: --c needs " + std::to_string(m) +
                               " values");
    const auto [theta, rho] = qip::estimate_state(net, f_set, c);
    const auto rec = qip::consistency_check(net, f_set, c, metric);
    json doc = state_to_json(rho);
    doc["theta"] = std::vector<double>(theta.theta().data(),
                                       theta.theta().data() + theta.size());
    doc["beta"] = theta.beta();
    doc["residual"] = rec.residual;
    if (!a.out.empty()) {
      require_writable(a.out);
      write_json(doc, a.out);
      write_snapshot(root, a.out);
    }
    std::cout << "theta: " << join(theta.theta()) << "\n"
              << "beta: " << fmt(theta.beta()) << "\n"
              << "residual(" << a.metric << "): " << fmt(rec.residual) << "\n"
              << "rho:\n" << doc["rho"].dump() << "\n";
    return;
  }

  // Batch mode: predict every row, timing only the forward passes.
  if (a.out.empty())
    throw qip::ContractError("estimate: batch mode needs --out for the results CSV");
  require_writable(a.out);
  const CsvTable table = read_csv(a.csv);
  if (static_cast<Eigen::Index>(table.header.size()) < m)
    throw qip::IoError("expected at least " + std::to_string(m) + " columns", 1);
  std::vector<qip::MeasurementVector> cs;
  cs.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    qip::MeasurementVector c(m);
    for (Eigen::Index i = 0; i < m; ++i) c[i] = row[static_cast<std::size_t>(i)];
    cs.push_back(std::move(c));
  }

  std::vector<qip::RealVector> thetas(cs.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < cs.size(); ++i) thetas[i] = qip::forward(net, cs[i]);
  const double wall = elapsed_seconds(t0);

  auto out = open_out(a.out);
  for (Eigen::Index i = 0; i < m; ++i) out << (i ? "," : "") << "theta" << i + 1;
  if (!a.skip_residual) out << ",residual";
  out << "\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < thetas.size(); ++r) {
    out << join(thetas[r]);
    if (!a.skip_residual) {
      const auto tau = qip::thermal_state(f_set, qip::ThermalParams(thetas[r]));
      out << "," << qip::vector_distance(cs[r], qip::measure(tau, f_set), metric);
    }
    out << "\n";
  }
  if (!out) throw qip::IoError("write failed: " + a.out);

  write_snapshot(root, a.out);
  std::cout << "estimate: predicted " << cs.size() << " rows in "
            << fmt6(wall) << " s";
  if (!cs.empty())
    std::cout << " (" << fmt6(wall / static_cast<double>(cs.size()))
              << " s/point)";
  std::cout << " -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// baseline: network vs iterative vs QBM on a shared test set.

struct BaselineArgs {
  std::string opset;
  std::string model;
  std::size_t count = 20;
  std::uint64_t seed = 0;
  Eigen::Index intervals = 5;
  bool no_iterative = false;
  bool no_qbm = false;
  double error_bound = 1e-10;
  int max_sweeps = 10000;
  double damping = 1.0;
  double qbm_lr = 0.05;
  int qbm_iterations = 500;
  double fd_step = 1e-4;
  std::string out;
};

void run_baseline(const CLI::App& root, const BaselineArgs& a) {
  require_writable(a.out);
  const qip::OperatorSet f_set = parse_opset(a.opset);
  const auto pairs = qip::generate_dataset(
      f_set, qip::distribution_even(a.intervals), a.count, std::nullopt, a.seed);

  qip::CompareConfig cfg;
  cfg.include_network = !a.model.empty();
  cfg.include_iterative = !a.no_iterative;
  cfg.include_qbm = !a.no_qbm;
  cfg.iterative.error_bound = a.error_bound;
  cfg.iterative.max_sweeps = a.max_sweeps;
  cfg.iterative.damping = a.damping;
  cfg.qbm.learning_rate = a.qbm_lr;
  cfg.qbm.iterations = a.qbm_iterations;
  cfg.qbm.fd_step = a.fd_step;

  std::optional<qip::Mlp> net;
  if (cfg.include_network) {
    net = qip::load_model(a.model);
    if (net->input_size() != static_cast<Eigen::Index>(f_set.size()))
      throw qip::ContractError("baseline: model width does not match the operator set");
  }

  const qip::Comparison cmp =
      qip::compare_solvers(f_set, pairs, net ? &*net : nullptr, cfg);
  qip::save_comparison(cmp, a.out);
  write_snapshot(root, a.out);

  const qip::SolverReport* iterative = nullptr;
  const qip::SolverReport* qbm = nullptr;
  for (const auto& s : cmp.solvers) {
    std::cout << s.solver << ": points=" << s.points
              << " failures=" << s.failures;
    if (s.fidelity)
      std::cout << " mean_fidelity=" << fmt6(s.fidelity->mean);
    std::cout << " wall=" << fmt6(s.wall_seconds) << "s";
    if (s.points > 0)
      std::cout << " (" << fmt6(s.wall_seconds / static_cast<double>(s.points))
                << " s/point)";
    std::cout << "\n";
    if (s.solver == "iterative") iterative = &s;
    if (s.solver == "qbm") qbm = &s;
  }
  if (iterative && qbm && iterative->fidelity && qbm->fidelity &&
      qbm->fidelity->mean < iterative->fidelity->mean)
    std::cout << "note: qbm underperforms the iterative solver (mean "
              << fmt6(qbm->fidelity->mean) << " vs "
              << fmt6(iterative->fidelity->mean) << ")\n";
  std::cout << "baseline: -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// ingest: estimate states for measured rows and score them against a
// reference when one is available.

struct IngestArgs {
  std::string opset;
  std::string model;
  std::string csv;
  std::string reference = "auto";  // auto | ground_state | mee | explicit | none
  std::string reference_state;
  std::string metric = "l2";
  std::string out;
};

void run_ingest(const CLI::App& root, const IngestArgs& a) {
  const qip::Metric metric =
      a.metric == "linf" ? qip::Metric::linf : qip::Metric::l2;
  const qip::OperatorSet f_set = parse_opset(a.opset);
  const qip::Mlp net = qip::load_model(a.model);
  if (net.input_size() != static_cast<Eigen::Index>(f_set.size()))
    throw qip::ContractError("ingest: model width does not match the operator set");
  const Eigen::Index m = f_set.size();

  const fs::path rows_path = a.out + ".rows.csv";
  const fs::path relerr_path = a.out + ".relerr.csv";
  const fs::path report_path = a.out + ".report.json";
  require_writable(rows_path);

  const CsvTable table = read_csv(a.csv);
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  const bool has_truth = cols >= 2 * m;
  if (cols != m && cols != 2 * m)
    throw qip::IoError("expected " + std::to_string(m) + " or " +
                           std::to_string(2 * m) + " columns, got " +
                           std::to_string(cols),
                       1);

  std::string reference = a.reference;
  if (reference == "auto")
    reference = !a.reference_state.empty() ? "explicit"
                : has_truth                ? "ground_state"
                                           : "none";
  if (reference != "ground_state" && reference != "mee" &&
      reference != "explicit" && reference != "none")
    throw qip::ContractError("ingest: bad --reference '" + a.reference + "'");
  if (reference == "explicit" && a.reference_state.empty())
    throw qip::ContractError("ingest: --reference explicit needs --reference-state");
  if ((reference == "ground_state" || reference == "mee") && !has_truth)
    throw qip::ContractError(
        "ingest: --reference " + reference +
        " needs ground-truth parameter columns (2m columns) in the CSV");

  std::optional<qip::DensityMatrix> fixed_ref;
  if (reference == "explicit") fixed_ref = load_state(a.reference_state);

  std::vector<double> fidelities;
  std::vector<std::vector<std::optional<double>>> relerrs;
  auto rows_csv = open_out(rows_path);
  for (Eigen::Index i = 0; i < m; ++i) rows_csv << "theta" << i + 1 << ",";
  rows_csv << "residual";
  if (reference != "none") rows_csv << ",fidelity";
  rows_csv << "\n";

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    qip::MeasurementVector c(m);
    for (Eigen::Index i = 0; i < m; ++i) c[i] = table.rows[r][static_cast<std::size_t>(i)];

    const auto [theta, rho_est] = qip::estimate_state(net, f_set, c);
    const double residual =
        qip::vector_distance(c, qip::measure(rho_est, f_set), metric);
    rows_csv << join(theta.theta()) << "," << fmt(residual);

    if (reference != "none") {
      std::optional<qip::DensityMatrix> expected;
      if (reference == "explicit") {
        expected = *fixed_ref;
      } else {
        qip::RealVector t(m);
        for (Eigen::Index i = 0; i < m; ++i)
          t[i] = table.rows[r][static_cast<std::size_t>(m + i)];
        expected = reference == "ground_state"
                       ? qip::ground_state(f_set, t)
                       : qip::thermal_state(f_set, qip::ThermalParams(t));
      }
      fidelities.push_back(qip::fidelity(*expected, rho_est));
      relerrs.push_back(qip::relative_errors(*expected, f_set, c));
      rows_csv << "," << fmt(fidelities.back());
    }
    rows_csv << "\n";
  }
  if (!rows_csv) throw qip::IoError("write failed: " + rows_path.string());

  std::cout << "ingest: rows=" << table.rows.size() << " reference="
            << reference;
  if (reference != "none") {
    const qip::FidelityReport report = qip::make_fidelity_report(fidelities);
    qip::save_report(report, reference, report_path);

    // Per-row relative deviation of each measured value from the reference
    // state's expectation; blank field where the expectation is ~0.
    auto rel_csv = open_out(relerr_path);
    rel_csv << "row";
    for (const auto& label : f_set.labels()) rel_csv << "," << label;
    rel_csv << "\n";
    qip::RealVector mean_abs = qip::RealVector::Zero(m);
    std::vector<std::size_t> defined(static_cast<std::size_t>(m), 0);
    for (std::size_t r = 0; r < relerrs.size(); ++r) {
      rel_csv << r;
      for (Eigen::Index i = 0; i < m; ++i) {
        rel_csv << ",";
        const auto& e = relerrs[r][static_cast<std::size_t>(i)];
        if (e) {
          rel_csv << fmt(*e + 0.0);  // writes exact zeros unsigned
          mean_abs[i] += std::abs(*e);
          ++defined[static_cast<std::size_t>(i)];
        }
      }
      rel_csv << "\n";
    }
    if (!rel_csv) throw qip::IoError("write failed: " + relerr_path.string());

    std::cout << " mean_fidelity=" << fmt6(report.mean) << "\n";
    std::cout << "mean |relative error| per operator (%):\n";
    for (Eigen::Index i = 0; i < m; ++i) {
      std::cout << "  " << f_set.labels()[static_cast<std::size_t>(i)] << ": ";
      if (defined[static_cast<std::size_t>(i)] == 0)
        std::cout << "undefined\n";
      else
        std::cout << fmt6(100.0 * mean_abs[i] /
                          static_cast<double>(defined[static_cast<std::size_t>(i)]))
                  << "\n";
    }
  } else {
    std::cout << " (estimates and residuals only)\n";
  }

  write_snapshot(root, rows_path);
  std::cout << "ingest: -> " << rows_path.string() << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"maximum-entropy estimation of thermal quantum states"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags override it");

  const std::string opset_help =
      "operator set: builtin_f1 | builtin_f2 | pauli:N | random:D,M,SEED | file:PATH";

  ProfileArgs pa;
  auto* profile = app.add_subcommand(
      "profile", "roughness profile and interval distributions");
  profile->add_option("--opset", pa.opset, opset_help)->required();
  profile->add_option("--intervals", pa.intervals, "number of unit coldness intervals");
  profile->add_option("--samples", pa.samples, "samples per interval");
  profile->add_option("--seed", pa.seed, "profile sampling seed");
  profile->add_option("--workers", pa.workers, "worker threads");
  profile->add_option("--out", pa.out, "output prefix (.json and .csv)")->required();

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "generate a supervised dataset");
  gen->add_option("--opset", ga.opset, opset_help)->required();
  gen->add_option("--dist", ga.dist, "interval distribution")
      ->check(CLI::IsMember({"even", "beta", "flat"}));
  gen->add_option("--count", ga.count, "number of pairs")->required();
  gen->add_option("--seed", ga.seed, "dataset seed");
  gen->add_option("--noise-sigma", ga.noise_sigma, "multiplicative noise sigma (0 = none)");
  gen->add_option("--noise-seed", ga.noise_seed, "noise stream seed");
  gen->add_option("--intervals", ga.intervals, "number of coldness intervals");
  gen->add_option("--profile-samples", ga.profile_samples, "roughness samples per interval");
  gen->add_option("--profile-seed", ga.profile_seed, "roughness profile seed");
  gen->add_option("--workers", ga.workers, "worker threads");
  gen->add_option("--out", ga.out, "dataset output path")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train an estimator network");
  train->add_option("--data", ta.data, "training dataset (qipdata-v1)")->required();
  train->add_option("--out", ta.out, "model output path")->required();
  train->add_option("--sizes", ta.sizes, "hidden layer widths, e.g. 100,100");
  train->add_option("--activation", ta.activation, "hidden activation")
      ->check(CLI::IsMember({"relu", "tanh"}));
  train->add_option("--loss", ta.loss, "training loss")
      ->check(CLI::IsMember({"mae", "mse"}));
  train->add_option("--batch", ta.batch, "mini-batch size");
  train->add_option("--epochs", ta.epochs, "total epochs (including resumed part)");
  train->add_option("--lr", ta.lr, "Adam learning rate");
  train->add_option("--shuffle-seed", ta.shuffle_seed, "epoch shuffle seed");
  train->add_option("--init-seed", ta.init_seed, "weight init seed");
  train->add_option("--holdout", ta.holdout, "holdout fraction from the end of the data");
  train->add_option("--loss-csv", ta.loss_csv, "loss history CSV (default <out>.loss.csv)");
  train->add_option("--checkpoint", ta.checkpoint, "checkpoint path (default <out>.ckpt.json)");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "checkpoint every N epochs (0 = off)");
  train->add_option("--resume", ta.resume, "resume from this checkpoint file");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "fidelity report on fresh test data");
  eval->add_option("--model", ea.model, "trained model (qipmlp-v1)")->required();
  eval->add_option("--opset", ea.opset, opset_help)->required();
  eval->add_option("--count", ea.count, "number of test pairs");
  eval->add_option("--seed", ea.seed, "test-set seed");
  auto* train_seed_opt =
      eval->add_option("--train-seed", ea.train_seed,
                       "seed the training data used, checked against --seed");
  eval->add_flag("--allow-same-seed", ea.allow_same_seed,
                 "skip the train/test seed distinctness check");
  eval->add_option("--intervals", ea.intervals, "coldness intervals covered by the test set");
  eval->add_option("--per-interval", ea.per_interval, "boxplot samples per interval");
  eval->add_option("--group", ea.group, "intervals per boxplot group");
  eval->add_option("--out", ea.out, "output prefix (.json, .csv, .intervals.csv)")->required();

  EstimateArgs sa;
  auto* estimate = app.add_subcommand("estimate", "predict parameters for measurements");
  estimate->add_option("--model", sa.model, "trained model (qipmlp-v1)")->required();
  estimate->add_option("--opset", sa.opset, opset_help)->required();
  auto* c_opt = estimate->add_option("--c", sa.c, "one measurement vector v1,v2,...");
  auto* csv_opt = estimate->add_option("--csv", sa.csv, "batch input CSV (c columns first)");
  c_opt->excludes(csv_opt);
  estimate->add_option("--metric", sa.metric, "consistency residual metric")
      ->check(CLI::IsMember({"l2", "linf"}));
  estimate->add_option("--out", sa.out,
                       "state JSON (single) or results CSV (batch, required)");
  estimate->add_flag("--skip-residual", sa.skip_residual,
                     "batch mode: write predictions only");

  BaselineArgs ba;
  auto* baseline = app.add_subcommand("baseline", "compare solvers on shared inputs");
  baseline->add_option("--opset", ba.opset, opset_help)->required();
  baseline->add_option("--model", ba.model, "optional network to include");
  baseline->add_option("--count", ba.count, "number of test points");
  baseline->add_option("--seed", ba.seed, "test-set seed");
  baseline->add_option("--intervals", ba.intervals, "coldness range (0, intervals]");
  baseline->add_flag("--no-iterative", ba.no_iterative, "skip the iterative solver");
  baseline->add_flag("--no-qbm", ba.no_qbm, "skip the QBM solver");
  baseline->add_option("--error-bound", ba.error_bound, "iterative residual target");
  baseline->add_option("--max-sweeps", ba.max_sweeps, "iterative sweep cap");
  baseline->add_option("--damping", ba.damping, "iterative update damping");
  baseline->add_option("--qbm-lr", ba.qbm_lr, "QBM learning rate");
  baseline->add_option("--qbm-iterations", ba.qbm_iterations, "QBM iterations");
  baseline->add_option("--fd-step", ba.fd_step, "QBM finite-difference step");
  baseline->add_option("--out", ba.out, "comparison JSON path")->required();

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "score estimates for measured data");
  ingest->add_option("--opset", ia.opset, opset_help)->required();
  ingest->add_option("--model", ia.model, "trained model (qipmlp-v1)")->required();
  ingest->add_option("--csv", ia.csv,
                     "measurement CSV: c columns, optionally followed by "
                     "ground-truth parameter columns")
      ->required();
  ingest->add_option("--reference", ia.reference,
                     "fidelity reference: auto | ground_state | mee | explicit | none");
  ingest->add_option("--reference-state", ia.reference_state,
                     "qipstate-v1 file for --reference explicit");
  ingest->add_option("--metric", ia.metric, "consistency residual metric")
      ->check(CLI::IsMember({"l2", "linf"}));
  ingest->add_option("--out", ia.out,
                     "output prefix (.rows.csv, .relerr.csv, .report.json)")
      ->required();

  // Let root options (notably --config) appear after the subcommand name.
  for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*profile) run_profile(app, pa);
    if (*gen) run_gen(app, ga);
    if (*train) run_train(app, ta);
    if (*eval) run_eval(app, ea, train_seed_opt->count() > 0);
    if (*estimate) {
      if (sa.c.empty() && sa.csv.empty())
        throw qip::ContractError("estimate: pass --c or --csv");
      run_estimate(app, sa);
    }
    if (*baseline) run_baseline(app, ba);
    if (*ingest) run_ingest(app, ia);
  } catch (const qip::IoError& e) {
    std::cerr << "qip: io error: " << e.what() << "\n";
    return 3;
  } catch (const qip::ContractError& e) {
    std::cerr << "qip: " << e.what() << "\n";
    return 1;
  } catch (const qip::Error& e) {
    std::cerr << "qip: numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qip: error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
