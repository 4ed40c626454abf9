#include "qip/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

namespace qip {

namespace {

using nlohmann::json;

void check_weights(const RealVector& w, const char* what) {
  if (w.size() < 1)
    throw ContractError(std::string(what) + ": need at least one interval");
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!(w[i] >= 0.0))
      throw ContractError(std::string(what) + ": negative weight at index " +
                          std::to_string(i));
}

// Splits [0, count) into near-equal chunks and runs fn(first, last) on each,
// on `workers` threads. fn must only touch disjoint output slots.
void parallel_chunks(std::size_t count, int workers,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (workers <= 1 || count < 2) {
    fn(0, count);
    return;
  }
  const std::size_t n_chunks =
      std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  std::vector<std::thread> threads;
  threads.reserve(n_chunks);
  const std::size_t base = count / n_chunks, extra = count % n_chunks;
  std::size_t first = 0;
  for (std::size_t t = 0; t < n_chunks; ++t) {
    const std::size_t len = base + (t < extra ? 1 : 0);
    threads.emplace_back(fn, first, first + len);
    first += len;
  }
  for (auto& th : threads) th.join();
}

}  // namespace

BetaDistribution::BetaDistribution(RealVector weights)
    : weights_(std::move(weights)) {
  check_weights(weights_, "BetaDistribution");
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > 1e-12)
    throw ContractError("BetaDistribution: weights sum to " +
                        std::to_string(total) + ", expected 1");
}

Eigen::Index BetaDistribution::sample_interval(Rng& rng) const {
  const double u = rng.uniform01();
  double acc = 0.0;
  Eigen::Index last_positive = -1;
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (weights_[i] <= 0.0) continue;
    last_positive = i;
    acc += weights_[i];
    if (u < acc) return i;
  }
  // Rounding can leave acc marginally below 1; the draw belongs to the last
  // interval that has any mass.
  return last_positive;
}

RealVector roughness_profile(const OperatorSet& f_set,
                             Eigen::Index n_intervals,
                             Eigen::Index samples_per_interval,
                             std::uint64_t seed, int workers) {
  if (n_intervals < 1 || samples_per_interval < 1)
    throw ContractError("roughness_profile: need n_intervals >= 1 and "
                        "samples_per_interval >= 1");
  const Eigen::Index m = static_cast<Eigen::Index>(f_set.size());
  RealVector profile = RealVector::Zero(n_intervals);
  parallel_chunks(
      static_cast<std::size_t>(n_intervals), workers,
      [&](std::size_t first, std::size_t last) {
        for (std::size_t i = first; i < last; ++i) {
          double sum = 0.0;
          for (Eigen::Index j = 0; j < samples_per_interval; ++j) {
            Rng rng(derive_seed(seed, i, static_cast<std::uint64_t>(j)));
            const double beta = rng.uniform_in(static_cast<double>(i),
                                               static_cast<double>(i) + 1.0);
            const RealVector a = rng.unit_vector(m);
            sum += purity_gap(thermal_state(f_set, ThermalParams{beta * a}));
          }
          profile[static_cast<Eigen::Index>(i)] =
              sum / static_cast<double>(samples_per_interval);
        }
      });
  return profile;
}

BetaDistribution distribution_even(Eigen::Index n) {
  if (n < 1) throw ContractError("distribution_even: need n >= 1");
  return BetaDistribution(RealVector::Constant(n, 1.0 / static_cast<double>(n)));
}

BetaDistribution distribution_beta(const RealVector& lambda_bar) {
  check_weights(lambda_bar, "distribution_beta");
  const double total = lambda_bar.sum();
  if (!(total > 0.0))
    throw ContractError("distribution_beta: all-zero roughness profile");
  return BetaDistribution(lambda_bar / total);
}

BetaDistribution distribution_flat(const RealVector& lambda_bar) {
  check_weights(lambda_bar, "distribution_flat");
  if (!(lambda_bar.sum() > 0.0))
    throw ContractError("distribution_flat: all-zero roughness profile");
  RealVector v = lambda_bar;
  const Eigen::Index ten = std::min<Eigen::Index>(10, v.size());
  const double mean_ten = v.head(ten).mean();
  for (Eigen::Index i = 0; i < ten; ++i)
    if (v[i] < mean_ten) v[i] = mean_ten;
  const double mean_all = v.mean();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] < mean_all) v[i] = mean_all;
  return BetaDistribution(v / v.sum());
}

ThermalParams sample_params(const BetaDistribution& dist, Eigen::Index m,
                            Rng& rng) {
  const Eigen::Index interval = dist.sample_interval(rng);
  const double beta = rng.uniform_in(static_cast<double>(interval),
                                     static_cast<double>(interval) + 1.0);
  return ThermalParams{beta * rng.unit_vector(m)};
}

std::vector<std::size_t> interval_quotas(const RealVector& weights,
                                         std::size_t count) {
  check_weights(weights, "interval_quotas");
  const Eigen::Index n = weights.size();
  std::vector<std::size_t> quota(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<double, Eigen::Index>> remainders;
  remainders.reserve(static_cast<std::size_t>(n));
  std::size_t assigned = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double exact = weights[i] * static_cast<double>(count);
    const double floored = std::floor(exact);
    quota[static_cast<std::size_t>(i)] = static_cast<std::size_t>(floored);
    assigned += static_cast<std::size_t>(floored);
    remainders.emplace_back(exact - floored, i);
  }
  // Hand the leftover pairs to the largest fractional parts; ties go to the
  // lower interval index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) {
                     return a.first > b.first;
                   });
  for (std::size_t k = 0; assigned < count; ++k, ++assigned)
    ++quota[static_cast<std::size_t>(remainders[k % remainders.size()].second)];
  return quota;
}

std::vector<TrainingPair> generate_dataset(
    const OperatorSet& f_set, const BetaDistribution& dist, std::size_t count,
    const std::optional<NoiseSpec>& noise, std::uint64_t seed, int workers) {
  if (count < 1) throw ContractError("generate_dataset: count must be >= 1");
  const std::vector<std::size_t> quota =
      interval_quotas(dist.weights(), count);
  // interval_of[p] for the interval-major layout.
  std::vector<Eigen::Index> interval_of;
  interval_of.reserve(count);
  for (std::size_t i = 0; i < quota.size(); ++i)
    interval_of.insert(interval_of.end(), quota[i],
                       static_cast<Eigen::Index>(i));
  const Eigen::Index m = static_cast<Eigen::Index>(f_set.size());
  std::vector<TrainingPair> pairs(count);
  parallel_chunks(count, workers, [&](std::size_t first, std::size_t last) {
    for (std::size_t p = first; p < last; ++p) {
      Rng rng(derive_seed(seed, p));
      const double lo = static_cast<double>(interval_of[p]);
      const double beta = rng.uniform_in(lo, lo + 1.0);
      ThermalParams theta{beta * rng.unit_vector(m)};
      std::optional<NoiseSpec> pair_noise;
      if (noise)
        pair_noise = NoiseSpec{noise->sigma, derive_seed(noise->seed, p, 1)};
      const DensityMatrix rho = thermal_state(f_set, theta);
      pairs[p] = TrainingPair{measure(rho, f_set, pair_noise),
                              std::move(theta)};
    }
  });
  return pairs;
}

void save_dataset(const std::vector<TrainingPair>& pairs,
                  const DatasetMeta& meta, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  json header;
  header["format"] = "qipdata-v1";
  header["m"] = meta.m;
  header["dim"] = meta.dim;
  header["opset_label"] = meta.opset_label;
  out << header.dump() << '\n';
  for (const auto& pair : pairs) {
    if (pair.c.size() != meta.m || pair.theta.size() != meta.m)
      throw ContractError("save_dataset: pair length does not match header m");
    if (!pair.c.allFinite() || !pair.theta.theta().allFinite())
      throw ContractError("save_dataset: non-finite value in pair");
    json line;
    line["c"] = std::vector<double>(pair.c.begin(), pair.c.end());
    line["theta"] = std::vector<double>(pair.theta.theta().begin(),
                                        pair.theta.theta().end());
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

RealVector to_vector(const json& arr, Eigen::Index m, std::size_t line_no,
                     const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(arr.size()) != m)
    throw IoError("expected " + std::to_string(m) + " values, found " +
                      std::to_string(arr.size()) + " in " + path.string(),
                  line_no);
  RealVector v(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    v[i] = arr[static_cast<std::size_t>(i)].get<double>();
    if (!std::isfinite(v[i]))
      throw IoError("non-finite value in " + path.string(), line_no);
  }
  return v;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw IoError("empty dataset file: " + path.string(), 1);
  Dataset ds;
  try {
    const json header = json::parse(line);
    if (header.at("format").get<std::string>() != "qipdata-v1")
      throw IoError("unsupported format in " + path.string() + ": expected "
                    "qipdata-v1, found " +
                        header.at("format").get<std::string>(),
                    1);
    ds.meta.m = header.at("m").get<Eigen::Index>();
    ds.meta.dim = header.at("dim").get<Eigen::Index>();
    ds.meta.opset_label = header.at("opset_label").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("malformed dataset header in " + path.string() + ": " +
                      e.what(),
                  1);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json entry = json::parse(line);
      TrainingPair pair;
      pair.c = to_vector(entry.at("c"), ds.meta.m, line_no, path);
      pair.theta = ThermalParams{
          to_vector(entry.at("theta"), ds.meta.m, line_no, path)};
      ds.pairs.push_back(std::move(pair));
    } catch (const json::exception& e) {
      throw IoError("malformed dataset line in " + path.string() + ": " +
                        e.what(),
                    line_no);
    }
  }
  return ds;
}

}  // namespace qip
