#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "qip/opsets.hpp"
#include "qip/qcore.hpp"
#include "qip/rng.hpp"

namespace qip {

/// Discrete distribution over the coldness intervals (i, i+1], i = 0..N-1.
class BetaDistribution {
 public:
  /// Weights must be nonnegative and sum to 1 within 1e-12 (the factory
  /// functions below normalize for you).
  explicit BetaDistribution(RealVector weights);

  Eigen::Index n_intervals() const { return weights_.size(); }
  const RealVector& weights() const { return weights_; }

  /// Draws an interval index proportionally to the weights. Zero-weight
  /// intervals are never selected.
  Eigen::Index sample_interval(Rng& rng) const;

 private:
  RealVector weights_;
};

/// One supervised example: measured expectations and the generating
/// parameters.
struct TrainingPair {
  MeasurementVector c;
  ThermalParams theta;
};

/// Header of a dataset file; everything needed to interpret the pairs.
struct DatasetMeta {
  Eigen::Index m = 0;
  Eigen::Index dim = 0;
  std::string opset_label;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<TrainingPair> pairs;
};

/// Mean purity gap per coldness interval: lambda_bar[i] averages
/// purity_gap(thermal_state(f_set, beta * a)) over `samples_per_interval`
/// draws with beta uniform in (i, i+1] and a a normalized standard-normal
/// direction. Sample (i, j) uses its own counter-based stream, so the
/// profile is reproducible and worker-count independent.
RealVector roughness_profile(const OperatorSet& f_set,
                             Eigen::Index n_intervals,
                             Eigen::Index samples_per_interval,
                             std::uint64_t seed, int workers = 1);

/// Uniform weights 1/N.
BetaDistribution distribution_even(Eigen::Index n);

/// Weights proportional to the roughness profile.
BetaDistribution distribution_beta(const RealVector& lambda_bar);

/// Flattened roughness weights: (1) the first min(10, N) elements below
/// their own mean are raised to it; (2) elements below the global mean of
/// the updated vector are raised to that mean; then normalize.
BetaDistribution distribution_flat(const RealVector& lambda_bar);

/// One parameter draw: interval ~ dist, beta uniform in the interval,
/// direction a standard-normal m-vector normalized to unit length.
/// Returns theta = beta * a.
ThermalParams sample_params(const BetaDistribution& dist, Eigen::Index m,
                            Rng& rng);

/// Per-interval pair counts totalling `count`: floor(w_i * count) plus a
/// largest-remainder correction (ties resolved toward lower indices).
std::vector<std::size_t> interval_quotas(const RealVector& weights,
                                         std::size_t count);

/// Supervised dataset of `count` pairs laid out interval-major according to
/// interval_quotas(dist.weights(), count). Pair p draws beta and a from the
/// stream derive_seed(seed, p); with noise, pair p perturbs its
/// measurements using stream derive_seed(noise.seed, p, 1). Output is
/// byte-identical for a given seed regardless of `workers`.
std::vector<TrainingPair> generate_dataset(
    const OperatorSet& f_set, const BetaDistribution& dist, std::size_t count,
    const std::optional<NoiseSpec>& noise, std::uint64_t seed,
    int workers = 1);

/// JSON Lines persistence ("qipdata-v1"): one header line with the meta
/// fields, then one {"c":[...],"theta":[...]} line per pair, serialized at
/// full round-trip precision.
void save_dataset(const std::vector<TrainingPair>& pairs,
                  const DatasetMeta& meta, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace qip
