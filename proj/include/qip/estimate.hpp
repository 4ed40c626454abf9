#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qip/datagen.hpp"
#include "qip/mlp.hpp"
#include "qip/opsets.hpp"
#include "qip/qcore.hpp"

namespace qip {

/// Norm used when comparing measurement vectors.
enum class Metric { l2, linf };

/// Distance between two equal-length real vectors under the chosen norm.
double vector_distance(const RealVector& a, const RealVector& b, Metric metric);

/// Fidelity statistics in boxplot form. Fidelities are stored sorted
/// ascending, so the report is identical for any ordering of the input and
/// outlier indices refer to the sorted vector. Quartiles use linear
/// interpolation between order statistics; std is the sample (n-1) estimate;
/// outliers are the points strictly outside [q1 - 1.5*IQR, q3 + 1.5*IQR].
struct FidelityReport {
  std::vector<double> fidelities;
  double mean = 0.0;
  double median = 0.0;
  double std_dev = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::vector<std::size_t> outliers;
};

/// Builds a FidelityReport from raw per-point fidelities (any order).
FidelityReport make_fidelity_report(std::vector<double> fidelities);

/// One consistency probe: the input expectations, the expectations of the
/// state estimated from them, and their distance.
struct ConsistencyRecord {
  MeasurementVector c;
  MeasurementVector c_reconstructed;
  double residual = 0.0;
};

/// Any inverse map from expectation values to thermal parameters. Used to run
/// the evaluation machinery with a trained network, an exact oracle, or a
/// non-neural solver interchangeably.
using Predictor = std::function<RealVector(const MeasurementVector&)>;

/// Wraps a network as a Predictor.
Predictor predictor_from(const Mlp& net);

/// Runs the full pipeline on one measurement vector: theta' = net(c),
/// rho_est = thermal state of theta'. The result is a valid density matrix
/// for any finite network output.
std::pair<ThermalParams, DensityMatrix> estimate_state(
    const Mlp& net, const OperatorSet& f_set, const MeasurementVector& c);

/// Estimates a state from c, measures it again, and reports the distance
/// between the input and reconstructed expectations. A small residual means
/// the network's estimate is consistent with what was measured.
ConsistencyRecord consistency_check(const Mlp& net, const OperatorSet& f_set,
                                    const MeasurementVector& c,
                                    Metric metric = Metric::l2);

/// Fidelity of each estimated state against the thermal state of the pair's
/// true parameters, reduced to a FidelityReport.
FidelityReport evaluate_with(const Predictor& predict,
                             const OperatorSet& f_set,
                             const std::vector<TrainingPair>& test_pairs);
FidelityReport evaluate(const Mlp& net, const OperatorSet& f_set,
                        const std::vector<TrainingPair>& test_pairs);

/// Fresh test pairs for unit-width beta intervals [first, first + n): for
/// interval i and slot j the stream is Rng(derive_seed(seed, i, j)), drawing
/// beta uniform in (i, i+1] and then a uniform unit direction. Deterministic
/// and independent of how callers group the intervals.
std::vector<TrainingPair> sample_interval_pairs(const OperatorSet& f_set,
                                                int first_interval,
                                                int n_intervals,
                                                int per_interval,
                                                std::uint64_t seed);

/// Per-interval-group fidelity reports over freshly sampled test points,
/// beta uniform within each group. Intervals have unit width starting at 0;
/// consecutive intervals are grouped intervals_per_group at a time (which
/// must divide n_intervals), so group g covers beta in
/// (g*w, (g+1)*w] with w = intervals_per_group.
std::vector<FidelityReport> interval_boxplots_with(
    const Predictor& predict, const OperatorSet& f_set, int n_intervals,
    int per_interval_count, std::uint64_t seed, int intervals_per_group = 1);
std::vector<FidelityReport> interval_boxplots(const Mlp& net,
                                              const OperatorSet& f_set,
                                              int n_intervals,
                                              int per_interval_count,
                                              std::uint64_t seed,
                                              int intervals_per_group = 1);

/// Signed relative deviation of each measured expectation from the value the
/// expected state assigns it: (c[i] - tr(rho F_i)) / tr(rho F_i). Entries
/// whose denominator has magnitude <= 1e-12 are undefined (nullopt) instead
/// of overflowing.
std::vector<std::optional<double>> relative_errors(
    const DensityMatrix& rho_expected, const OperatorSet& f_set,
    const MeasurementVector& c_measured);

/// Writes the report as JSON with keys mean/median/std/q1/q3/outliers/
/// fidelities plus a "reference" label naming what the fidelities were
/// computed against (e.g. "mee", "ground_state").
void save_report(const FidelityReport& report, const std::string& reference,
                 const std::filesystem::path& path);

/// One fidelity per row under a "fidelity" header, for external plotting.
void save_report_csv(const FidelityReport& report,
                     const std::filesystem::path& path);

}  // namespace qip
