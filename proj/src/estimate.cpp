#include "qip/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

namespace qip {

namespace {

using json = nlohmann::json;

// Type-7 quantile (linear interpolation between order statistics) of an
// ascending-sorted vector.
double quantile_sorted(const std::vector<double>& x, double p) {
  const std::size_t n = x.size();
  if (n == 1) return x[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, n - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace

double vector_distance(const RealVector& a, const RealVector& b,
                       Metric metric) {
  if (a.size() != b.size())
    throw ContractError("vector_distance: length mismatch (" +
                        std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  return metric == Metric::l2 ? (a - b).norm()
                              : (a - b).cwiseAbs().maxCoeff();
}

FidelityReport make_fidelity_report(std::vector<double> fidelities) {
  if (fidelities.empty())
    throw ContractError("make_fidelity_report: empty fidelity list");
  for (double f : fidelities)
    if (!std::isfinite(f))
      throw ContractError("make_fidelity_report: non-finite fidelity");
  std::sort(fidelities.begin(), fidelities.end());

  FidelityReport r;
  r.fidelities = std::move(fidelities);
  const auto n = static_cast<double>(r.fidelities.size());
  double sum = 0.0;
  for (double f : r.fidelities) sum += f;
  r.mean = sum / n;
  r.median = quantile_sorted(r.fidelities, 0.5);
  r.q1 = quantile_sorted(r.fidelities, 0.25);
  r.q3 = quantile_sorted(r.fidelities, 0.75);
  if (r.fidelities.size() > 1) {
    double ss = 0.0;
    for (double f : r.fidelities) ss += (f - r.mean) * (f - r.mean);
    r.std_dev = std::sqrt(ss / (n - 1.0));
  }
  const double iqr = r.q3 - r.q1;
  const double lo = r.q1 - 1.5 * iqr, hi = r.q3 + 1.5 * iqr;
  for (std::size_t i = 0; i < r.fidelities.size(); ++i)
    if (r.fidelities[i] < lo || r.fidelities[i] > hi) r.outliers.push_back(i);
  return r;
}

Predictor predictor_from(const Mlp& net) {
  return [&net](const MeasurementVector& c) { return forward(net, c); };
}

std::pair<ThermalParams, DensityMatrix> estimate_state(
    const Mlp& net, const OperatorSet& f_set, const MeasurementVector& c) {
  ThermalParams theta(forward(net, c));
  DensityMatrix rho = thermal_state(f_set, theta);
  return {std::move(theta), std::move(rho)};
}

ConsistencyRecord consistency_check(const Mlp& net, const OperatorSet& f_set,
                                    const MeasurementVector& c,
                                    Metric metric) {
  const auto [theta, rho] = estimate_state(net, f_set, c);
  ConsistencyRecord rec;
  rec.c = c;
  rec.c_reconstructed = measure(rho, f_set);
  rec.residual = vector_distance(rec.c, rec.c_reconstructed, metric);
  return rec;
}

FidelityReport evaluate_with(const Predictor& predict,
                             const OperatorSet& f_set,
                             const std::vector<TrainingPair>& test_pairs) {
  if (test_pairs.empty()) throw ContractError("evaluate: empty test set");
  std::vector<double> f;
  f.reserve(test_pairs.size());
  for (const TrainingPair& p : test_pairs) {
    const DensityMatrix truth = thermal_state(f_set, p.theta);
    const DensityMatrix est =
        thermal_state(f_set, ThermalParams(predict(p.c)));
    f.push_back(fidelity(est, truth));
  }
  return make_fidelity_report(std::move(f));
}

FidelityReport evaluate(const Mlp& net, const OperatorSet& f_set,
                        const std::vector<TrainingPair>& test_pairs) {
  return evaluate_with(predictor_from(net), f_set, test_pairs);
}

std::vector<TrainingPair> sample_interval_pairs(const OperatorSet& f_set,
                                                int first_interval,
                                                int n_intervals,
                                                int per_interval,
                                                std::uint64_t seed) {
  if (first_interval < 0 || n_intervals < 1 || per_interval < 1)
    throw ContractError("sample_interval_pairs: invalid range");
  const auto m = static_cast<Eigen::Index>(f_set.size());
  std::vector<TrainingPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n_intervals) *
                static_cast<std::size_t>(per_interval));
  for (int i = first_interval; i < first_interval + n_intervals; ++i)
    for (int j = 0; j < per_interval; ++j) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(j)));
      const double beta = rng.uniform_in(static_cast<double>(i),
                                         static_cast<double>(i) + 1.0);
      TrainingPair p;
      p.theta = ThermalParams(beta * rng.unit_vector(m));
      p.c = measure(thermal_state(f_set, p.theta), f_set);
      pairs.push_back(std::move(p));
    }
  return pairs;
}

std::vector<FidelityReport> interval_boxplots_with(
    const Predictor& predict, const OperatorSet& f_set, int n_intervals,
    int per_interval_count, std::uint64_t seed, int intervals_per_group) {
  if (n_intervals < 1)
    throw ContractError("interval_boxplots: n_intervals must be >= 1");
  if (per_interval_count < 1)
    throw ContractError("interval_boxplots: per_interval_count must be >= 1");
  if (intervals_per_group < 1 || n_intervals % intervals_per_group != 0)
    throw ContractError(
        "interval_boxplots: intervals_per_group must divide n_intervals");
  std::vector<FidelityReport> reports;
  reports.reserve(static_cast<std::size_t>(n_intervals / intervals_per_group));
  for (int g = 0; g < n_intervals / intervals_per_group; ++g) {
    const auto pairs =
        sample_interval_pairs(f_set, g * intervals_per_group,
                              intervals_per_group, per_interval_count, seed);
    reports.push_back(evaluate_with(predict, f_set, pairs));
  }
  return reports;
}

std::vector<FidelityReport> interval_boxplots(const Mlp& net,
                                              const OperatorSet& f_set,
                                              int n_intervals,
                                              int per_interval_count,
                                              std::uint64_t seed,
                                              int intervals_per_group) {
  return interval_boxplots_with(predictor_from(net), f_set, n_intervals,
                                per_interval_count, seed, intervals_per_group);
}

std::vector<std::optional<double>> relative_errors(
    const DensityMatrix& rho_expected, const OperatorSet& f_set,
    const MeasurementVector& c_measured) {
  const auto m = static_cast<Eigen::Index>(f_set.size());
  if (c_measured.size() != m)
    throw ContractError("relative_errors: expected " + std::to_string(m) +
                        " measured values, got " +
                        std::to_string(c_measured.size()));
  std::vector<std::optional<double>> errors;
  errors.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double expected = expectation(rho_expected, f_set.ops()[i]);
    if (std::abs(expected) <= 1e-12)
      errors.push_back(std::nullopt);
    else
      errors.push_back((c_measured[i] - expected) / expected);
  }
  return errors;
}

void save_report(const FidelityReport& report, const std::string& reference,
                 const std::filesystem::path& path) {
  json doc;
  doc["mean"] = report.mean;
  doc["median"] = report.median;
  doc["std"] = report.std_dev;
  doc["q1"] = report.q1;
  doc["q3"] = report.q3;
  doc["outliers"] = report.outliers;
  doc["fidelities"] = report.fidelities;
  doc["reference"] = reference;
  std::ofstream out(path);
  if (!out) throw IoError("save_report: cannot open " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("save_report: write failed for " + path.string());
}

void save_report_csv(const FidelityReport& report,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_report_csv: cannot open " + path.string());
  out << "fidelity\n" << std::setprecision(17);
  for (double f : report.fidelities) out << f << '\n';
  if (!out)
    throw IoError("save_report_csv: write failed for " + path.string());
}

}  // namespace qip
