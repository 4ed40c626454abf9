#include "qip/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace qip {

namespace {

using json = nlohmann::json;

void check_input(const OperatorSet& f_set, const MeasurementVector& c,
                 const char* who) {
  if (static_cast<std::size_t>(c.size()) != f_set.size())
    throw ContractError(std::string(who) + ": expected " +
                        std::to_string(f_set.size()) + " expectations, got " +
                        std::to_string(c.size()));
  if (!c.allFinite())
    throw ContractError(std::string(who) + ": non-finite expectation value");
}

double l1_residual(const MeasurementVector& c, const DensityMatrix& tau,
                   const OperatorSet& f_set) {
  double r = 0.0;
  for (std::size_t i = 0; i < f_set.size(); ++i)
    r += std::abs(c[static_cast<Eigen::Index>(i)] -
                  expectation(tau, f_set.ops()[i]));
  return r;
}

// Identity multiples that make every operator positive definite:
// floor(-f_min) + 1 when the smallest eigenvalue f_min is negative, else 0.
// An f_min within 1e-9 of an integer is snapped to it first; otherwise
// rounding noise on exact integer spectra (Paulis and friends) would flip
// the floor and change the shift by 1.
RealVector qbm_shifts(const OperatorSet& f_set) {
  RealVector s(static_cast<Eigen::Index>(f_set.size()));
  for (std::size_t i = 0; i < f_set.size(); ++i) {
    double f_min = herm_eig(f_set.ops()[i]).values[0];
    const double snapped = std::round(f_min);
    if (std::abs(f_min - snapped) <= 1e-9) f_min = snapped;
    s[static_cast<Eigen::Index>(i)] =
        f_min < 0.0 ? std::floor(-f_min) + 1.0 : 0.0;
  }
  return s;
}

// Normalized positive distribution from shifted expectations.
RealVector normalized_target(const MeasurementVector& c, const RealVector& s,
                             const char* who) {
  RealVector p = c + s;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] <= 0.0)
      throw ContractError(std::string(who) + ": shifted expectation " +
                          std::to_string(i) + " is not positive (" +
                          std::to_string(p[i]) + ")");
  return p / p.sum();
}

// Cross entropy of the normalized shifted expectations of tau(a) against the
// fixed target distribution p.
double cross_entropy_at(const OperatorSet& f_set, const RealVector& p,
                        const RealVector& s, const RealVector& a) {
  const DensityMatrix tau = gibbs_state(combine(f_set, a));
  RealVector q(p.size());
  for (Eigen::Index i = 0; i < q.size(); ++i)
    q[i] = expectation(tau, f_set.ops()[static_cast<std::size_t>(i)]) + s[i];
  const double total = q.sum();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0 || total <= 0.0)
      throw NumericalError(
          "qbm_cross_entropy: shifted expectation lost positivity");
    loss -= p[i] * std::log(q[i] / total);
  }
  return loss;
}

json stats_block(const std::vector<double>& sorted) {
  if (sorted.empty()) return nullptr;
  double sum = 0.0;
  for (double x : sorted) sum += x;
  const std::size_t n = sorted.size();
  const double median = n % 2 == 1
                            ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return json{{"mean", sum / static_cast<double>(n)},
              {"median", median},
              {"min", sorted.front()},
              {"max", sorted.back()}};
}

json fidelity_block(const std::optional<FidelityReport>& r) {
  if (!r) return nullptr;
  return json{{"mean", r->mean}, {"median", r->median}, {"std", r->std_dev},
              {"q1", r->q1},     {"q3", r->q3},
              {"outliers", r->outliers}};
}

}  // namespace

IterativeResult iterative_mee(const OperatorSet& f_set,
                              const MeasurementVector& c,
                              const IterativeConfig& cfg) {
  check_input(f_set, c, "iterative_mee");
  if (cfg.error_bound <= 0.0)
    throw ContractError("iterative_mee: error_bound must be positive");
  if (cfg.max_sweeps < 1)
    throw ContractError("iterative_mee: max_sweeps must be >= 1");
  if (cfg.damping <= 0.0)
    throw ContractError("iterative_mee: damping must be positive");

  const auto m = static_cast<Eigen::Index>(f_set.size());
  const Eigen::Index d = f_set.dim();
  std::vector<HermitianOperator> squares;
  squares.reserve(f_set.size());
  for (const HermitianOperator& f : f_set.ops())
    squares.emplace_back(f.matrix() * f.matrix());

  ComplexMatrix h_mat = ComplexMatrix::Zero(d, d);
  DensityMatrix tau = gibbs_state(HermitianOperator(h_mat));
  std::vector<double> history{l1_residual(c, tau, f_set)};
  std::vector<std::string> warnings;

  if (history.back() <= cfg.error_bound)
    return {HermitianOperator(std::move(h_mat)), std::move(tau),
            std::move(history), std::move(warnings)};

  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& f = f_set.ops()[static_cast<std::size_t>(i)];
      const double t1 = expectation(tau, f);
      const double t2 =
          expectation(tau, squares[static_cast<std::size_t>(i)]);
      const double variance = t2 - t1 * t1;
      if (std::abs(variance) < 1e-14) {
        warnings.push_back("sweep " + std::to_string(sweep) + ": observable " +
                           std::to_string(i) +
                           " is deterministic under tau, skipped");
        continue;
      }
      const double eps = cfg.damping * (c[i] - t1) / variance;
      h_mat += eps * f.matrix();
      tau = gibbs_state(HermitianOperator(h_mat));
    }
    history.push_back(l1_residual(c, tau, f_set));
    if (history.back() <= cfg.error_bound)
      return {HermitianOperator(std::move(h_mat)), std::move(tau),
              std::move(history), std::move(warnings)};
  }
  throw NonConvergenceError(
      "iterative_mee: residual " + std::to_string(history.back()) +
          " above error bound " + std::to_string(cfg.error_bound) + " after " +
          std::to_string(cfg.max_sweeps) + " sweeps",
      history.back());
}

double qbm_cross_entropy(const OperatorSet& f_set, const MeasurementVector& c,
                         const RealVector& a) {
  check_input(f_set, c, "qbm_cross_entropy");
  if (a.size() != c.size())
    throw ContractError("qbm_cross_entropy: parameter length mismatch");
  const RealVector s = qbm_shifts(f_set);
  const RealVector p = normalized_target(c, s, "qbm_cross_entropy");
  return cross_entropy_at(f_set, p, s, a);
}

QbmResult qbm_mee(const OperatorSet& f_set, const MeasurementVector& c,
                  const QbmConfig& cfg) {
  check_input(f_set, c, "qbm_mee");
  if (cfg.learning_rate <= 0.0 || cfg.iterations < 1 || cfg.fd_step <= 0.0)
    throw ContractError("qbm_mee: config fields must be positive");

  const auto m = static_cast<Eigen::Index>(f_set.size());
  const RealVector s = qbm_shifts(f_set);
  const RealVector p = normalized_target(c, s, "qbm_mee");

  RealVector a = RealVector::Zero(m);
  std::vector<double> history{cross_entropy_at(f_set, p, s, a)};
  for (int it = 1; it <= cfg.iterations; ++it) {
    RealVector grad(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      RealVector plus = a, minus = a;
      plus[i] += cfg.fd_step;
      minus[i] -= cfg.fd_step;
      grad[i] = (cross_entropy_at(f_set, p, s, plus) -
                 cross_entropy_at(f_set, p, s, minus)) /
                (2.0 * cfg.fd_step);
    }
    a -= cfg.learning_rate * grad;
    const double loss = cross_entropy_at(f_set, p, s, a);
    if (!std::isfinite(loss))
      throw NumericalError("qbm_mee: non-finite loss at iteration " +
                           std::to_string(it));
    history.push_back(loss);
  }

  int increases = 0;
  for (std::size_t k = 1; k < history.size(); ++k)
    if (history[k] > history[k - 1]) ++increases;
  std::vector<std::string> warnings;
  if (increases * 10 > cfg.iterations)
    warnings.push_back("loss increased on " + std::to_string(increases) +
                       " of " + std::to_string(cfg.iterations) + " steps");

  DensityMatrix tau = gibbs_state(combine(f_set, a));
  return {std::move(tau), std::move(a), std::move(history), increases,
          std::move(warnings)};
}

Comparison compare_solvers(const OperatorSet& f_set,
                           const std::vector<TrainingPair>& test_pairs,
                           const Mlp* net, const CompareConfig& cfg) {
  if (test_pairs.empty())
    throw ContractError("compare_solvers: empty test set");
  if (cfg.include_network && net == nullptr)
    throw ContractError("compare_solvers: network solver enabled without a "
                        "network");
  using Clock = std::chrono::steady_clock;
  const auto seconds_since = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  std::vector<DensityMatrix> truths;
  truths.reserve(test_pairs.size());
  for (const TrainingPair& pair : test_pairs)
    truths.push_back(thermal_state(f_set, pair.theta));

  Comparison out;

  if (cfg.include_network) {
    SolverReport rep;
    rep.solver = "network";
    rep.points = test_pairs.size();
    std::vector<RealVector> thetas(test_pairs.size());
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < test_pairs.size(); ++k)
      thetas[k] = forward(*net, test_pairs[k].c);
    rep.wall_seconds = seconds_since(t0);
    std::vector<double> fids;
    for (std::size_t k = 0; k < test_pairs.size(); ++k) {
      const DensityMatrix est =
          thermal_state(f_set, ThermalParams(thetas[k]));
      fids.push_back(fidelity(est, truths[k]));
      rep.residuals.push_back(l1_residual(test_pairs[k].c, est, f_set));
    }
    rep.fidelity = make_fidelity_report(std::move(fids));
    std::sort(rep.residuals.begin(), rep.residuals.end());
    out.solvers.push_back(std::move(rep));
  }

  if (cfg.include_iterative) {
    SolverReport rep;
    rep.solver = "iterative";
    rep.points = test_pairs.size();
    std::vector<double> fids;
    for (std::size_t k = 0; k < test_pairs.size(); ++k) {
      const auto t0 = Clock::now();
      try {
        IterativeResult r =
            iterative_mee(f_set, test_pairs[k].c, cfg.iterative);
        rep.wall_seconds += seconds_since(t0);
        fids.push_back(fidelity(r.tau, truths[k]));
        rep.residuals.push_back(r.residual_history.back());
      } catch (const NonConvergenceError&) {
        rep.wall_seconds += seconds_since(t0);
        ++rep.failures;
      }
    }
    if (!fids.empty()) rep.fidelity = make_fidelity_report(std::move(fids));
    std::sort(rep.residuals.begin(), rep.residuals.end());
    out.solvers.push_back(std::move(rep));
  }

  if (cfg.include_qbm) {
    SolverReport rep;
    rep.solver = "qbm";
    rep.points = test_pairs.size();
    std::vector<double> fids;
    for (std::size_t k = 0; k < test_pairs.size(); ++k) {
      const auto t0 = Clock::now();
      QbmResult r = qbm_mee(f_set, test_pairs[k].c, cfg.qbm);
      rep.wall_seconds += seconds_since(t0);
      fids.push_back(fidelity(r.tau, truths[k]));
      rep.residuals.push_back(l1_residual(test_pairs[k].c, r.tau, f_set));
    }
    rep.fidelity = make_fidelity_report(std::move(fids));
    std::sort(rep.residuals.begin(), rep.residuals.end());
    out.solvers.push_back(std::move(rep));
  }

  return out;
}

void save_comparison(const Comparison& comparison,
                     const std::filesystem::path& path) {
  json doc;
  doc["solvers"] = json::array();
  for (const SolverReport& rep : comparison.solvers) {
    json block;
    block["solver"] = rep.solver;
    block["points"] = rep.points;
    block["failures"] = rep.failures;
    block["wall_clock_seconds"] = rep.wall_seconds;
    block["seconds_per_point"] =
        rep.points > 0 ? rep.wall_seconds / static_cast<double>(rep.points)
                       : 0.0;
    block["fidelity"] = fidelity_block(rep.fidelity);
    block["residuals"] = stats_block(rep.residuals);
    doc["solvers"].push_back(std::move(block));
  }
  std::ofstream out(path);
  if (!out)
    throw IoError("save_comparison: cannot open " + path.string());
  out << doc.dump(1) << '\n';
  if (!out)
    throw IoError("save_comparison: write failed for " + path.string());
}

}  // namespace qip
