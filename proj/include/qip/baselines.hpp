#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qip/estimate.hpp"
#include "qip/mlp.hpp"
#include "qip/opsets.hpp"
#include "qip/qcore.hpp"

namespace qip {

/// Settings for the iterative maximum-entropy solver.
struct IterativeConfig {
  double error_bound = 1e-10;
  int max_sweeps = 10000;
  double damping = 1.0;
};

struct IterativeResult {
  HermitianOperator h;
  DensityMatrix tau;
  /// residual_history[0] is the residual of the initial maximally mixed
  /// state; one more entry per completed sweep. The residual is
  /// sum_i |c[i] - tr(F_i tau)|.
  std::vector<double> residual_history;
  std::vector<std::string> warnings;
};

/// Iteratively builds a pseudo-Hamiltonian whose thermal state reproduces c.
/// Starting from H = 0 (tau maximally mixed), sweeps i = 1..m repeatedly:
/// eps = damping * (c[i] - tr(F_i tau)) / (tr(F_i^2 tau) - tr(F_i tau)^2),
/// H += eps * F_i, tau = e^H / tr(e^H). Stops when the residual drops to
/// error_bound. An observable whose variance under tau falls below 1e-14 is
/// skipped for that sweep with a warning. Exhausting max_sweeps raises
/// NonConvergenceError carrying the final residual; unrealizable input is
/// detectable only this way.
IterativeResult iterative_mee(const OperatorSet& f_set,
                              const MeasurementVector& c,
                              const IterativeConfig& cfg = {});

/// Settings for the cross-entropy (Boltzmann-machine style) learner.
struct QbmConfig {
  double learning_rate = 0.05;
  int iterations = 500;
  double fd_step = 1e-4;
};

struct QbmResult {
  DensityMatrix tau;
  /// Final parameters of tau = e^{sum_i a[i] F_i} / tr(...).
  RealVector a;
  /// loss_history[0] is the starting loss; one more entry per update.
  std::vector<double> loss_history;
  /// Number of steps where the loss went up (soft contract: expected rare).
  int increases = 0;
  std::vector<std::string> warnings;
};

/// Cross entropy -sum_i p[i] log p'[i] between the normalized shifted target
/// expectations p (from c) and those of the thermal state with parameters a.
/// Each operator with negative eigenvalues is shifted by
/// (floor(-f_min) + 1) * I to make both distributions positive; the shift
/// leaves the thermal family itself unchanged. Exposed so gradients can be
/// probed directly.
double qbm_cross_entropy(const OperatorSet& f_set, const MeasurementVector& c,
                         const RealVector& a);

/// Minimizes qbm_cross_entropy over a by plain gradient descent, with central
/// finite-difference gradients of step fd_step. Requires every shifted target
/// expectation c[i] + shift[i] to be strictly positive. A non-finite loss
/// aborts with NumericalError naming the iteration. Note the loss only sees
/// normalized distributions, so it constrains m - 1 degrees of freedom; with
/// a single observable it is identically zero and the optimizer cannot move.
QbmResult qbm_mee(const OperatorSet& f_set, const MeasurementVector& c,
                  const QbmConfig& cfg = {});

/// Which solvers compare_solvers runs and with what settings.
struct CompareConfig {
  IterativeConfig iterative{};
  QbmConfig qbm{};
  bool include_network = true;
  bool include_iterative = true;
  bool include_qbm = true;
};

/// One solver's results over the shared test points. wall_seconds times only
/// the solver invocations (network forward passes, iterative/qbm solves);
/// scoring happens outside the clock. Points where the iterative solver hits
/// its sweep cap count as failures and contribute no fidelity/residual.
struct SolverReport {
  std::string solver;
  std::optional<FidelityReport> fidelity;
  std::vector<double> residuals;  // sorted ascending, finished points only
  std::size_t points = 0;
  std::size_t failures = 0;
  double wall_seconds = 0.0;
};

struct Comparison {
  std::vector<SolverReport> solvers;
};

/// Feeds the identical test pairs to every enabled solver and scores each
/// estimate against the thermal state of the pair's true parameters, plus the
/// l1 residual between c and the estimate's own expectations. net may be
/// null when include_network is false.
Comparison compare_solvers(const OperatorSet& f_set,
                           const std::vector<TrainingPair>& test_pairs,
                           const Mlp* net, const CompareConfig& cfg = {});

/// JSON report: one block per solver with fidelity stats, residual stats,
/// wall_clock_seconds, seconds_per_point, points, failures.
void save_comparison(const Comparison& comparison,
                     const std::filesystem::path& path);

}  // namespace qip
