#pragma once

#include <complex>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "qip/errors.hpp"

namespace qip {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

/// A vector of expectation values, ordered to match an operator set.
using MeasurementVector = Eigen::VectorXd;

/// Default numeric tolerances. Every check takes its tolerance as a defaulted
/// argument, so call sites can tighten or relax individually. Defaults are
/// chosen so the 64-dimensional cases pass at double precision.
namespace tol {
inline constexpr double kHermitian = 1e-12;
inline constexpr double kTrace = 1e-10;
inline constexpr double kEigenvalueFloor = -1e-10;
inline constexpr double kImagTrace = 1e-10;
inline constexpr double kGroundStateGap = 1e-9;
}  // namespace tol

/// Dense self-adjoint operator. Construction verifies hermiticity
/// entrywise, so a HermitianOperator value is Hermitian by invariant.
class HermitianOperator {
 public:
  explicit HermitianOperator(ComplexMatrix m,
                             double herm_tol = tol::kHermitian);

  const ComplexMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

 private:
  ComplexMatrix m_;
};

/// Hermitian, positive semidefinite, unit-trace matrix.
///
/// External matrices enter through FromMatrix, which checks all three
/// invariants (PSD via a full eigendecomposition). Internal producers
/// (gibbs_state, ground_state) construct states that satisfy the invariants
/// by the algebra of their construction and skip the eigenvalue re-check.
class DensityMatrix {
 public:
  static DensityMatrix FromMatrix(ComplexMatrix m,
                                  double herm_tol = tol::kHermitian,
                                  double trace_tol = tol::kTrace,
                                  double eig_floor = tol::kEigenvalueFloor);

  const ComplexMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

 private:
  struct Trusted {};
  DensityMatrix(Trusted, ComplexMatrix m) : m_(std::move(m)) {}

  friend DensityMatrix gibbs_state(const HermitianOperator&);
  friend DensityMatrix ground_state(std::span<const HermitianOperator>,
                                    const RealVector&, double);

  ComplexMatrix m_;
};

/// Real thermal parameter vector theta = beta * a, with beta = ||theta||_2
/// (the coldness) and a = theta/||theta|| (the unit direction).
class ThermalParams {
 public:
  ThermalParams() = default;
  explicit ThermalParams(RealVector theta);

  const RealVector& theta() const { return theta_; }
  Eigen::Index size() const { return theta_.size(); }
  double beta() const { return theta_.norm(); }
  /// theta/||theta||; throws ContractError when beta == 0.
  RealVector direction() const;

 private:
  RealVector theta_;
};

/// Additive i.i.d. Gaussian noise on measured expectations, with its own
/// stream seed so perturbed vectors are reproducible.
struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Full spectral decomposition of a Hermitian operator. Eigenvalues are real
/// and ascending; column k of vectors pairs with values[k].
struct EigenSystem {
  RealVector values;
  ComplexMatrix vectors;
};

/// Spectral decomposition, deterministic for identical input.
EigenSystem herm_eig(const HermitianOperator& h);

/// Sum_i coeffs[i] * ops[i]. Exactly Hermitian for Hermitian inputs.
HermitianOperator combine(std::span<const HermitianOperator> ops,
                          const RealVector& coeffs);

/// exp(H) computed spectrally: eigendecompose, exponentiate eigenvalues,
/// reassemble. Exact for Hermitian input up to rounding.
ComplexMatrix expm_hermitian(const HermitianOperator& h);

/// exp(H)/tr[exp(H)], with the largest eigenvalue subtracted before
/// exponentiation so the computation cannot overflow; the result is
/// invariant under that shift.
DensityMatrix gibbs_state(const HermitianOperator& h);

/// Thermal state of the pseudo-Hamiltonian H = Sum_i theta[i] * ops[i].
DensityMatrix thermal_state(std::span<const HermitianOperator> ops,
                            const ThermalParams& theta);

/// Re(tr(rho * f)). The imaginary part of the trace must stay below
/// imag_tol in magnitude (it is discarded); anything larger signals a
/// non-Hermitian input and raises NumericalError.
double expectation(const DensityMatrix& rho, const HermitianOperator& f,
                   double imag_tol = tol::kImagTrace);

/// Expectation vector c with c[i] = tr(rho * ops[i]) + eps[i]; eps is 0
/// without a NoiseSpec, otherwise i.i.d. N(0, sigma^2) from the NoiseSpec seed.
MeasurementVector measure(const DensityMatrix& rho,
                          std::span<const HermitianOperator> ops,
                          const std::optional<NoiseSpec>& noise = std::nullopt);

/// Uhlmann fidelity tr sqrt(sqrt(rho1) rho2 sqrt(rho1)), in [0, 1].
/// Intermediate eigenvalues in [eig_floor, 0) are clamped to 0; below
/// eig_floor raises NumericalError.
double fidelity(const DensityMatrix& rho1, const DensityMatrix& rho2,
                double eig_floor = tol::kEigenvalueFloor);

/// 1 minus the largest eigenvalue: 0 for pure states, (d-1)/d for the
/// maximally mixed state.
double purity_gap(const DensityMatrix& rho);

/// Rank-1 projector onto the top eigenvector of Sum_i a[i] * ops[i]
/// (the ground state of -Sum_i a[i] * ops[i]); the beta -> infinity limit of
/// thermal_state. Requires the top eigenvalue to be non-degenerate with gap
/// above gap_tol, otherwise raises UgsViolationError.
DensityMatrix ground_state(std::span<const HermitianOperator> ops,
                           const RealVector& a,
                           double gap_tol = tol::kGroundStateGap);

}  // namespace qip
