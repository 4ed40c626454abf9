#include "qip/qcore.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "qip/rng.hpp"

namespace qip {

namespace {

void check_hermitian(const ComplexMatrix& m, double tol, const char* what) {
  if (m.rows() != m.cols())
    throw ContractError(std::string(what) + ": matrix is " +
                        std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected square");
  const double dev = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (!(dev <= tol))
    throw ContractError(std::string(what) +
                        ": not Hermitian, max |M - M^H| entry = " +
                        std::to_string(dev));
}

}  // namespace

HermitianOperator::HermitianOperator(ComplexMatrix m, double herm_tol)
    : m_(std::move(m)) {
  check_hermitian(m_, herm_tol, "HermitianOperator");
}

DensityMatrix DensityMatrix::FromMatrix(ComplexMatrix m, double herm_tol,
                                        double trace_tol, double eig_floor) {
  check_hermitian(m, herm_tol, "DensityMatrix");
  const Complex tr = m.trace();
  if (!(std::abs(tr - Complex(1.0, 0.0)) <= trace_tol))
    throw ContractError("DensityMatrix: trace = (" +
                        std::to_string(tr.real()) + ", " +
                        std::to_string(tr.imag()) + "), expected 1");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(
      m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("DensityMatrix: eigenvalue check did not converge");
  const double min_eig = solver.eigenvalues().minCoeff();
  if (!(min_eig >= eig_floor))
    throw ContractError("DensityMatrix: negative eigenvalue " +
                        std::to_string(min_eig));
  return DensityMatrix(Trusted{}, std::move(m));
}

ThermalParams::ThermalParams(RealVector theta) : theta_(std::move(theta)) {
  if (theta_.size() == 0)
    throw ContractError("ThermalParams: empty parameter vector");
}

RealVector ThermalParams::direction() const {
  const double b = beta();
  if (!(b > 0.0))
    throw ContractError("ThermalParams: direction undefined at beta = 0");
  return theta_ / b;
}

EigenSystem herm_eig(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.matrix());
  if (solver.info() != Eigen::Success)
    throw NumericalError("herm_eig: eigensolver did not converge for dim " +
                         std::to_string(h.dim()));
  return EigenSystem{solver.eigenvalues(), solver.eigenvectors()};
}

HermitianOperator combine(std::span<const HermitianOperator> ops,
                          const RealVector& coeffs) {
  if (ops.empty()) throw ContractError("combine: empty operator list");
  if (coeffs.size() != static_cast<Eigen::Index>(ops.size()))
    throw ContractError("combine: " + std::to_string(ops.size()) +
                        " operators but " + std::to_string(coeffs.size()) +
                        " coefficients");
  const Eigen::Index d = ops[0].dim();
  ComplexMatrix sum = ComplexMatrix::Zero(d, d);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].dim() != d)
      throw ContractError("combine: operator " + std::to_string(i) +
                          " has dim " + std::to_string(ops[i].dim()) +
                          ", expected " + std::to_string(d));
    sum.noalias() += Complex(coeffs[static_cast<Eigen::Index>(i)], 0.0) *
                     ops[i].matrix();
  }
  // Real combinations of Hermitian matrices are Hermitian exactly, but
  // floating-point sums can pick up asymmetry at the last ulp; symmetrize so
  // the constructor's invariant holds regardless of summation order.
  sum = ((sum + sum.adjoint()) / 2.0).eval();
  return HermitianOperator(std::move(sum));
}

ComplexMatrix expm_hermitian(const HermitianOperator& h) {
  const EigenSystem es = herm_eig(h);
  return es.vectors * es.values.array().exp().matrix().asDiagonal() *
         es.vectors.adjoint();
}

DensityMatrix gibbs_state(const HermitianOperator& h) {
  const EigenSystem es = herm_eig(h);
  // Shift by the top eigenvalue: exp never sees a positive argument, so the
  // weights stay in (0, 1] even at coldness 100, and the normalized state is
  // unchanged by the shift.
  const double shift = es.values.maxCoeff();
  RealVector w = (es.values.array() - shift).exp();
  w /= w.sum();
  ComplexMatrix rho = es.vectors * w.asDiagonal() * es.vectors.adjoint();
  // Symmetrize and renormalize away rounding from the reassembly products.
  rho = ((rho + rho.adjoint()) / 2.0).eval();
  rho /= rho.trace().real();
  return DensityMatrix(DensityMatrix::Trusted{}, std::move(rho));
}

DensityMatrix thermal_state(std::span<const HermitianOperator> ops,
                            const ThermalParams& theta) {
  return gibbs_state(combine(ops, theta.theta()));
}

double expectation(const DensityMatrix& rho, const HermitianOperator& f,
                   double imag_tol) {
  if (rho.dim() != f.dim())
    throw ContractError("expectation: state dim " + std::to_string(rho.dim()) +
                        " vs operator dim " + std::to_string(f.dim()));
  const Complex tr = (rho.matrix() * f.matrix()).trace();
  if (!(std::abs(tr.imag()) <= imag_tol))
    throw NumericalError("expectation: imaginary trace part " +
                         std::to_string(tr.imag()) + " exceeds tolerance");
  return tr.real();
}

MeasurementVector measure(const DensityMatrix& rho,
                          std::span<const HermitianOperator> ops,
                          const std::optional<NoiseSpec>& noise) {
  MeasurementVector c(static_cast<Eigen::Index>(ops.size()));
  for (std::size_t i = 0; i < ops.size(); ++i)
    c[static_cast<Eigen::Index>(i)] = expectation(rho, ops[i]);
  if (noise && noise->sigma != 0.0) {
    Rng rng(noise->seed);
    for (Eigen::Index i = 0; i < c.size(); ++i)
      c[i] += noise->sigma * rng.normal();
  }
  return c;
}

namespace {

// Eigenvalue-clamped principal square root shared by fidelity's two stages.
ComplexMatrix psd_sqrt(const ComplexMatrix& m, double eig_floor,
                       const char* stage) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(m);
  if (solver.info() != Eigen::Success)
    throw NumericalError(std::string("fidelity: eigensolver failed in ") +
                         stage);
  RealVector vals = solver.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals[i] < eig_floor)
      throw NumericalError(std::string("fidelity: eigenvalue ") +
                           std::to_string(vals[i]) + " below floor in " +
                           stage);
    if (vals[i] < 0.0) vals[i] = 0.0;
  }
  return solver.eigenvectors() * vals.cwiseSqrt().asDiagonal() *
         solver.eigenvectors().adjoint();
}

}  // namespace

double fidelity(const DensityMatrix& rho1, const DensityMatrix& rho2,
                double eig_floor) {
  if (rho1.dim() != rho2.dim())
    throw ContractError("fidelity: dims " + std::to_string(rho1.dim()) +
                        " vs " + std::to_string(rho2.dim()));
  const ComplexMatrix r1 = psd_sqrt(rho1.matrix(), eig_floor, "sqrt(rho1)");
  const ComplexMatrix r2 = psd_sqrt(rho2.matrix(), eig_floor, "sqrt(rho2)");
  // tr sqrt(sqrt(rho1) rho2 sqrt(rho1)) equals the nuclear norm of
  // sqrt(rho2) sqrt(rho1). Summing singular values directly sidesteps the
  // Gram-matrix squaring that would turn 1e-16 rounding noise in the inner
  // product into 1e-8 spurious sqrt-eigenvalue contributions near pure
  // states.
  Eigen::JacobiSVD<ComplexMatrix> svd(r2 * r1);
  const double f = svd.singularValues().sum();
  if (f > 1.0 + 1e-10)
    throw NumericalError("fidelity: value " + std::to_string(f) +
                         " exceeds 1 beyond tolerance");
  return std::min(std::max(f, 0.0), 1.0);
}

double purity_gap(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(rho.matrix(),
                                                      Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("purity_gap: eigensolver did not converge");
  return 1.0 - solver.eigenvalues().maxCoeff();
}

DensityMatrix ground_state(std::span<const HermitianOperator> ops,
                           const RealVector& a, double gap_tol) {
  const EigenSystem es = herm_eig(combine(ops, a));
  const Eigen::Index d = es.values.size();
  if (d >= 2) {
    const double gap = es.values[d - 1] - es.values[d - 2];
    if (!(gap > gap_tol))
      throw UgsViolationError(
          "ground_state: top eigenvalue degenerate within gap " +
          std::to_string(gap));
  }
  const Eigen::VectorXcd v = es.vectors.col(d - 1);
  ComplexMatrix rho = v * v.adjoint();
  rho = ((rho + rho.adjoint()) / 2.0).eval();
  rho /= rho.trace().real();
  return DensityMatrix(DensityMatrix::Trusted{}, std::move(rho));
}

}  // namespace qip
