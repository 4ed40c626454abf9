#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qip/qcore.hpp"

namespace qip {

/// Fixed, ordered list of observables. The order is part of the wire
/// contract: measurement vectors and thermal parameters are positional.
class OperatorSet {
 public:
  OperatorSet(std::vector<HermitianOperator> ops,
              std::vector<std::string> labels);

  Eigen::Index dim() const { return ops_[0].dim(); }
  std::size_t size() const { return ops_.size(); }
  const std::vector<HermitianOperator>& ops() const { return ops_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const HermitianOperator& operator[](std::size_t i) const { return ops_[i]; }

  /// An OperatorSet is usable anywhere a span of operators is expected.
  operator std::span<const HermitianOperator>() const { return ops_; }

 private:
  std::vector<HermitianOperator> ops_;
  std::vector<std::string> labels_;
};

/// First qutrit triple: two real off-diagonal couplings and a traceless
/// diagonal. Labels "F11", "F12", "F13".
OperatorSet builtin_f1();

/// Second qutrit triple; shares its middle member with builtin_f1. Labels
/// "F21", "F22", "F23".
OperatorSet builtin_f2();

/// All single-site Paulis on an n-qubit chain (3n operators, site-major,
/// X/Y/Z order) followed by all nearest-neighbor Pauli pairs on the n-1
/// bonds (9 per bond, left factor major). m = 3n + 9(n-1); labels are Pauli
/// strings such as "X0" and "X0Y1". Requires n >= 2.
OperatorSet pauli_lattice(int n);

/// m independent GUE-style matrices (M + M^H)/2 with standard-normal real
/// and imaginary parts, each rescaled to unit spectral norm. Fully
/// determined by seed. Labels "R0".."R{m-1}".
OperatorSet random_hermitian_set(Eigen::Index d, int m, std::uint64_t seed);

/// JSON serialization ("opset-v1"): {format, dim, labels, ops}, with each
/// operator a nested array of [re, im] pairs.
void save_opset(const OperatorSet& f_set, const std::filesystem::path& path);
OperatorSet load_opset(const std::filesystem::path& path);

}  // namespace qip
