#include "qip/opsets.hpp"

#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

#include "qip/rng.hpp"

namespace qip {

namespace {

using nlohmann::json;

const Complex kI(0.0, 1.0);

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

ComplexMatrix pauli(int p) {
  ComplexMatrix m(2, 2);
  switch (p) {
    case 0:
      m << 0, 1, 1, 0;
      break;
    case 1:
      m << 0, -kI, kI, 0;
      break;
    default:
      m << 1, 0, 0, -1;
  }
  return m;
}

constexpr char kPauliName[3] = {'X', 'Y', 'Z'};

// Pauli string on an n-qubit chain; `factors` maps site -> Pauli index,
// absent sites get the identity. Site 0 is the leftmost tensor factor.
ComplexMatrix pauli_string(int n,
                           std::span<const std::pair<int, int>> factors) {
  ComplexMatrix m = ComplexMatrix::Identity(1, 1);
  for (int site = 0; site < n; ++site) {
    ComplexMatrix f = ComplexMatrix::Identity(2, 2);
    for (const auto& [s, p] : factors)
      if (s == site) f = pauli(p);
    m = kron(m, f);
  }
  return m;
}

ComplexMatrix mat3(std::initializer_list<double> entries) {
  ComplexMatrix m(3, 3);
  Eigen::Index k = 0;
  for (double x : entries) {
    m(k / 3, k % 3) = x;
    ++k;
  }
  return m;
}

}  // namespace

OperatorSet::OperatorSet(std::vector<HermitianOperator> ops,
                         std::vector<std::string> labels)
    : ops_(std::move(ops)), labels_(std::move(labels)) {
  if (ops_.empty()) throw ContractError("OperatorSet: empty operator list");
  if (labels_.size() != ops_.size())
    throw ContractError("OperatorSet: " + std::to_string(ops_.size()) +
                        " operators but " + std::to_string(labels_.size()) +
                        " labels");
  const Eigen::Index d = ops_[0].dim();
  for (std::size_t i = 1; i < ops_.size(); ++i)
    if (ops_[i].dim() != d)
      throw ContractError("OperatorSet: member " + std::to_string(i) +
                          " has dim " + std::to_string(ops_[i].dim()) +
                          ", expected " + std::to_string(d));
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size())
    throw ContractError("OperatorSet: duplicate labels");
}

OperatorSet builtin_f1() {
  std::vector<HermitianOperator> ops;
  ops.emplace_back(mat3({0, 1, 0, 1, 0, 0, 0, 0, 0}));
  ops.emplace_back(mat3({0, 0, 1, 0, 0, 0, 1, 0, 0}));
  ops.emplace_back(mat3({1, 0, 0, 0, -1, 0, 0, 0, 0}));
  return OperatorSet(std::move(ops), {"F11", "F12", "F13"});
}

OperatorSet builtin_f2() {
  std::vector<HermitianOperator> ops;
  ops.emplace_back(mat3({2, 0, 0, 0, 0, 1, 0, 1, 0}));
  ops.emplace_back(mat3({0, 0, 1, 0, 0, 0, 1, 0, 0}));
  ops.emplace_back(mat3({0, 0, 0, 0, 0, 0, 0, 0, 2}));
  return OperatorSet(std::move(ops), {"F21", "F22", "F23"});
}

OperatorSet pauli_lattice(int n) {
  if (n < 2)
    throw ContractError("pauli_lattice: need at least 2 qubits, got " +
                        std::to_string(n));
  std::vector<HermitianOperator> ops;
  std::vector<std::string> labels;
  for (int site = 0; site < n; ++site)
    for (int p = 0; p < 3; ++p) {
      const std::pair<int, int> f[] = {{site, p}};
      ops.emplace_back(pauli_string(n, f));
      labels.push_back(std::string(1, kPauliName[p]) + std::to_string(site));
    }
  for (int bond = 0; bond + 1 < n; ++bond)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const std::pair<int, int> f[] = {{bond, a}, {bond + 1, b}};
        ops.emplace_back(pauli_string(n, f));
        labels.push_back(std::string(1, kPauliName[a]) +
                         std::to_string(bond) + kPauliName[b] +
                         std::to_string(bond + 1));
      }
  return OperatorSet(std::move(ops), std::move(labels));
}

OperatorSet random_hermitian_set(Eigen::Index d, int m, std::uint64_t seed) {
  if (d < 2)
    throw ContractError("random_hermitian_set: dimension must be >= 2");
  if (m < 1)
    throw ContractError("random_hermitian_set: count must be >= 1");
  Rng rng(seed);
  std::vector<HermitianOperator> ops;
  std::vector<std::string> labels;
  for (int k = 0; k < m; ++k) {
    ComplexMatrix raw(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        raw(i, j) = Complex(rng.normal(), rng.normal());
    HermitianOperator h{((raw + raw.adjoint()) / 2.0).eval()};
    const EigenSystem es = herm_eig(h);
    const double spectral_norm = es.values.cwiseAbs().maxCoeff();
    ops.emplace_back(h.matrix() / spectral_norm);
    labels.push_back("R" + std::to_string(k));
  }
  return OperatorSet(std::move(ops), std::move(labels));
}

void save_opset(const OperatorSet& f_set, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "opset-v1";
  doc["dim"] = f_set.dim();
  doc["labels"] = f_set.labels();
  json ops = json::array();
  for (const auto& op : f_set.ops()) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < op.dim(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < op.dim(); ++j)
        row.push_back({op.matrix()(i, j).real(), op.matrix()(i, j).imag()});
      rows.push_back(std::move(row));
    }
    ops.push_back(std::move(rows));
  }
  doc["ops"] = std::move(ops);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

OperatorSet load_opset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("parse error in " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "opset-v1")
      throw IoError("unsupported format in " + path.string() + ": expected "
                    "opset-v1, found " +
                    doc.at("format").get<std::string>());
    const auto dim = doc.at("dim").get<Eigen::Index>();
    auto labels = doc.at("labels").get<std::vector<std::string>>();
    std::vector<HermitianOperator> ops;
    for (const auto& rows : doc.at("ops")) {
      ComplexMatrix m(dim, dim);
      if (static_cast<Eigen::Index>(rows.size()) != dim)
        throw IoError("operator row count mismatch in " + path.string());
      for (Eigen::Index i = 0; i < dim; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != dim)
          throw IoError("operator column count mismatch in " + path.string());
        for (Eigen::Index j = 0; j < dim; ++j) {
          const auto& entry = row[static_cast<std::size_t>(j)];
          m(i, j) = Complex(entry.at(0).get<double>(),
                            entry.at(1).get<double>());
        }
      }
      ops.emplace_back(std::move(m));
    }
    return OperatorSet(std::move(ops), std::move(labels));
  } catch (const json::exception& e) {
    throw IoError("malformed opset document " + path.string() + ": " +
                  e.what());
  }
}

}  // namespace qip
