#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "qip/opsets.hpp"

using qip::ComplexMatrix;
using qip::OperatorSet;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("builtin_f1 matches its printed integer matrices") {
  const OperatorSet f = qip::builtin_f1();
  CHECK(f.size() == 3);
  CHECK(f.dim() == 3);
  CHECK(f.labels() == std::vector<std::string>{"F11", "F12", "F13"});
  CHECK(f[0].matrix()(0, 1) == qip::Complex(1.0, 0.0));
  CHECK(f[0].matrix()(1, 0) == qip::Complex(1.0, 0.0));
  CHECK(f[2].matrix()(0, 0).real() == 1.0);
  CHECK(f[2].matrix()(1, 1).real() == -1.0);
  CHECK(f[2].matrix()(2, 2).real() == 0.0);
  for (const auto& op : f.ops()) CHECK(std::abs(op.matrix().trace()) == 0.0);
}

TEST_CASE("builtin_f2 matches its printed integer matrices") {
  const OperatorSet f = qip::builtin_f2();
  CHECK(f.labels() == std::vector<std::string>{"F21", "F22", "F23"});
  CHECK(f[0].matrix()(0, 0).real() == 2.0);
  CHECK(f[0].matrix()(1, 2).real() == 1.0);
  // Third member is zero except the (2,2) entry.
  ComplexMatrix want = ComplexMatrix::Zero(3, 3);
  want(2, 2) = 2.0;
  CHECK((f[2].matrix() - want).cwiseAbs().maxCoeff() == 0.0);
  // Middle member is shared with the first set.
  CHECK((f[1].matrix() - qip::builtin_f1()[1].matrix()).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("pauli_lattice counts follow 3n + 9(n-1)") {
  for (int n = 2; n <= 6; ++n)
    CHECK(qip::pauli_lattice(n).size() ==
          static_cast<std::size_t>(3 * n + 9 * (n - 1)));
  CHECK(qip::pauli_lattice(5).size() == 51);
  CHECK(qip::pauli_lattice(2).size() == 15);
  CHECK_THROWS_AS((void)qip::pauli_lattice(1), qip::ContractError);
}

TEST_CASE("pauli_lattice members square to the identity and are traceless") {
  for (int n : {2, 3}) {
    const OperatorSet f = qip::pauli_lattice(n);
    const Eigen::Index d = Eigen::Index(1) << n;
    CHECK(f.dim() == d);
    for (const auto& op : f.ops()) {
      CHECK((op.matrix() * op.matrix() - ComplexMatrix::Identity(d, d))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
      CHECK(std::abs(op.matrix().trace()) < 1e-12);
    }
  }
}

TEST_CASE("pauli_lattice ordering is site-major singles then bonds") {
  const OperatorSet f = qip::pauli_lattice(3);
  const auto& lab = f.labels();
  CHECK(lab[0] == "X0");
  CHECK(lab[1] == "Y0");
  CHECK(lab[2] == "Z0");
  CHECK(lab[3] == "X1");
  CHECK(lab[8] == "Z2");
  CHECK(lab[9] == "X0X1");
  CHECK(lab[10] == "X0Y1");
  CHECK(lab[17] == "Z0Z1");
  CHECK(lab[18] == "X1X2");
  CHECK(lab.back() == "Z1Z2");
  // Single-site member placement: "X1" must be I (x) sigma_x (x) I.
  ComplexMatrix sx(2, 2);
  sx << 0, 1, 1, 0;
  ComplexMatrix expected = ComplexMatrix::Zero(8, 8);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      for (Eigen::Index k = 0; k < 2; ++k)
        for (Eigen::Index l = 0; l < 2; ++l)
          for (Eigen::Index q = 0; q < 2; ++q)
            if (i == j)
              expected(4 * i + 2 * k + q, 4 * j + 2 * l + q) += sx(k, l);
  CHECK((f[3].matrix() - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random_hermitian_set is seed-deterministic with unit norm") {
  const OperatorSet a = qip::random_hermitian_set(64, 3, 1234);
  const OperatorSet b = qip::random_hermitian_set(64, 3, 1234);
  const OperatorSet c = qip::random_hermitian_set(64, 3, 999);
  CHECK(a.size() == 3);
  CHECK(a.dim() == 64);
  CHECK(a.labels() == std::vector<std::string>{"R0", "R1", "R2"});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((a[i].matrix() - b[i].matrix()).cwiseAbs().maxCoeff() == 0.0);
    const auto es = qip::herm_eig(a[i]);
    CHECK(std::abs(es.values.cwiseAbs().maxCoeff() - 1.0) < 1e-9);
  }
  CHECK((a[0].matrix() - c[0].matrix()).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("OperatorSet enforces its invariants") {
  std::vector<qip::HermitianOperator> ops;
  CHECK_THROWS_AS(OperatorSet(ops, {}), qip::ContractError);
  ops.emplace_back(ComplexMatrix::Identity(2, 2));
  CHECK_THROWS_AS(OperatorSet(ops, {"A", "B"}), qip::ContractError);
  ops.emplace_back(ComplexMatrix::Identity(3, 3));
  CHECK_THROWS_AS(OperatorSet(ops, {"A", "B"}), qip::ContractError);
  ops.pop_back();
  ops.emplace_back(ComplexMatrix::Identity(2, 2));
  CHECK_THROWS_AS(OperatorSet(ops, {"A", "A"}), qip::ContractError);
  CHECK_NOTHROW(OperatorSet(ops, {"A", "B"}));
}

TEST_CASE("an OperatorSet feeds the span-based state functions directly") {
  const OperatorSet f = qip::builtin_f1();
  qip::RealVector theta(3);
  theta << 0.5, -0.3, 0.8;
  const qip::DensityMatrix rho =
      qip::thermal_state(f, qip::ThermalParams{theta});
  const qip::MeasurementVector c = qip::measure(rho, f);
  CHECK(c.size() == 3);
  const ComplexMatrix reference =
      oracle::thermal_taylor(qip::combine(f, theta).matrix());
  CHECK((rho.matrix() - reference).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("opset JSON round-trip preserves everything") {
  TempFile tmp("qip_test_opset.json");
  const OperatorSet f = qip::random_hermitian_set(8, 2, 77);
  qip::save_opset(f, tmp.path);
  const OperatorSet g = qip::load_opset(tmp.path);
  CHECK(g.dim() == f.dim());
  CHECK(g.labels() == f.labels());
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK((f[i].matrix() - g[i].matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("opset loading rejects bad files") {
  CHECK_THROWS_AS((void)qip::load_opset("/nonexistent/opset.json"),
                  qip::IoError);

  TempFile garbage("qip_test_opset_garbage.json");
  std::ofstream(garbage.path) << "{not json";
  CHECK_THROWS_AS((void)qip::load_opset(garbage.path), qip::IoError);

  TempFile wrong("qip_test_opset_wrongformat.json");
  std::ofstream(wrong.path)
      << R"({"format":"opset-v9","dim":2,"labels":["A"],"ops":[[[[1,0],[0,0]],[[0,0],[1,0]]]]})";
  CHECK_THROWS_AS((void)qip::load_opset(wrong.path), qip::IoError);
}
