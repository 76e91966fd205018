#include <Eigen/QR>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "spatialqr/errors.hpp"
#include "spatialqr/matrix_io.hpp"
#include "spatialqr/numeric.hpp"

using namespace spatialqr;

namespace {

MatrixXd rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (const double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

VectorXd vec(std::initializer_list<double> values) {
  VectorXd v(static_cast<Index>(values.size()));
  Index i = 0;
  for (const double x : values) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("compute_rotation") {
  SUBCASE("nothing to eliminate") {
    const auto e = compute_rotation(1.0, 0.0);
    CHECK(e.pair.c == 1.0);
    CHECK(e.pair.s == 0.0);
    CHECK(e.r == 1.0);
  }
  SUBCASE("zero input gives the identity") {
    const auto e = compute_rotation(0.0, 0.0);
    CHECK(e.pair.c == 1.0);
    CHECK(e.pair.s == 0.0);
    CHECK(e.r == 0.0);
  }
  SUBCASE("3-4-5") {
    const auto e = compute_rotation(3.0, 4.0);
    CHECK(e.pair.c == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(e.pair.s == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(e.r == 5.0);
    CHECK(e.pair.c * e.pair.c + e.pair.s * e.pair.s == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("non-finite input") {
    CHECK_THROWS_AS(compute_rotation(std::numeric_limits<double>::quiet_NaN(), 1.0), DomainError);
    CHECK_THROWS_AS(compute_rotation(1.0, std::numeric_limits<double>::infinity()), DomainError);
  }
}

TEST_CASE("apply_rotation") {
  {
    const auto [top, bottom] = apply_rotation(RotationPair<double>{1.0, 0.0}, 7.0, -2.0);
    CHECK(top == 7.0);
    CHECK(bottom == -2.0);
  }
  for (const auto& [a, b] : {std::pair{1.0, 2.0}, {-3.5, 0.25}, {0.0, 9.0}}) {
    const auto [top, bottom] = apply_rotation(RotationPair<double>{0.0, 1.0}, a, b);
    CHECK(top == b);
    CHECK(bottom == -a);
  }
  {
    // The bottom lands within rounding of zero; only the pivot path stores an exact zero.
    const auto [top, bottom] = apply_rotation(RotationPair<double>{0.6, 0.8}, 3.0, 4.0);
    CHECK(top == 5.0);
    CHECK(std::abs(bottom) <= 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("rotation properties over random inputs") {
  const MatrixXd samples = random_matrix(42, 500, 2) * 100.0;
  for (Index i = 0; i < samples.rows(); ++i) {
    const double x = samples(i, 0);
    const double y = samples(i, 1);
    const auto e = compute_rotation(x, y);
    CHECK(std::abs(e.pair.c * e.pair.c + e.pair.s * e.pair.s - 1.0) < 1e-15);
    CHECK(e.r >= 0.0);
    const auto [top, bottom] = apply_rotation(e.pair, x, y);
    CHECK(std::abs(top - e.r) <= 1e-13 * e.r);
    CHECK(std::abs(bottom) <= 1e-13 * e.r);
  }
}

TEST_CASE("qr of a 2x2 system by hand") {
  const AugmentedMatrix<double> a(rows_of({{3, 1}, {4, 2}}), vec({1, 1}));
  const auto result = qr_givens_reference(a, true);
  CHECK(result.rotations.size() == 1);
  CHECK(result.r_aug(1, 1) == 5.0);
  CHECK(result.r_aug(2, 1) == 0.0);
  CHECK(result.r_aug(1, 2) == doctest::Approx(2.2).epsilon(1e-14));
  CHECK(result.r_aug(2, 2) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(result.r_aug(1, 3) == doctest::Approx(1.4).epsilon(1e-14));
  CHECK(result.r_aug(2, 3) == doctest::Approx(-0.2).epsilon(1e-14));
}

TEST_CASE("triangular inputs pass through unchanged") {
  SUBCASE("identity") {
    const AugmentedMatrix<double> a(MatrixXd::Identity(4, 4), vec({1, 2, 3, 4}));
    const auto result = qr_givens_reference(a, false);
    CHECK(result.r_aug == a);
    CHECK(result.rotations.size() == rotation_count(4, 4));
    for (const auto& rot : result.rotations) {
      CHECK(rot.pair.c == 1.0);
      CHECK(rot.pair.s == 0.0);
    }
  }
  SUBCASE("upper triangular with positive diagonal") {
    MatrixXd u = random_matrix(3, 5, 5).triangularView<Eigen::Upper>();
    u.diagonal() = u.diagonal().cwiseAbs().array() + 0.5;
    const AugmentedMatrix<double> a(u, random_matrix(4, 5, 1).col(0));
    CHECK(qr_givens_reference(a, false).r_aug == a);
  }
}

TEST_CASE("qr reconstructs random inputs") {
  const AugmentedMatrix<double> a(random_matrix(0, 4, 4), VectorXd::Ones(4));
  const auto result = qr_givens_reference(a, true);
  const MatrixXd reconstructed = *result.q * result.r_aug.inner();
  CHECK((reconstructed - a.inner()).cwiseAbs().maxCoeff() < 1e-12);
  for (Index j = 1; j <= 4; ++j)
    for (Index i = j + 1; i <= 4; ++i) CHECK(result.r_aug(i, j) == 0.0);
}

TEST_CASE("R agrees with Householder QR up to row signs") {
  for (const Index size : {3, 6, 10}) {
    const MatrixXd a = random_matrix(static_cast<std::uint64_t>(size), size, size);
    const auto ours = qr_givens_reference(AugmentedMatrix<double>(a, VectorXd::Zero(size)), false);
    const Eigen::MatrixXd dense = a;
    const Eigen::HouseholderQR<Eigen::MatrixXd> hh(dense);
    const Eigen::MatrixXd theirs = hh.matrixQR().triangularView<Eigen::Upper>();
    for (Index i = 0; i < size; ++i) {
      const double sign = (theirs(i, i) < 0) == (ours.r_aug.inner()(i, i) < 0) ? 1.0 : -1.0;
      for (Index j = i; j < size; ++j) CHECK(std::abs(sign * theirs(i, j) - ours.r_aug.inner()(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("rectangular inputs") {
  for (const auto& [m, n] : {std::pair<Index, Index>{6, 3}, {5, 1}, {1, 1}, {3, 3}}) {
    const AugmentedMatrix<double> a(random_matrix(7, m, n), random_matrix(8, m, 1).col(0));
    const auto result = qr_givens_reference(a, true);
    CHECK(result.rotations.size() == rotation_count(m, n));
    CHECK(verify_qr(a, result, 1e-12).ok());
  }
}

TEST_CASE("verify_qr") {
  const AugmentedMatrix<double> a(random_matrix(5, 6, 6), random_matrix(6, 6, 1).col(0));
  SUBCASE("self-consistent") { CHECK(verify_qr(a, qr_givens_reference(a, true), 1e-10).ok()); }
  SUBCASE("corruption is detected") {
    auto result = qr_givens_reference(a, true);
    result.r_aug(2, 3) += 1e-3;
    const auto report = verify_qr(a, result, 1e-10);
    CHECK_FALSE(report.reconstruction_ok);
    CHECK_FALSE(report.ok());
  }
  SUBCASE("lower-triangle residue is detected") {
    auto result = qr_givens_reference(a, true);
    result.r_aug(4, 2) = 1e-300;
    CHECK_FALSE(verify_qr(a, result, 1e-10).upper_triangular_ok);
  }
  SUBCASE("identity passes at tol 0") {
    const AugmentedMatrix<double> id(MatrixXd::Identity(4, 4), VectorXd::Zero(4));
    const auto report = verify_qr(id, qr_givens_reference(id, true), 0.0);
    CHECK(report.ok());
    CHECK(report.reconstruction_error == 0.0);
    CHECK(report.orthogonality_error == 0.0);
  }
  SUBCASE("missing q") { CHECK_THROWS_AS(verify_qr(a, qr_givens_reference(a, false), 1e-10), PreconditionError); }
}

TEST_CASE("back_substitute") {
  CHECK(back_substitute<double>(MatrixXd::Identity(3, 3), vec({5, -1, 2})) == vec({5, -1, 2}));
  CHECK(back_substitute<double>(rows_of({{2, 1}, {0, 1}}), vec({3, 1})) == vec({1, 1}));
  MatrixXd r = rows_of({{1, 2, 3}, {0, 0, 1}, {0, 0, 4}});
  try {
    back_substitute<double>(r, vec({1, 1, 1}));
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.index() == 2);
  }
  CHECK_THROWS_AS(back_substitute<double>(r, vec({1, 1})), DomainError);
}

TEST_CASE("solve") {
  CHECK(solve<double>(MatrixXd::Identity(4, 4), vec({1, 2, 3, 4})) == vec({1, 2, 3, 4}));
  const VectorXd y = solve<double>(2.0 * MatrixXd::Identity(4, 4), vec({2, 4, 6, 8}));
  CHECK((y - vec({1, 2, 3, 4})).cwiseAbs().maxCoeff() < 1e-15);

  MatrixXd a = random_matrix(11, 8, 8);
  a.diagonal().array() += 4.0;
  const VectorXd z = random_matrix(12, 8, 1).col(0);
  CHECK((a * solve<double>(a, z) - z).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(solve<double>(random_matrix(1, 3, 2), vec({1, 2, 3})), DomainError);
  CHECK_THROWS_AS(solve<double>(MatrixXd::Zero(3, 3), vec({1, 2, 3})), SingularMatrixError);
}

TEST_CASE("templated on scalar") {
  const Matrix<float> a = random_matrix(9, 5, 5).cast<float>();
  const AugmentedMatrix<float> aug(a, Vector<float>::Ones(5));
  const auto result = qr_givens_reference(aug, true);
  CHECK(verify_qr(aug, result, 1e-5f).ok());
}

TEST_CASE("augmented matrix access") {
  AugmentedMatrix<double> a(rows_of({{1, 2}, {3, 4}, {5, 6}}), vec({7, 8, 9}));
  CHECK(a.m() == 3);
  CHECK(a.n() == 2);
  CHECK(a(3, 3) == 9.0);
  CHECK(a(2, 1) == 3.0);
  CHECK_THROWS(a(0, 1));
  CHECK_THROWS(a(4, 1));
  CHECK_THROWS_AS(AugmentedMatrix<double>(rows_of({{1, 2}}), vec({1, 2})), DomainError);
}

TEST_CASE("matrix text and csv round trip") {
  const MatrixXd m = random_matrix(21, 3, 4);
  CHECK(parse_matrix_text(format_matrix_text(m)) == m);
  CHECK(parse_matrix_csv(format_matrix_csv(m)) == m);
  CHECK(format_matrix_text(parse_matrix_text(format_matrix_text(m))) == format_matrix_text(m));
  CHECK_THROWS_AS(parse_matrix_text("2 2\n1 2\n3\n"), ParseError);
  CHECK_THROWS_AS(parse_matrix_text("2 2\n1 2\n3 x\n"), ParseError);
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("random_matrix is seeded and bounded") {
  CHECK(random_matrix(3, 4, 4) == random_matrix(3, 4, 4));
  CHECK_FALSE(random_matrix(3, 4, 4) == random_matrix(4, 4, 4));
  const MatrixXd m = random_matrix(0, 50, 50);
  CHECK(m.minCoeff() >= -1.0);
  CHECK(m.maxCoeff() < 1.0);
}
