#pragma once

// Givens-rotation QR on real dense matrices, plus the verification and
// solve routines the dataflow and simulator layers are checked against.
//
// Row/column indices that cross this API (AugmentedMatrix::operator(),
// rotation records, singular-matrix errors) are 1-based.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spatialqr/errors.hpp"

namespace spatialqr {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Checked 1-based element access.
template <typename Derived>
decltype(auto) at(Eigen::MatrixBase<Derived>& m, Index i, Index j) {
  if (i < 1 || i > m.rows() || j < 1 || j > m.cols()) {
    throw DomainError("index (" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  return m.derived().coeffRef(i - 1, j - 1);
}

template <typename Derived>
auto at(const Eigen::MatrixBase<Derived>& m, Index i, Index j) {
  if (i < 1 || i > m.rows() || j < 1 || j > m.cols()) {
    throw DomainError("index (" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  return m.derived().coeff(i - 1, j - 1);
}

/// The working array A' = (A | z): M rows, N coefficient columns and one
/// right-hand-side column.
template <typename Scalar = double>
class AugmentedMatrix {
 public:
  AugmentedMatrix(const Eigen::Ref<const Matrix<Scalar>>& a, const Eigen::Ref<const Vector<Scalar>>& z) {
    if (a.rows() < 1 || a.cols() < 1) throw DomainError("augmented matrix needs M >= 1 and N >= 1");
    if (z.size() != a.rows()) {
      throw DomainError("rhs length " + std::to_string(z.size()) + " does not match " +
                        std::to_string(a.rows()) + " rows");
    }
    inner_.resize(a.rows(), a.cols() + 1);
    inner_.leftCols(a.cols()) = a;
    inner_.col(a.cols()) = z;
  }

  /// Wraps an M x (N+1) array that already holds A' column-concatenated.
  static AugmentedMatrix from_inner(Matrix<Scalar> inner) {
    if (inner.rows() < 1 || inner.cols() < 2) throw DomainError("augmented matrix needs at least 1 row and 2 columns");
    return AugmentedMatrix(std::move(inner), 0);
  }

  Index m() const noexcept { return inner_.rows(); }
  Index n() const noexcept { return inner_.cols() - 1; }

  Scalar& operator()(Index i, Index j) { return at(inner_, i, j); }
  Scalar operator()(Index i, Index j) const { return at(inner_, i, j); }

  const Matrix<Scalar>& inner() const noexcept { return inner_; }

  auto coefficients() const { return inner_.leftCols(n()); }
  auto rhs() const { return inner_.col(n()); }

  friend bool operator==(const AugmentedMatrix& lhs, const AugmentedMatrix& rhs) {
    return lhs.inner_.rows() == rhs.inner_.rows() && lhs.inner_.cols() == rhs.inner_.cols() &&
           std::equal(lhs.inner_.data(), lhs.inner_.data() + lhs.inner_.size(), rhs.inner_.data());
  }

 private:
  AugmentedMatrix(Matrix<Scalar> inner, int) : inner_(std::move(inner)) {}

  Matrix<Scalar> inner_;
};

template <typename Scalar = double>
struct RotationPair {
  Scalar c{1};
  Scalar s{0};

  friend bool operator==(const RotationPair&, const RotationPair&) = default;
};

template <typename Scalar = double>
struct Elimination {
  RotationPair<Scalar> pair;
  Scalar r{0};
};

/// Rotation that maps (x, y) = (A'[row-1,col], A'[row,col]) onto (r, 0).
/// c = x/r, s = y/r with r = sqrt(x^2 + y^2); zero input gives the identity.
template <typename Scalar>
Elimination<Scalar> compute_rotation(Scalar x, Scalar y) {
  using std::hypot;
  using std::isfinite;
  if (!isfinite(x) || !isfinite(y)) throw DomainError("compute_rotation: non-finite input");
  const Scalar r = hypot(x, y);
  if (r == Scalar(0)) return {{Scalar(1), Scalar(0)}, Scalar(0)};
  return {{x / r, y / r}, r};
}

/// top' = c*top + s*bottom, bottom' = c*bottom - s*top.
template <typename Scalar>
std::pair<Scalar, Scalar> apply_rotation(const RotationPair<Scalar>& pair, Scalar top, Scalar bottom) {
  return {pair.c * top + pair.s * bottom, pair.c * bottom - pair.s * top};
}

template <typename Scalar = double>
struct AppliedRotation {
  Index col;
  Index row;
  RotationPair<Scalar> pair;

  friend bool operator==(const AppliedRotation&, const AppliedRotation&) = default;
};

template <typename Scalar = double>
struct QrResult {
  AugmentedMatrix<Scalar> r_aug;
  std::optional<Matrix<Scalar>> q;
  std::vector<AppliedRotation<Scalar>> rotations;
};

/// Number of rotations the loop nest performs: sum over col of max(0, M - col).
inline std::size_t rotation_count(Index m, Index n) {
  std::size_t total = 0;
  for (Index col = 1; col <= n; ++col) total += static_cast<std::size_t>(std::max<Index>(0, m - col));
  return total;
}

/// Reference elimination: col ascending, row descending from M to col+1,
/// k ascending over the columns right of the pivot including the rhs.
/// The eliminated element is written as exactly zero.
template <typename Scalar>
QrResult<Scalar> qr_givens_reference(const AugmentedMatrix<Scalar>& input, bool accumulate_q) {
  AugmentedMatrix<Scalar> a = input;
  const Index m = a.m();
  const Index n = a.n();

  // Rows of qt accumulate Q^T; transposed at the end.
  std::optional<Matrix<Scalar>> qt;
  if (accumulate_q) qt = Matrix<Scalar>::Identity(m, m);

  std::vector<AppliedRotation<Scalar>> rotations;
  rotations.reserve(rotation_count(m, n));

  for (Index col = 1; col <= n; ++col) {
    for (Index row = m; row >= col + 1; --row) {
      const auto [pair, r] = compute_rotation(a(row - 1, col), a(row, col));
      a(row - 1, col) = r;
      a(row, col) = Scalar(0);
      for (Index k = col + 1; k <= n + 1; ++k) {
        const auto [top, bottom] = apply_rotation(pair, a(row - 1, k), a(row, k));
        a(row - 1, k) = top;
        a(row, k) = bottom;
      }
      if (qt) {
        for (Index j = 1; j <= m; ++j) {
          const auto [top, bottom] = apply_rotation(pair, at(*qt, row - 1, j), at(*qt, row, j));
          at(*qt, row - 1, j) = top;
          at(*qt, row, j) = bottom;
        }
      }
      rotations.push_back({col, row, pair});
    }
  }

  std::optional<Matrix<Scalar>> q;
  if (qt) q = qt->transpose();
  return {std::move(a), std::move(q), std::move(rotations)};
}

template <typename Scalar = double>
struct VerificationReport {
  bool reconstruction_ok = false;
  bool orthogonality_ok = false;
  bool upper_triangular_ok = false;
  Scalar reconstruction_error{0};  // max |A' - Q R'|
  Scalar orthogonality_error{0};   // max |Q Q^T - I|
  Scalar lower_triangle_max{0};    // max |R[i,j]| for i > j, j <= N

  bool ok() const noexcept { return reconstruction_ok && orthogonality_ok && upper_triangular_ok; }
};

/// Checks A' = Q (R | Q^T z), Q Q^T = I and that R is exactly upper-triangular.
template <typename Scalar>
VerificationReport<Scalar> verify_qr(const AugmentedMatrix<Scalar>& original, const QrResult<Scalar>& result,
                                     Scalar tol) {
  if (!result.q) throw PreconditionError("verify_qr requires a result computed with accumulate_q");
  const Matrix<Scalar>& q = *result.q;
  const Matrix<Scalar>& r = result.r_aug.inner();
  if (original.m() != result.r_aug.m() || original.n() != result.r_aug.n() || q.rows() != original.m() ||
      q.cols() != original.m()) {
    throw DomainError("verify_qr: dimension mismatch between input and result");
  }

  VerificationReport<Scalar> report;
  report.reconstruction_error = (original.inner() - q * r).cwiseAbs().maxCoeff();
  report.orthogonality_error =
      (q * q.transpose() - Matrix<Scalar>::Identity(q.rows(), q.rows())).cwiseAbs().maxCoeff();

  Scalar lower{0};
  bool exact_zero = true;
  for (Index j = 0; j < result.r_aug.n(); ++j) {
    for (Index i = j + 1; i < r.rows(); ++i) {
      if (r(i, j) != Scalar(0)) exact_zero = false;
      lower = std::max(lower, std::abs(r(i, j)));
    }
  }
  report.lower_triangle_max = lower;
  report.upper_triangular_ok = exact_zero;
  report.reconstruction_ok = report.reconstruction_error <= tol;
  report.orthogonality_ok = report.orthogonality_error <= tol;
  return report;
}

/// Solves r * y = b bottom-up for upper-triangular r.
template <typename Scalar>
Vector<Scalar> back_substitute(const Eigen::Ref<const Matrix<Scalar>>& r, const Eigen::Ref<const Vector<Scalar>>& b) {
  const Index n = r.rows();
  if (r.cols() != n || b.size() != n) throw DomainError("back_substitute: dimension mismatch");
  Vector<Scalar> y(n);
  for (Index i = n - 1; i >= 0; --i) {
    if (r(i, i) == Scalar(0)) throw SingularMatrixError(static_cast<std::size_t>(i + 1));
    Scalar acc = b(i);
    for (Index j = i + 1; j < n; ++j) acc -= r(i, j) * y(j);
    y(i) = acc / r(i, i);
  }
  return y;
}

/// Solves the square system A y = z via (R | Q^T z) and back substitution.
template <typename Scalar>
Vector<Scalar> solve(const Eigen::Ref<const Matrix<Scalar>>& a, const Eigen::Ref<const Vector<Scalar>>& z) {
  if (a.rows() != a.cols()) throw DomainError("solve: matrix must be square");
  const AugmentedMatrix<Scalar> augmented(a, z);
  const QrResult<Scalar> result = qr_givens_reference(augmented, false);
  const Matrix<Scalar> r = result.r_aug.coefficients();
  const Vector<Scalar> rhs = result.r_aug.rhs();
  return back_substitute<Scalar>(r, rhs);
}

}  // namespace spatialqr
