#pragma once

// Rotation-group helpers: hat map, Rodrigues exponential, the column-stacked
// R^9 embedding of SO(3) and a polar-factor projection back onto the group.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "spavg/errors.hpp"

namespace spavg::so3 {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
/// Frame embedded in R^9 as [q1; q2; q3], the columns of the rotation matrix.
using Vector9 = Eigen::Matrix<double, 9, 1>;

inline constexpr double kManifoldTolerance = 1e-6;

/// Skew-symmetric matrix with hat(w) * v == w.cross(v).
inline Matrix3 hat(const Vector3& w) {
  Matrix3 m;
  // clang-format off
  m <<  0.0,  -w.z(),  w.y(),
        w.z(),  0.0,  -w.x(),
       -w.y(),  w.x(),  0.0;
  // clang-format on
  return m;
}

/// Inverse of hat for skew-symmetric input.
inline Vector3 vee(const Matrix3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

/// max |Q^T Q - I| and |det Q - 1|.
inline double rotation_residual(const Matrix3& q) {
  const double ortho = (q.transpose() * q - Matrix3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(q.determinant() - 1.0));
}

/// A 3x3 matrix validated to lie on SO(3).
class Rotation {
 public:
  Rotation() : m_(Matrix3::Identity()) {}

  /// Throws ManifoldError if `m` is further than 1e-6 from SO(3).
  explicit Rotation(const Matrix3& m) : m_(m) {
    const double res = m.allFinite() ? rotation_residual(m) : INFINITY;
    if (!(res <= kManifoldTolerance)) {
      throw ManifoldError("matrix is not a rotation (residual " + std::to_string(res) + ")");
    }
  }

  static Rotation identity() { return Rotation(); }

  [[nodiscard]] const Matrix3& matrix() const noexcept { return m_; }
  [[nodiscard]] Vector3 operator*(const Vector3& v) const { return m_ * v; }
  [[nodiscard]] Rotation operator*(const Rotation& other) const {
    return Rotation(m_ * other.m_, Unchecked{});
  }
  [[nodiscard]] Rotation transpose() const { return Rotation(m_.transpose(), Unchecked{}); }

 private:
  struct Unchecked {};
  Rotation(const Matrix3& m, Unchecked) : m_(m) {}
  friend Rotation exp_so3(const Vector3&);
  friend Rotation project_so3(const Matrix3&);

  Matrix3 m_;
};

/// Rodrigues formula; series coefficients below |w| = 1e-6.
inline Rotation exp_so3(const Vector3& w) {
  const double theta = w.norm();
  double a, b;  // sin(t)/t and (1 - cos(t))/t^2
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  const Matrix3 k = hat(w);
  return Rotation(Matrix3::Identity() + a * k + b * k * k, Rotation::Unchecked{});
}

/// Column-stacks Q into [q1; q2; q3]. Bit-exact copy.
inline Vector9 embed(const Rotation& q) {
  Vector9 out;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) out[3 * c + r] = q.matrix()(r, c);
  return out;
}

/// Reassembles the columns of an embedded frame without validation.
inline Matrix3 unstack(const Eigen::Ref<const Eigen::VectorXd>& q) {
  Matrix3 m;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) m(r, c) = q[3 * c + r];
  return m;
}

/// Largest violation of q_i.q_j = delta_ij and q_i x q_j = eps_ijk q_k.
inline double manifold_residual(const Eigen::Ref<const Eigen::VectorXd>& q) {
  const Matrix3 m = unstack(q);
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double dot = m.col(i).dot(m.col(j)) - (i == j ? 1.0 : 0.0);
      worst = std::max(worst, std::abs(dot));
      Vector3 expected = Vector3::Zero();
      if (i != j) {
        const int k = 3 - i - j;
        // Levi-Civita sign for the ordered pair (i, j).
        const double sign = ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;
        expected = sign * m.col(k);
      }
      const Vector3 cross = m.col(i).cross(m.col(j));
      worst = std::max(worst, (cross - expected).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

/// Inverse of embed. Throws ManifoldError if the frame is off the manifold by
/// more than 1e-6.
inline Rotation extract(const Vector9& q) {
  const double res = q.allFinite() ? manifold_residual(q) : INFINITY;
  if (!(res <= kManifoldTolerance)) {
    throw ManifoldError("embedded frame is off the manifold (residual " + std::to_string(res) + ")");
  }
  return Rotation(unstack(q));
}

/// Nearest rotation (polar factor) via Q <- Q (3I - Q^T Q) / 2.
/// Requires ||M^T M - I||_F < 0.5 and det M > 0.
inline Rotation project_so3(const Matrix3& m) {
  if (!m.allFinite()) throw ProjectionError("project_so3: non-finite input");
  const double gap = (m.transpose() * m - Matrix3::Identity()).norm();
  if (!(gap < 0.5)) {
    throw ProjectionError("project_so3: input too far from SO(3) (||M^T M - I|| = " +
                          std::to_string(gap) + ")");
  }
  if (!(m.determinant() > 0.0)) throw ProjectionError("project_so3: det M must be positive");
  Matrix3 q = m;
  for (int iter = 0; iter < 60; ++iter) {
    const Matrix3 qtq = q.transpose() * q;
    if ((qtq - Matrix3::Identity()).cwiseAbs().maxCoeff() < 1e-14) break;
    q = 0.5 * q * (3.0 * Matrix3::Identity() - qtq);
  }
  return Rotation(q, Rotation::Unchecked{});
}

/// Projects the frame stored in q (R^9) in place.
inline void project_frame(Eigen::Ref<Eigen::VectorXd> q) {
  const Matrix3 r = project_so3(unstack(q)).matrix();
  for (int c = 0; c < 3; ++c)
    for (int rr = 0; rr < 3; ++rr) q[3 * c + rr] = r(rr, c);
}

}  // namespace spavg::so3
