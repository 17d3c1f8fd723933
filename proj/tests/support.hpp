#pragma once

// Seeded generators shared by the property tests.

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "spavg/numkit.hpp"
#include "spavg/so3.hpp"

namespace spavg::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  Vector vector(Eigen::Index n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (auto& e : v) e = uniform(lo, hi);
    return v;
  }

  Matrix matrix(Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(lo, hi);
    return m;
  }

  so3::Vector3 vec3(double lo = -1.0, double hi = 1.0) { return vector(3, lo, hi); }

  /// Point with norm at most `radius`.
  so3::Vector3 in_ball(double radius) {
    so3::Vector3 p;
    do p = vec3(-radius, radius);
    while (p.norm() > radius);
    return p;
  }

  so3::Rotation rotation() { return so3::exp_so3(vec3(-M_PI, M_PI)); }

  /// Random matrix shifted so every eigenvalue has real part <= -0.1, with
  /// infinity norm at most about 5.
  Matrix stable(Eigen::Index m) {
    Matrix a = matrix(m, m, -1.0, 1.0);
    const double shift = Eigen::EigenSolver<Matrix>(a).eigenvalues().real().maxCoeff();
    a -= (shift + 0.1 + uniform(0.0, 1.0)) * Matrix::Identity(m, m);
    return a;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace spavg::testing
