#pragma once

// Dense numerical substrate: matrix exponential, periodic Simpson quadrature,
// central-difference Jacobians and fixed-step RK4.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spavg/errors.hpp"

namespace spavg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <class Derived>
[[nodiscard]] bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.allFinite();
}

inline void require_finite(const Vector& v, const std::string& what) {
  if (!v.allFinite()) throw NumericError(what + " produced a non-finite value");
}

/// Uniform grid; the i-th time is computed as t0 + i*dt, never accumulated.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 1e-3;
  std::size_t n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double start, double step, std::size_t steps) : t0(start), dt(step), n_steps(steps) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigurationError("TimeGrid: dt must be > 0");
    if (!std::isfinite(t0)) throw ConfigurationError("TimeGrid: t0 must be finite");
  }

  /// Grid covering [t0, t0 + horizon] with the largest step <= max_dt.
  static TimeGrid covering(double start, double horizon, double max_dt) {
    if (!(max_dt > 0.0)) throw ConfigurationError("TimeGrid: max_dt must be > 0");
    if (horizon < 0.0) throw ConfigurationError("TimeGrid: horizon must be >= 0");
    if (horizon == 0.0) return TimeGrid(start, max_dt, 0);
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / max_dt - 1e-9));
    return TimeGrid(start, horizon / static_cast<double>(steps), steps);
  }

  [[nodiscard]] double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  [[nodiscard]] double final_time() const { return time(n_steps); }
};

// ---------------------------------------------------------------------------
// Matrix exponential

/// e^{tA} by scaling and squaring with a degree-16 Taylor polynomial.
inline Matrix mat_exp(const Matrix& a, double t) {
  if (a.rows() != a.cols()) {
    throw DimensionError("mat_exp: matrix must be square, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  }
  if (!std::isfinite(t)) throw NumericError("mat_exp: t must be finite");
  const auto m = a.rows();
  const Matrix ident = Matrix::Identity(m, m);
  if (t == 0.0 || m == 0) return ident;

  Matrix x = t * a;
  if (!x.allFinite()) throw NumericError("mat_exp: non-finite input");
  const double norm1 = x.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  x /= std::ldexp(1.0, squarings);

  constexpr int kOrder = 16;
  Matrix result = ident;
  for (int k = kOrder; k >= 1; --k) result = ident + (x * result) / static_cast<double>(k);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

// ---------------------------------------------------------------------------
// Quadrature

/// Uniform grid over one period with composite-Simpson weights.
class PeriodicGrid {
 public:
  PeriodicGrid(double period, int panels) : period_(period), panels_(panels) {
    if (!(period > 0.0) || !std::isfinite(period)) throw ConfigurationError("period must be > 0");
    if (panels < 2 || panels % 2 != 0) {
      throw ConfigurationError("Simpson quadrature needs an even panel count >= 2, got " +
                               std::to_string(panels));
    }
    h_ = period_ / panels_;
  }

  [[nodiscard]] double period() const noexcept { return period_; }
  [[nodiscard]] int panels() const noexcept { return panels_; }
  [[nodiscard]] double step() const noexcept { return h_; }
  /// Node i in [0, panels]; node `panels` coincides with the period end.
  [[nodiscard]] double node(int i) const { return period_ * static_cast<double>(i) / panels_; }

  /// Simpson weight of node i in [0, panels].
  [[nodiscard]] double weight(int i) const {
    if (i == 0 || i == panels_) return h_ / 3.0;
    return (i % 2 == 1 ? 4.0 : 2.0) * h_ / 3.0;
  }

  /// Weights folded onto the `panels` distinct nodes of a periodic integrand
  /// (node `panels` merged into node 0).
  [[nodiscard]] double periodic_weight(int i) const {
    return i == 0 ? weight(0) + weight(panels_) : weight(i);
  }

 private:
  double period_;
  int panels_;
  double h_ = 0.0;
};

/// Composite Simpson approximation of the integral of f over [0, T].
template <class F>
Vector quad_periodic(F&& f, double period, int n_panels) {
  const PeriodicGrid grid(period, n_panels);
  Vector sum = grid.weight(0) * Vector(f(0.0));
  for (int i = 1; i <= n_panels; ++i) sum += grid.weight(i) * Vector(f(grid.node(i)));
  require_finite(sum, "quad_periodic");
  return sum;
}

/// Running integral of uniformly sampled values: out[j] ~ integral from node 0
/// to node j. Fourth-order everywhere: Simpson on even prefixes, Simpson 3/8
/// closing odd prefixes, and a four-point rule for the first interval.
template <class V>
std::vector<V> cumulative_simpson(std::span<const V> f, double h) {
  const std::size_t n = f.size();
  std::vector<V> out;
  out.reserve(n);
  if (n == 0) return out;
  out.push_back(V(0.0 * f[0]));
  if (n == 1) return out;
  if (n >= 4) {
    out.push_back(V(h * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0));
  } else if (n == 3) {
    out.push_back(V(h * (5.0 * f[0] + 8.0 * f[1] - f[2]) / 12.0));
  } else {
    out.push_back(V(0.5 * h * (f[0] + f[1])));
  }
  for (std::size_t j = 2; j < n; ++j) {
    if (j % 2 == 0) {
      out.push_back(V(out[j - 2] + h / 3.0 * (f[j - 2] + 4.0 * f[j - 1] + f[j])));
    } else {
      out.push_back(
          V(out[j - 3] + 3.0 * h / 8.0 * (f[j - 3] + 3.0 * f[j - 2] + 3.0 * f[j - 1] + f[j])));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences

[[nodiscard]] inline double default_fd_step(double xi) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + std::abs(xi));
}

/// Central-difference Jacobian of f at x. With no step given, each coordinate
/// uses cbrt(eps) * (1 + |x_i|).
template <class F>
Matrix jacobian_fd(F&& f, const Vector& x, std::optional<double> h = std::nullopt) {
  if (h && !(*h > 0.0)) throw ConfigurationError("jacobian_fd: step must be > 0");
  Matrix jac;
  Vector xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h ? *h : default_fd_step(x[k]);
    xp[k] = x[k] + step;
    const Vector fp = f(std::as_const(xp));
    const double up = xp[k];
    xp[k] = x[k] - step;
    const Vector fm = f(std::as_const(xp));
    const double down = xp[k];
    xp[k] = x[k];
    if (!fp.allFinite() || !fm.allFinite()) {
      throw NumericError("jacobian_fd: non-finite evaluation along coordinate " + std::to_string(k));
    }
    if (k == 0) jac.resize(fp.size(), x.size());
    jac.col(k) = (fp - fm) / (up - down);
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Fixed-step RK4

struct Trajectory {
  std::vector<double> t;
  std::vector<Vector> x;

  [[nodiscard]] std::size_t size() const noexcept { return t.size(); }
  [[nodiscard]] const Vector& back() const { return x.back(); }
};

struct Rk4Options {
  /// Record every `stride`-th step (the initial and final states are always kept).
  std::size_t stride = 1;
  /// Applied to the state after each completed step (e.g. manifold projection).
  std::function<void(Vector&)> post_step;
};

/// Classical RK4 over `grid`. Throws DivergenceError naming the first step
/// whose state is non-finite.
template <class Field>
Trajectory integrate_rk4(Field&& field, const Vector& x0, const TimeGrid& grid,
                         const Rk4Options& options = {}) {
  if (options.stride == 0) throw ConfigurationError("integrate_rk4: stride must be >= 1");
  if (!x0.allFinite()) throw DivergenceError(0, grid.t0);
  Trajectory traj;
  const std::size_t expected = grid.n_steps / options.stride + 2;
  traj.t.reserve(expected);
  traj.x.reserve(expected);
  traj.t.push_back(grid.t0);
  traj.x.push_back(x0);

  Vector x = x0;
  const double dt = grid.dt;
  for (std::size_t i = 0; i < grid.n_steps; ++i) {
    const double t = grid.time(i);
    const Vector k1 = field(t, std::as_const(x));
    const Vector k2 = field(t + 0.5 * dt, Vector(x + 0.5 * dt * k1));
    const Vector k3 = field(t + 0.5 * dt, Vector(x + 0.5 * dt * k2));
    const Vector k4 = field(t + dt, Vector(x + dt * k3));
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw DivergenceError(i + 1, grid.time(i + 1));
    if (options.post_step) {
      options.post_step(x);
      if (!x.allFinite()) throw DivergenceError(i + 1, grid.time(i + 1));
    }
    if ((i + 1) % options.stride == 0 || i + 1 == grid.n_steps) {
      traj.t.push_back(grid.time(i + 1));
      traj.x.push_back(x);
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Small helpers shared by the fitting code

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw FitError("fit_line: need at least two paired samples");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw FitError("fit_line: abscissae are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace spavg
