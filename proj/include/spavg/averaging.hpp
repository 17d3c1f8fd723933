#pragma once

// Reduced-order construction, periodic corrector BVPs and the second-order
// averaged vector field
//
//   fbar(x) = 1/T int_0^T ( f2~(x,t1) + 1/2 [ int_0^t1 f1~(x,t2) dt2 , f1~(x,t1) ] ) dt1
//
// with the Lie bracket [u, v] = (dv) u - (du) v.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spavg/errors.hpp"
#include "spavg/numkit.hpp"
#include "spavg/system.hpp"

namespace spavg {

inline constexpr int kDefaultPanels = 256;

/// Lie bracket of autonomous vector fields, [u, v](x) = Dv(x) u(x) - Du(x) v(x),
/// Jacobians by central differences.
template <class U, class V>
Vector lie_bracket(U&& u, V&& v, const Vector& x) {
  const Matrix du = jacobian_fd(u, x);
  const Matrix dv = jacobian_fd(v, x);
  return dv * Vector(u(x)) - du * Vector(v(x));
}

// ---------------------------------------------------------------------------
// Forcing terms and correctors

/// Forcing b(x, tau) of a periodic corrector problem d/dtau phi = A phi + b.
struct ForcingTerm {
  using Pointwise = std::function<Vector(const Vector& x, double tau)>;
  /// Values at offset + grid.node(i), i = 0 .. panels-1.
  using GridSampler =
      std::function<std::vector<Vector>(const Vector& x, double offset, const PeriodicGrid& grid)>;

  Pointwise at;
  GridSampler on_grid;  // optional fast path

  [[nodiscard]] std::vector<Vector> sample(const Vector& x, double offset,
                                           const PeriodicGrid& grid) const {
    if (on_grid) return on_grid(x, offset, grid);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(grid.panels()));
    for (int i = 0; i < grid.panels(); ++i) out.push_back(at(x, offset + grid.node(i)));
    return out;
  }
};

/// Periodic solution of d/dtau phi = A phi + b(x, tau):
///   phi(x, tau) = (I - e^{TA})^{-1} int_0^T e^{(T-s)A} b(x, s + tau) ds
/// evaluated with composite Simpson. The resolvent factorisation and the
/// quadrature kernel are computed once at construction.
class CorrectorSolution {
 public:
  CorrectorSolution(int index, const Matrix& a, ForcingTerm b, double period, int panels)
      : index_(index), a_(a), b_(std::move(b)), grid_(period, panels) {
    if (a.rows() != a.cols()) throw DimensionError("corrector: A must be square");
    if (!b_.at) throw ConfigurationError("corrector: forcing term has no evaluator");
    const auto m = a.rows();
    const Matrix monodromy = mat_exp(a, period);
    const Matrix gap = Matrix::Identity(m, m) - monodromy;
    // Absolute test on the smallest singular value: a relative rank test
    // misses gap ~ 1e-15 * I when e^{TA} = I up to rounding.
    const double scale = std::max(1.0, monodromy.cwiseAbs().maxCoeff());
    const Eigen::JacobiSVD<Matrix> svd(gap);
    if (!(svd.singularValues().minCoeff() > 1e-10 * scale)) {
      throw SolverError("corrector: I - e^{TA} is singular (A has a T-resonant spectrum)");
    }
    resolvent_ = gap.partialPivLu();
    // Node 0 and node N carry the same periodic sample of b, so fold their
    // kernels: w0 e^{TA} + wN I.
    kernel_.reserve(static_cast<std::size_t>(panels));
    for (int i = 0; i < panels; ++i) {
      Matrix k = grid_.weight(i) * mat_exp(a, period - grid_.node(i));
      if (i == 0) k += grid_.weight(panels) * Matrix::Identity(m, m);
      kernel_.push_back(std::move(k));
    }
  }

  [[nodiscard]] int index() const noexcept { return index_; }
  [[nodiscard]] const Matrix& A() const noexcept { return a_; }
  [[nodiscard]] const ForcingTerm& forcing() const noexcept { return b_; }
  [[nodiscard]] const PeriodicGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] double period() const noexcept { return grid_.period(); }

  [[nodiscard]] Vector operator()(const Vector& x, double tau) const {
    return apply(b_.sample(x, tau, grid_), 0);
  }

  /// phi at tau = offset + node(j), j = 0 .. panels-1. One sampling of b is
  /// shared by every output point.
  [[nodiscard]] std::vector<Vector> on_grid(const Vector& x, double offset = 0.0) const {
    const auto samples = b_.sample(x, offset, grid_);
    std::vector<Vector> out;
    out.reserve(samples.size());
    for (int j = 0; j < grid_.panels(); ++j) out.push_back(apply(samples, j));
    return out;
  }

  [[nodiscard]] CorrectorFn as_function() const {
    return [self = *this](const Vector& x, double tau) { return self(x, tau); };
  }

 private:
  [[nodiscard]] Vector apply(const std::vector<Vector>& samples, int shift) const {
    const int n = grid_.panels();
    Vector acc = Vector::Zero(a_.rows());
    for (int i = 0; i < n; ++i) acc.noalias() += kernel_[static_cast<std::size_t>(i)] *
                                                  samples[static_cast<std::size_t>((i + shift) % n)];
    Vector phi = resolvent_.solve(acc);
    require_finite(phi, "corrector");
    return phi;
  }

  int index_;
  Matrix a_;
  ForcingTerm b_;
  PeriodicGrid grid_;
  Eigen::PartialPivLU<Matrix> resolvent_;
  std::vector<Matrix> kernel_;
};

inline CorrectorSolution solve_periodic_bvp(const Matrix& a, ForcingTerm b, double period,
                                            int panels = kDefaultPanels, int index = 1) {
  return CorrectorSolution(index, a, std::move(b), period, panels);
}

inline CorrectorSolution solve_periodic_bvp(const Matrix& a, ForcingTerm::Pointwise b,
                                            double period, int panels = kDefaultPanels,
                                            int index = 1) {
  return CorrectorSolution(index, a, ForcingTerm{std::move(b), {}}, period, panels);
}

namespace detail {

inline bool same_grid(const PeriodicGrid& a, const PeriodicGrid& b) {
  return a.panels() == b.panels() && a.period() == b.period();
}

/// d phi1 / dx at each of the given grid points, by central differences on
/// whole shifted grids.
inline std::vector<Matrix> corrector_jacobian_on_grid(const CorrectorSolution& phi,
                                                      const Vector& x, double offset) {
  const auto n = x.size();
  const auto panels = static_cast<std::size_t>(phi.grid().panels());
  std::vector<Matrix> jac(panels, Matrix(phi.A().rows(), n));
  Vector xp = x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double step = default_fd_step(x[k]);
    xp[k] = x[k] + step;
    const double up = xp[k];
    const auto plus = phi.on_grid(xp, offset);
    xp[k] = x[k] - step;
    const double down = xp[k];
    const auto minus = phi.on_grid(xp, offset);
    xp[k] = x[k];
    for (std::size_t j = 0; j < panels; ++j) jac[j].col(k) = (plus[j] - minus[j]) / (up - down);
  }
  return jac;
}

}  // namespace detail

/// Forcing b1 or b2 of the corrector problems:
///   b1 = g1(x,phi0,tau) - Dphi0 f1(x,phi0,tau)
///   b2 = g2(x,phi0,tau) - Dphi0 f2(x,phi0,tau) - Dx phi1 f1(x,phi0,tau) + Dw g1|phi0 phi1
inline ForcingTerm build_b(const OscillatorySystemSpec& spec, int index,
                           const CorrectorSolution* phi1 = nullptr) {
  spec.validate();
  auto sp = std::make_shared<const OscillatorySystemSpec>(spec);
  if (index == 1) {
    ForcingTerm b;
    b.at = [sp](const Vector& x, double tau) -> Vector {
      const Vector y0 = sp->phi0(x);
      return sp->eval_g1(x, y0, tau) - sp->dphi0(x) * sp->eval_f1(x, y0, tau);
    };
    b.on_grid = [sp](const Vector& x, double offset, const PeriodicGrid& grid) {
      const Vector y0 = sp->phi0(x);
      const Matrix d0 = sp->dphi0(x);
      std::vector<Vector> out;
      out.reserve(static_cast<std::size_t>(grid.panels()));
      for (int i = 0; i < grid.panels(); ++i) {
        const double tau = offset + grid.node(i);
        out.push_back(sp->eval_g1(x, y0, tau) - d0 * sp->eval_f1(x, y0, tau));
      }
      return out;
    };
    return b;
  }
  if (index != 2) throw ConfigurationError("build_b: index must be 1 or 2");
  if (phi1 == nullptr) throw DependencyError("build_b: b2 requires the first corrector phi1");

  auto c1 = std::make_shared<const CorrectorSolution>(*phi1);
  ForcingTerm b;
  b.at = [sp, c1](const Vector& x, double tau) -> Vector {
    const Vector y0 = sp->phi0(x);
    const Vector p1 = (*c1)(x, tau);
    const Matrix dp1 = jacobian_fd([&](const Vector& xx) { return (*c1)(xx, tau); }, x);
    return sp->eval_g2(x, y0, tau) - sp->dphi0(x) * sp->eval_f2(x, y0, tau) -
           dp1 * sp->eval_f1(x, y0, tau) + sp->dg1_dy(x, y0, tau) * p1;
  };
  b.on_grid = [sp, c1, at = b.at](const Vector& x, double offset, const PeriodicGrid& grid) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(grid.panels()));
    if (!detail::same_grid(grid, c1->grid())) {
      for (int i = 0; i < grid.panels(); ++i) out.push_back(at(x, offset + grid.node(i)));
      return out;
    }
    const Vector y0 = sp->phi0(x);
    const Matrix d0 = sp->dphi0(x);
    const auto p1 = c1->on_grid(x, offset);
    const auto dp1 = detail::corrector_jacobian_on_grid(*c1, x, offset);
    for (int i = 0; i < grid.panels(); ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const double tau = offset + grid.node(i);
      out.push_back(sp->eval_g2(x, y0, tau) - d0 * sp->eval_f2(x, y0, tau) -
                    dp1[ii] * sp->eval_f1(x, y0, tau) + sp->dg1_dy(x, y0, tau) * p1[ii]);
    }
    return out;
  };
  return b;
}

// ---------------------------------------------------------------------------
// Reduced and averaged systems

struct ReducedSystem {
  using Field = std::function<Vector(const Vector& x, double tau)>;
  /// Values at grid.node(j), j = 0 .. panels-1.
  using GridField = std::function<std::vector<Vector>(const Vector& x, const PeriodicGrid& grid)>;

  Field f1_tilde;
  Field f2_tilde;
  double T = 2.0 * M_PI;
  GridField f2_tilde_on_grid;  // optional fast path

  [[nodiscard]] std::vector<Vector> f2_grid(const Vector& x, const PeriodicGrid& grid) const {
    if (f2_tilde_on_grid) return f2_tilde_on_grid(x, grid);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(grid.panels()));
    for (int j = 0; j < grid.panels(); ++j) out.push_back(f2_tilde(x, grid.node(j)));
    return out;
  }
};

/// f1~(x,tau) = f1(x, phi0(x), tau),
/// f2~(x,tau) = f2(x, phi0(x), tau) + C(x, phi0(x), tau) phi1(x, tau).
inline ReducedSystem build_reduced(const OscillatorySystemSpec& spec, const CorrectorSolution& phi1) {
  spec.validate();
  auto sp = std::make_shared<const OscillatorySystemSpec>(spec);
  auto c1 = std::make_shared<const CorrectorSolution>(phi1);
  ReducedSystem r;
  r.T = spec.T;
  r.f1_tilde = [sp](const Vector& x, double tau) { return sp->eval_f1(x, sp->phi0(x), tau); };
  r.f2_tilde = [sp, c1](const Vector& x, double tau) -> Vector {
    const Vector y0 = sp->phi0(x);
    Vector out = sp->eval_f2(x, y0, tau);
    if (sp->f1 || sp->f1_y_jacobian) out += sp->df1_dy(x, y0, tau) * (*c1)(x, tau);
    return out;
  };
  r.f2_tilde_on_grid = [sp, c1, f2 = r.f2_tilde](const Vector& x, const PeriodicGrid& grid) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(grid.panels()));
    if (!detail::same_grid(grid, c1->grid())) {
      for (int j = 0; j < grid.panels(); ++j) out.push_back(f2(x, grid.node(j)));
      return out;
    }
    const Vector y0 = sp->phi0(x);
    const auto p1 = c1->on_grid(x, 0.0);
    const bool coupled = sp->f1 || sp->f1_y_jacobian;
    for (int j = 0; j < grid.panels(); ++j) {
      const double tau = grid.node(j);
      Vector v = sp->eval_f2(x, y0, tau);
      if (coupled) v += sp->df1_dy(x, y0, tau) * p1[static_cast<std::size_t>(j)];
      out.push_back(std::move(v));
    }
    return out;
  };
  return r;
}

/// Autonomous averaged field x -> fbar(x).
struct AveragedSystem {
  std::function<Vector(const Vector& x)> field;
  int panels = 0;                   // 0 for closed-form fields
  std::optional<double> fd_step;    // nullopt: coordinate-scaled default
  std::string origin = "numeric";

  [[nodiscard]] Vector operator()(const Vector& x) const { return field(x); }

  static AveragedSystem closed_form(std::function<Vector(const Vector&)> f) {
    return AveragedSystem{std::move(f), 0, std::nullopt, "closed-form"};
  }
};

struct AverageOptions {
  int panels = kDefaultPanels;
};

/// Second-order average of a reduced system by nested Simpson quadrature.
/// The inner integral int_0^t1 f1~ and its x-Jacobian are cumulative
/// quadratures on the shared grid; since differencing and quadrature are
/// both linear, the Jacobian of the inner integral equals the finite-difference
/// Jacobian of its quadrature.
inline Vector average_at(const ReducedSystem& reduced, const Vector& x, int panels) {
  const PeriodicGrid grid(reduced.T, panels);
  const auto nodes = static_cast<std::size_t>(panels) + 1;
  std::vector<Vector> v;
  std::vector<Matrix> dv;
  v.reserve(nodes);
  dv.reserve(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const double tau = grid.node(static_cast<int>(j));
    auto f = [&](const Vector& xx) { return reduced.f1_tilde(xx, tau); };
    v.push_back(f(x));
    dv.push_back(jacobian_fd(f, x));
  }
  const auto u = cumulative_simpson<Vector>(std::span<const Vector>(v), grid.step());
  const auto du = cumulative_simpson<Matrix>(std::span<const Matrix>(dv), grid.step());
  const auto f2 = reduced.f2_grid(x, grid);

  Vector acc = Vector::Zero(x.size());
  for (std::size_t j = 0; j < nodes; ++j) {
    const Vector bracket = dv[j] * u[j] - du[j] * v[j];
    const Vector& f2j = f2[j % static_cast<std::size_t>(panels)];
    acc += grid.weight(static_cast<int>(j)) * (f2j + 0.5 * bracket);
  }
  Vector out = acc / reduced.T;
  require_finite(out, "average");
  return out;
}

inline AveragedSystem average(const ReducedSystem& reduced, const AverageOptions& opt = {}) {
  (void)PeriodicGrid(reduced.T, opt.panels);  // validates the panel count up front
  AveragedSystem out;
  out.panels = opt.panels;
  out.field = [reduced, panels = opt.panels](const Vector& x) {
    return average_at(reduced, x, panels);
  };
  return out;
}

/// Full pipeline: phi1, reduced system, averaged field.
struct AveragingPipeline {
  CorrectorSolution phi1;
  ReducedSystem reduced;
  AveragedSystem averaged;
};

inline AveragingPipeline build_averaged(const OscillatorySystemSpec& spec,
                                        int panels = kDefaultPanels) {
  CorrectorSolution phi1 = solve_periodic_bvp(spec.A, build_b(spec, 1), spec.T, panels, 1);
  ReducedSystem reduced = build_reduced(spec, phi1);
  AveragedSystem averaged = average(reduced, {panels});
  return {std::move(phi1), std::move(reduced), std::move(averaged)};
}

// ---------------------------------------------------------------------------
// BVP residual

namespace detail {

/// Fourth-order central difference from samples at tau-2h, tau-h, tau+h, tau+2h.
inline Vector central_derivative(const Vector& m2, const Vector& m1, const Vector& p1,
                                 const Vector& p2, double h) {
  return (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
}

inline constexpr double kResidualStep = 1e-3;

}  // namespace detail

/// max_tau || d/dtau phi - A phi - b ||_inf + || phi(x,0) - phi(x,T) ||_inf over
/// `check_points` equally spaced tau.
inline double residual_bvp(const CorrectorFn& phi, const Matrix& a, const ForcingTerm& b,
                           double period, const Vector& x, int check_points = 64) {
  if (check_points < 1) throw ConfigurationError("residual_bvp: check_points must be >= 1");
  const double h = detail::kResidualStep;
  double worst = 0.0;
  for (int j = 0; j < check_points; ++j) {
    const double tau = period * j / check_points;
    const Vector d = detail::central_derivative(phi(x, tau - 2 * h), phi(x, tau - h),
                                                phi(x, tau + h), phi(x, tau + 2 * h), h);
    const Vector r = d - a * phi(x, tau) - b.at(x, tau);
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  const double gap = (phi(x, 0.0) - phi(x, period)).cwiseAbs().maxCoeff();
  return worst + gap;
}

/// Residual over every node of the corrector's own grid, using whole shifted
/// grids for the tau-derivative.
inline double residual_bvp(const CorrectorSolution& phi, const Matrix& a, const ForcingTerm& b,
                           double period, const Vector& x) {
  const double h = detail::kResidualStep;
  const auto m2 = phi.on_grid(x, -2 * h);
  const auto m1 = phi.on_grid(x, -h);
  const auto c0 = phi.on_grid(x, 0.0);
  const auto p1 = phi.on_grid(x, h);
  const auto p2 = phi.on_grid(x, 2 * h);
  const PeriodicGrid grid(period, phi.grid().panels());
  const auto bs = b.sample(x, 0.0, grid);
  double worst = 0.0;
  for (std::size_t j = 0; j < c0.size(); ++j) {
    const Vector d = detail::central_derivative(m2[j], m1[j], p1[j], p2[j], h);
    const Vector r = d - a * c0[j] - bs[j];
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  const double gap = (phi(x, 0.0) - phi(x, period)).cwiseAbs().maxCoeff();
  return worst + gap;
}

}  // namespace spavg
