/// Split steps for the kinetic operator dt - Lap_v - v . D_x and its adjoint.
///
/// Forward (density) direction: dt m = Lap_v m + v . D_x m + div_v(m b),
/// so x-transport carries mass with velocity -v and the v-step is the
/// divergence-form flux dv(dv m + b m). Backward (value) direction marched in
/// tau = T - t: dtau w + v . D_x w = Lap_v w + ..., so transport velocity +v.
/// transport_step takes the sign explicitly; the two signs are exact matrix
/// transposes of each other column by column, which is what makes the
/// discrete duality pairing clean.
///
/// v-step (backward Euler):
///  - fp mode: Scharfetter-Gummel exponential-fitting fluxes
///    F_{j+1/2} = (1/h)[B(-w) m_{j+1} - B(w) m_j], w = b_face h,
///    B(z) = z/(e^z - 1). The system (I - dt A) has positive diagonal,
///    nonpositive off-diagonals and unit column sums: mass is conserved
///    exactly and the Thomas solve maps nonnegative data to nonnegative
///    data exactly in floating point (every operation is a sum or product
///    of nonnegatives).
///  - hjb mode: pure diffusion with no-flux walls; unit row sums give the
///    exact discrete maximum principle.
/// d = 2 uses per-axis sweeps (Lie splitting within the step).

#pragma once

#include <kmfg/phase_grid.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace kmfg {

enum class TransportScheme { upwind1, semi_lagrangian_spectral };
enum class VStepMode { fp, hjb };

struct OperatorConfig {
  TransportScheme transport_scheme = TransportScheme::upwind1;
  bool implicit_v_diffusion = true;
  double cfl_safety = 0.8;
};

inline TransportScheme transport_scheme_from_name(const std::string& s) {
  if (s == "upwind1") return TransportScheme::upwind1;
  if (s == "semi_lagrangian_spectral") return TransportScheme::semi_lagrangian_spectral;
  throw Error("unknown transport scheme: " + s);
}

struct CflReport {
  double dt_transport = 0;  // admissible transport step (inf for spectral)
  double dt_drift = 0;      // advisory accuracy limit for the drift, h_v / b_max
};

inline CflReport cfl_report(const PhaseGrid& g, double b_max,
                            const OperatorConfig& cfg) {
  CflReport r;
  r.dt_transport = cfg.transport_scheme == TransportScheme::upwind1
                       ? cfg.cfl_safety * g.h_x() / g.L_v()
                       : std::numeric_limits<double>::infinity();
  r.dt_drift = b_max > 0 ? cfg.cfl_safety * g.h_v() / b_max
                         : std::numeric_limits<double>::infinity();
  return r;
}

namespace detail {

inline std::string fmt_g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// B(z) = z / (e^z - 1), the exponential-fitting weight.
inline double bernoulli(double z) {
  if (std::abs(z) < 1e-5) return 1.0 - 0.5 * z + z * z / 12.0;
  return z / std::expm1(z);
}

/// Periodic shift indices along one x axis of the flattened row index.
inline std::vector<Eigen::Index> x_shift_perm(const PhaseGrid& g, int axis,
                                              int offset) {
  const int n = g.n_x();
  std::vector<Eigen::Index> perm(g.nx_cells());
  if (g.d() == 1) {
    for (int i = 0; i < n; ++i) perm[i] = ((i + offset) % n + n) % n;
    return perm;
  }
  for (int i0 = 0; i0 < n; ++i0)
    for (int i1 = 0; i1 < n; ++i1) {
      int j0 = i0, j1 = i1;
      if (axis == 0) j0 = ((i0 + offset) % n + n) % n;
      else j1 = ((i1 + offset) % n + n) % n;
      perm[i0 * n + i1] = Eigen::Index(j0) * n + j1;
    }
  return perm;
}

template <typename Scalar>
Array2<Scalar> gather_rows(const Array2<Scalar>& f,
                           const std::vector<Eigen::Index>& perm) {
  Array2<Scalar> out(f.rows(), f.cols());
  for (Eigen::Index r = 0; r < f.rows(); ++r) out.row(r) = f.row(perm[r]);
  return out;
}

/// One conservative upwind sweep along x-axis `axis` with per-column
/// velocities a(col); requires |a| dt / h_x <= 1.
template <typename Scalar>
void upwind_sweep(Array2<Scalar>& f, const PhaseGrid& g, int axis, double dt,
                  const Array1<double>& a) {
  const double h = g.h_x();
  Array1<Scalar> nu = (a * (dt / h)).template cast<Scalar>();
  Array1<Scalar> nup = nu.max(Scalar(0));
  Array1<Scalar> num = (-nu).max(Scalar(0));
  Array2<Scalar> up = gather_rows(f, x_shift_perm(g, axis, +1));
  Array2<Scalar> down = gather_rows(f, x_shift_perm(g, axis, -1));
  // velocity > 0: f - nu (f - f_down); velocity < 0: f + |nu| (f_up - f)
  f -= (f - down).rowwise() * nup.transpose();
  f += (up - f).rowwise() * num.transpose();
}

/// Exact spectral shift along x-axis `axis` with per-column velocities.
template <typename Scalar>
void spectral_sweep(Array2<Scalar>& f, const PhaseGrid& g, int axis, double dt,
                    const Array1<double>& a) {
  Eigen::FFT<double> fft;
  const int n = g.n_x();
  const double period = 2.0 * g.L_x();
  std::vector<double> line(n);
  std::vector<std::complex<double>> spec(n), shifted(n);
  const Eigen::Index blocks = g.d() == 1 ? 1 : g.n_x();
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const double vel = a[c];
    for (Eigen::Index blk = 0; blk < blocks; ++blk) {
      for (int i = 0; i < n; ++i) {
        const Eigen::Index r = (g.d() == 1) ? i
                               : (axis == 0 ? Eigen::Index(i) * n + blk
                                            : blk * n + i);
        line[i] = double(f(r, c));
      }
      fft.fwd(spec, line);
      for (int k = 0; k < n; ++k) {
        const int ks = (k <= n / 2) ? k : k - n;
        const double kk = 2.0 * 3.14159265358979323846 * ks / period;
        shifted[k] = spec[k] * std::polar(1.0, -kk * vel * dt);
      }
      fft.inv(line, shifted);
      for (int i = 0; i < n; ++i) {
        const Eigen::Index r = (g.d() == 1) ? i
                               : (axis == 0 ? Eigen::Index(i) * n + blk
                                            : blk * n + i);
        f(r, c) = Scalar(line[i]);
      }
    }
  }
}

}  // namespace detail

/// Advect every fixed-v slice along x by sign * v for time dt.
/// sign=-1 is the forward density direction, sign=+1 the backward value
/// direction. upwind1 enforces the CFL bound and names the admissible dt.
template <typename Scalar>
void transport_step(Field<Scalar>& f, double dt, int sign,
                    const OperatorConfig& cfg) {
  if (sign != 1 && sign != -1) throw Error("transport_step: sign must be +-1");
  if (dt < 0) throw Error("transport_step: dt must be >= 0");
  require_finite(f.values, "transport_step");
  const PhaseGrid& g = f.grid;
  if (cfg.transport_scheme == TransportScheme::upwind1) {
    const double admissible = cfg.cfl_safety * g.h_x() / g.L_v();
    if (dt > admissible * (1 + 1e-12))
      throw Error("transport CFL violated: dt=" + detail::fmt_g(dt) +
                  " exceeds admissible dt=" + detail::fmt_g(admissible));
  }
  for (int axis = 0; axis < g.d(); ++axis) {
    Array1<double> a(g.nv_cells());
    for (Eigen::Index c = 0; c < g.nv_cells(); ++c)
      a[c] = sign * g.v_center(c, axis);
    if (cfg.transport_scheme == TransportScheme::upwind1)
      detail::upwind_sweep(f.values, g, axis, dt, a);
    else
      detail::spectral_sweep(f.values, g, axis, dt, a);
  }
}

namespace detail {

/// Vectorized Thomas solve across rows: per row r the tridiagonal system
/// diag(r,j) x_j + lower(r,j) x_{j-1} + upper(r,j) x_{j+1} = rhs(r,j).
/// For M-matrix data (diag > 0, lower/upper <= 0) and nonnegative rhs the
/// result is nonnegative exactly in floating point.
template <typename Scalar>
void thomas_rows(const Array2<Scalar>& lower, const Array2<Scalar>& diag,
                 const Array2<Scalar>& upper, Array2<Scalar>& rhs) {
  const Eigen::Index n = diag.cols();
  Array2<Scalar> cp(diag.rows(), n);
  cp.col(0) = upper.col(0) / diag.col(0);
  rhs.col(0) /= diag.col(0);
  for (Eigen::Index j = 1; j < n; ++j) {
    Array1<Scalar> denom = diag.col(j) - lower.col(j) * cp.col(j - 1);
    cp.col(j) = upper.col(j) / denom;
    rhs.col(j) = (rhs.col(j) - lower.col(j) * rhs.col(j - 1)) / denom;
  }
  for (Eigen::Index j = n - 2; j >= 0; --j)
    rhs.col(j) -= cp.col(j) * rhs.col(j + 1);
}

/// Column index permutation for v-axis sweeps in d=2 (axis-major gather).
inline std::vector<Eigen::Index> v_axis_order(const PhaseGrid& g, int axis) {
  std::vector<Eigen::Index> order(g.nv_cells());
  const int n = g.n_v();
  if (g.d() == 1) {
    for (int j = 0; j < n; ++j) order[j] = j;
    return order;
  }
  Eigen::Index k = 0;
  if (axis == 0) {
    // lines vary j0 for fixed j1
    for (int j1 = 0; j1 < n; ++j1)
      for (int j0 = 0; j0 < n; ++j0) order[k++] = Eigen::Index(j0) * n + j1;
  } else {
    for (int j0 = 0; j0 < n; ++j0)
      for (int j1 = 0; j1 < n; ++j1) order[k++] = Eigen::Index(j0) * n + j1;
  }
  return order;
}

}  // namespace detail

/// One implicit v-step of size dt. mode fp solves the divergence-form
/// diffusion-drift flux with no-flux walls (exact mass, exact positivity);
/// mode hjb solves pure diffusion with no-flux walls (exact max principle,
/// drift enters elsewhere through the Hamiltonian). b holds one component
/// array per v-axis (cell values); it is ignored in hjb mode and may be
/// empty to mean zero drift.
template <typename Scalar>
void v_diffusion_drift_step(Field<Scalar>& f, double dt,
                            const std::vector<Array2<Scalar>>& b,
                            VStepMode mode) {
  if (dt < 0) throw Error("v_diffusion_drift_step: dt must be >= 0");
  if (dt == 0) return;
  require_finite(f.values, "v_diffusion_drift_step");
  const PhaseGrid& g = f.grid;
  if (mode == VStepMode::fp && !b.empty() && int(b.size()) != g.d())
    throw Error("v_diffusion_drift_step: drift needs one component per axis");
  const int n = g.n_v();
  const double h = g.h_v();
  const Scalar r = Scalar(dt / (h * h));

  for (int axis = 0; axis < g.d(); ++axis) {
    const auto order = detail::v_axis_order(g, axis);
    // gather columns into axis-contiguous order
    Array2<Scalar> work(f.values.rows(), f.values.cols());
    for (Eigen::Index c = 0; c < f.values.cols(); ++c)
      work.col(c) = f.values.col(order[c]);

    Array2<Scalar> lower = Array2<Scalar>::Zero(work.rows(), work.cols());
    Array2<Scalar> diag = Array2<Scalar>::Constant(work.rows(), work.cols(), 1);
    Array2<Scalar> upper = Array2<Scalar>::Zero(work.rows(), work.cols());

    const Eigen::Index lines = g.nv_cells() / n;
    for (Eigen::Index line = 0; line < lines; ++line) {
      const Eigen::Index base = line * n;
      for (int j = 0; j < n; ++j) {
        const Eigen::Index c = base + j;
        if (mode == VStepMode::hjb || b.empty()) {
          if (j < n - 1) {
            diag.col(c) += r;
            upper.col(c) = -r;
          }
          if (j > 0) {
            diag.col(c) += r;
            lower.col(c) = -r;
          }
        } else {
          // face weights w = b_face * h with b averaged across the face
          if (j < n - 1) {
            const Eigen::Index cn = base + j + 1;
            Array1<Scalar> w =
                Scalar(0.5) * Scalar(h) *
                (b[axis].col(order[c]) + b[axis].col(order[cn]));
            diag.col(c) += r * w.unaryExpr([](Scalar z) {
              return Scalar(detail::bernoulli(double(z)));
            });
            upper.col(c) = -r * (-w).unaryExpr([](Scalar z) {
              return Scalar(detail::bernoulli(double(z)));
            });
          }
          if (j > 0) {
            const Eigen::Index cp = base + j - 1;
            Array1<Scalar> w =
                Scalar(0.5) * Scalar(h) *
                (b[axis].col(order[cp]) + b[axis].col(order[c]));
            diag.col(c) += r * (-w).unaryExpr([](Scalar z) {
              return Scalar(detail::bernoulli(double(z)));
            });
            lower.col(c) = -r * w.unaryExpr([](Scalar z) {
              return Scalar(detail::bernoulli(double(z)));
            });
          }
        }
      }
      // solve this line's block for all rows at once
      Array2<Scalar> lo = lower.middleCols(base, n);
      Array2<Scalar> di = diag.middleCols(base, n);
      Array2<Scalar> up = upper.middleCols(base, n);
      Array2<Scalar> rhs = work.middleCols(base, n);
      detail::thomas_rows(lo, di, up, rhs);
      work.middleCols(base, n) = rhs;
    }

    for (Eigen::Index c = 0; c < f.values.cols(); ++c)
      f.values.col(order[c]) = work.col(c);
  }
}

template <typename Scalar>
void v_diffusion_drift_step(Field<Scalar>& f, double dt, VStepMode mode) {
  v_diffusion_drift_step(f, dt, std::vector<Array2<Scalar>>{}, mode);
}

/// Free-space fundamental solution density of dt - Lap_v - v . D_x at time t,
/// started from an isotropic Gaussian with spreads (sx, sv) centered at
/// (x0, v0) (per axis):
///   mean = (x0 - v0 t, v0),
///   Sxx = sx^2 + sv^2 t^2 + (2/3) t^3, Svv = sv^2 + 2t,
///   Sxv = -(sv^2 t + t^2).
/// The covariance sign follows the transport sign of the solved equation:
/// mass with positive v moves toward negative x.
inline double kolmogorov_density(double t, double x, double v, double sx,
                                 double sv, double x0 = 0, double v0 = 0) {
  const double Sxx = sx * sx + sv * sv * t * t + 2.0 * t * t * t / 3.0;
  const double Svv = sv * sv + 2.0 * t;
  const double Sxv = -(sv * sv * t + t * t);
  const double det = Sxx * Svv - Sxv * Sxv;
  const double dx = x - (x0 - v0 * t);
  const double dv = v - v0;
  const double q = (Svv * dx * dx - 2.0 * Sxv * dx * dv + Sxx * dv * dv) / det;
  return std::exp(-0.5 * q) / (2.0 * 3.14159265358979323846 * std::sqrt(det));
}

/// Exact solution sampled on the grid, with periodic x images (the dynamics
/// are x-periodic, so imaging in x is exact; the v walls are left free).
inline FieldD kolmogorov_exact(const PhaseGrid& g, double t, double sx,
                               double sv, double x0 = 0, double v0 = 0,
                               int n_images = 2) {
  FieldD out(g);
  for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
    for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
      double val = 1.0;
      for (int a = 0; a < g.d(); ++a) {
        double s = 0;
        for (int k = -n_images; k <= n_images; ++k)
          s += kolmogorov_density(t, g.x_center(r, a) + 2.0 * g.L_x() * k,
                                  g.v_center(c, a), sx, sv, x0, v0);
        val *= s;
      }
      out.values(r, c) = val;
    }
  return out;
}

}  // namespace kmfg
