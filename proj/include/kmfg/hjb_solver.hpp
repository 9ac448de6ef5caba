/// Backward solver for -dt u - Lap_v u + v . D_x u + H(D_v u) = F,
/// u(T) = G, marched in tau = T - t as Strang transport (velocity +v)
/// around [explicit monotone Hamiltonian + source, implicit v-diffusion].
///
/// Every factor of a step is monotone: transport is a convex combination
/// under its CFL bound, the implicit heat step has unit row sums, and the
/// Hamiltonian source stays monotone while dt * d * alpha <= h_v (alpha =
/// max sampled |H_p|; Godunov needs the same with a factor 2). Monotonicity
/// is what makes the discrete comparison principle and the bound
/// ||u||_inf <= ||G||_inf + T ||F||_inf exact rather than asymptotic, so
/// the solver enforces the source bound and rejects steps that break it.

#pragma once

#include <kmfg/hamiltonian.hpp>
#include <kmfg/kolmogorov_core.hpp>
#include <kmfg/phase_grid.hpp>

#include <string>
#include <vector>

namespace kmfg {

enum class HJBScheme { lax_friedrichs, upwind_godunov };

inline HJBScheme hjb_scheme_from_name(const std::string& s) {
  if (s == "lax_friedrichs") return HJBScheme::lax_friedrichs;
  if (s == "upwind_godunov") return HJBScheme::upwind_godunov;
  throw Error("unknown hjb scheme: " + s);
}

struct HJBProblem {
  PhaseGrid grid;
  Hamiltonian H{};
  SpaceTimeFieldD F_field;
  FieldD G_field;
  HJBScheme scheme = HJBScheme::lax_friedrichs;

  HJBProblem(const PhaseGrid& g, const Hamiltonian& ham,
             const SpaceTimeFieldD& F, const FieldD& G,
             HJBScheme sch = HJBScheme::lax_friedrichs)
      : grid(g), H(ham), F_field(F), G_field(G), scheme(sch) {
    if (!grid.same_geometry(F_field.grid) || !grid.same_geometry(G_field.grid))
      throw Error("HJBProblem: field grids disagree");
    if (int(F_field.slices.size()) != grid.n_t() + 1)
      throw Error("HJBProblem: F_field must carry n_t + 1 slices");
  }
};

namespace detail {

/// values with v-columns shifted by `off` cells along v-axis `axis`,
/// clamped at the walls (Neumann ghost).
template <typename Scalar>
Array2<Scalar> v_shift_clamped(const Array2<Scalar>& values,
                               const PhaseGrid& g, int axis, int off) {
  const int n = g.n_v();
  Array2<Scalar> out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    int j0, j1;
    if (g.d() == 1) {
      j0 = int(c);
      j1 = 0;
    } else {
      j0 = int(c / n);
      j1 = int(c % n);
    }
    int& ja = axis == 0 ? j0 : (g.d() == 1 ? j0 : j1);
    ja = std::min(n - 1, std::max(0, ja + off));
    const Eigen::Index src = g.d() == 1 ? j0 : Eigen::Index(j0) * n + j1;
    out.col(c) = values.col(src);
  }
  return out;
}

/// Replace the wall columns of a centered v-derivative with one-sided
/// differences.
template <typename Scalar>
void fix_gradient_walls(Array2<Scalar>& grad, const Array2<Scalar>& u,
                        const PhaseGrid& g, int axis) {
  const int n = g.n_v();
  const Scalar h = Scalar(g.h_v());
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    const int ja = g.d() == 1 ? int(c) : (axis == 0 ? int(c / n) : int(c % n));
    if (ja == 0) {
      const Eigen::Index cn = g.d() == 1 ? c + 1 : (axis == 0 ? c + n : c + 1);
      grad.col(c) = (u.col(cn) - u.col(c)) / h;
    } else if (ja == n - 1) {
      const Eigen::Index cp = g.d() == 1 ? c - 1 : (axis == 0 ? c - n : c - 1);
      grad.col(c) = (u.col(c) - u.col(cp)) / h;
    }
  }
}

}  // namespace detail

/// Centered v-gradient in the interior, one-sided at the walls; one
/// component field per v-axis. Exact on quadratics in the interior.
template <typename Scalar>
std::vector<Field<Scalar>> discrete_gradient_v(const Field<Scalar>& u) {
  const PhaseGrid& g = u.grid;
  const Scalar h = Scalar(g.h_v());
  std::vector<Field<Scalar>> out;
  for (int axis = 0; axis < g.d(); ++axis) {
    Field<Scalar> comp(g);
    Array2<Scalar> up = detail::v_shift_clamped(u.values, g, axis, +1);
    Array2<Scalar> dn = detail::v_shift_clamped(u.values, g, axis, -1);
    comp.values = (up - dn) / (2 * h);
    detail::fix_gradient_walls(comp.values, u.values, g, axis);
    out.push_back(std::move(comp));
  }
  return out;
}

namespace detail {

/// Monotone numerical Hamiltonian on one slice. Returns H-hat and stores
/// the dissipation bound alpha = max sampled |H_p|.
template <typename Scalar>
Array2<Scalar> numerical_hamiltonian(const Array2<Scalar>& u,
                                     const PhaseGrid& g, const Hamiltonian& H,
                                     HJBScheme scheme, double& alpha) {
  const Scalar h = Scalar(g.h_v());
  Array2<Scalar> s = Array2<Scalar>::Zero(u.rows(), u.cols());
  Array2<Scalar> diss = Array2<Scalar>::Zero(u.rows(), u.cols());

  if (scheme == HJBScheme::lax_friedrichs) {
    for (int axis = 0; axis < g.d(); ++axis) {
      Array2<Scalar> up = v_shift_clamped(u, g, axis, +1);
      Array2<Scalar> dn = v_shift_clamped(u, g, axis, -1);
      Array2<Scalar> q = (up - dn) / (2 * h);
      fix_gradient_walls(q, u, g, axis);
      s += q.square();
      diss += (up - 2 * u + dn) / (2 * h);
    }
  } else {
    for (int axis = 0; axis < g.d(); ++axis) {
      Array2<Scalar> up = v_shift_clamped(u, g, axis, +1);
      Array2<Scalar> dn = v_shift_clamped(u, g, axis, -1);
      Array2<Scalar> back = (u - dn) / h;  // zero at the lower wall
      Array2<Scalar> fwd = (up - u) / h;   // zero at the upper wall
      s += back.max(Scalar(0)).square() + fwd.min(Scalar(0)).square();
    }
  }

  // alpha from the same gradient samples: |H_p| = 2 g(s) sqrt(s)
  double a2 = 0;
  for (Eigen::Index r = 0; r < s.rows(); ++r)
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      const double ss = double(s(r, c));
      const double gp = 2.0 * H.gscale_sq(ss);
      a2 = std::max(a2, gp * gp * ss);
    }
  alpha = std::sqrt(a2);

  Array2<Scalar> hat = ham_value(H, s);
  if (scheme == HJBScheme::lax_friedrichs)
    hat -= Scalar(alpha) * diss;
  return hat;
}

}  // namespace detail

struct HJBSolveInfo {
  double max_alpha = 0;           // largest dissipation constant used
  double source_dt_admissible =   // tightest monotonicity bound met
      std::numeric_limits<double>::infinity();
};

/// Backward march over all time levels. Terminal slice is G exactly; each
/// step checks finiteness and aborts naming the offending time level.
inline SpaceTimeFieldD solve_hjb(const HJBProblem& prob,
                                 const OperatorConfig& op = {},
                                 HJBSolveInfo* info = nullptr) {
  const PhaseGrid& g = prob.grid;
  const double dt = g.dt();
  const int n_t = g.n_t();
  require_finite(prob.G_field.values, "solve_hjb terminal data");

  SpaceTimeFieldD u(g);
  u.slices[n_t] = prob.G_field.values;
  FieldD w(g);
  const double mono_factor =
      prob.scheme == HJBScheme::lax_friedrichs ? 1.0 : 2.0;

  for (int k = n_t - 1; k >= 0; --k) {
    w.values = u.slices[k + 1];
    transport_step(w, dt / 2, +1, op);

    double alpha = 0;
    Array2<double> hat = detail::numerical_hamiltonian(
        w.values, g, prob.H, prob.scheme, alpha);
    if (alpha > 0) {
      const double admissible = g.h_v() / (mono_factor * g.d() * alpha);
      if (info)
        info->source_dt_admissible =
            std::min(info->source_dt_admissible, admissible);
      if (dt > admissible * (1 + 1e-12))
        throw Error("Hamiltonian source CFL violated at time level " +
                    std::to_string(k) + ": dt=" + detail::fmt_g(dt) +
                    " exceeds admissible dt=" + detail::fmt_g(admissible));
      if (info) info->max_alpha = std::max(info->max_alpha, alpha);
    }
    Array2<double> f_mid =
        0.5 * (prob.F_field.slices[k] + prob.F_field.slices[k + 1]);
    w.values += dt * (f_mid - hat);
    if (!w.values.isFinite().all())
      throw Error("solve_hjb: non-finite values at time level " +
                  std::to_string(k) + " (t=" + detail::fmt_g(g.t_level(k)) +
                  ")");

    v_diffusion_drift_step(w, dt, VStepMode::hjb);
    transport_step(w, dt / 2, +1, op);

    if (!w.values.isFinite().all())
      throw Error("solve_hjb: non-finite values at time level " +
                  std::to_string(k) + " (t=" + detail::fmt_g(g.t_level(k)) +
                  ")");
    u.slices[k] = w.values;
  }
  return u;
}

struct HJBNormReport {
  double sup_u_l2 = 0;     // sup_t ||u(t)||_2
  double input_scale = 0;  // ||G||_2 + ||F||_2
  double ratio = 0;        // sup_u_l2 / input_scale (0 when inputs vanish)
  double u_h_l1 = 0;       // space-time L1 of u H(D_v u)
  double dv_u_l2 = 0;      // space-time L2 of D_v u
};

inline HJBNormReport hjb_norm_report(const HJBProblem& prob,
                                     const SpaceTimeFieldD& u) {
  const PhaseGrid& g = prob.grid;
  HJBNormReport rep;
  rep.sup_u_l2 = sup_t_lp(u, 2.0);
  rep.input_scale = lp_norm(prob.G_field, 2.0) + lp_norm(prob.F_field, 2.0);
  rep.ratio = rep.input_scale > 0 ? rep.sup_u_l2 / rep.input_scale : 0.0;

  double uh = 0, dv2 = 0;
  for (int k = 0; k <= g.n_t(); ++k) {
    FieldD slice(g);
    slice.values = u.slices[k];
    std::vector<FieldD> grad = discrete_gradient_v(slice);
    Array2<double> s = Array2<double>::Zero(slice.values.rows(),
                                            slice.values.cols());
    for (const auto& comp : grad) s += comp.values.square();
    const double wt = (k == 0 || k == g.n_t()) ? 0.5 : 1.0;
    uh += wt * pairwise_sum(
                   Array2<double>((slice.values * ham_value(prob.H, s)).abs()));
    dv2 += wt * pairwise_sum(s);
  }
  rep.u_h_l1 = uh * g.cell_volume() * g.dt();
  rep.dv_u_l2 = std::sqrt(dv2 * g.cell_volume() * g.dt());
  return rep;
}

/// Optimal feedback drift b = H_p(D_v u) per time level, one space-time
/// component per v-axis; this is the drift the forward equation consumes.
inline std::vector<SpaceTimeFieldD> feedback_drift(const SpaceTimeFieldD& u,
                                                   const Hamiltonian& H) {
  const PhaseGrid& g = u.grid;
  std::vector<SpaceTimeFieldD> b(std::size_t(g.d()), SpaceTimeFieldD(g));
  for (int k = 0; k <= g.n_t(); ++k) {
    FieldD slice(g);
    slice.values = u.slices[std::size_t(k)];
    std::vector<FieldD> grad = discrete_gradient_v(slice);
    Array2<double> s = Array2<double>::Zero(slice.values.rows(),
                                            slice.values.cols());
    for (const auto& comp : grad) s += comp.values.square();
    Array2<double> g2 = ham_gscale2(H, s);
    for (int a = 0; a < g.d(); ++a)
      b[std::size_t(a)].slices[std::size_t(k)] =
          g2 * grad[std::size_t(a)].values;
  }
  return b;
}

}  // namespace kmfg
