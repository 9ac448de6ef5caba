/// Scalar reducers and named time series for every certified estimate:
/// mass/entropy/moment series, entropy-dissipation accounting, band-restricted
/// renormalization residuals, gain-norm and fractional-seminorm estimates, the
/// Lasry-Lions sign decomposition, the L1 energy ledger, and CSV/JSON export.
/// All reductions use fixed summation order, so reports are bit-reproducible
/// for a fixed manifest.

#pragma once

#include <kmfg/coupling.hpp>
#include <kmfg/fp_solver.hpp>
#include <kmfg/hjb_solver.hpp>

#include <unsupported/Eigen/FFT>

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace kmfg {

// ---------------------------------------------------------------------------
// exponents

struct GainExponents {
  int Q = 0;     // d + 2
  double q = 0;  // (Q+2)/(Q+1), for ||m |b|^2||_q
  double p = 0;  // (Q+2)/Q,     for ||m||_p
};

inline GainExponents gain_exponents(int d) {
  if (d < 1) throw Error("gain_exponents: d must be >= 1");
  GainExponents g;
  g.Q = d + 2;
  g.q = double(g.Q + 2) / double(g.Q + 1);
  g.p = double(g.Q + 2) / double(g.Q);
  return g;
}

// ---------------------------------------------------------------------------
// elementary reducers

/// integral of m log m with the convention 0 log 0 = 0; m must be >= 0
inline double entropy(const FieldD& m) {
  require_finite(m.values, "entropy");
  if (m.values.minCoeff() < 0) throw Error("entropy: negative density");
  Array2<double> e = m.values.unaryExpr(
      [](double x) { return x > 0 ? x * std::log(x) : 0.0; });
  return pairwise_sum(e) * m.grid.cell_volume();
}

inline std::vector<double> mass_series(const SpaceTimeFieldD& m) {
  std::vector<double> out;
  for (const auto& s : m.slices)
    out.push_back(integrate(FieldD(m.grid, s)));
  return out;
}

inline std::vector<double> entropy_series(const SpaceTimeFieldD& m) {
  std::vector<double> out;
  for (const auto& s : m.slices) out.push_back(entropy(FieldD(m.grid, s)));
  return out;
}

/// integral of |v|^(2k) m for k = 1 or 2
inline double v_moment(const FieldD& m, int k) {
  if (k != 1 && k != 2) throw Error("v_moment: k must be 1 or 2");
  const Array1<double> vw = m.grid.v_sq_weights();
  double s = 0;
  for (Eigen::Index c = 0; c < m.values.cols(); ++c)
    s += std::pow(vw[c], k) *
         pairwise_sum(m.values.col(c).data(), m.values.rows());
  return s * m.grid.cell_volume();
}

inline std::vector<double> v_moment_series(const SpaceTimeFieldD& m, int k) {
  std::vector<double> out;
  for (const auto& s : m.slices)
    out.push_back(v_moment(FieldD(m.grid, s), k));
  return out;
}

/// mass outside the centered Euclidean ball of radius R in (x, v)
inline double tail_mass(const FieldD& m, double R) {
  const Array1<double> xw = m.grid.x_sq_weights();
  const Array1<double> vw = m.grid.v_sq_weights();
  double s = 0;
  for (Eigen::Index r = 0; r < m.values.rows(); ++r)
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      if (xw[r] + vw[c] > R * R) s += m.values(r, c);
  return s * m.grid.cell_volume();
}

inline double sup_tail_mass(const SpaceTimeFieldD& m, double R) {
  double s = 0;
  for (const auto& sl : m.slices)
    s = std::max(s, tail_mass(FieldD(m.grid, sl), R));
  return s;
}

/// C/R^2 tail certificate: C fitted at R=2, then tested at R=3, 4.
struct TailReport {
  double C = 0;
  double margin_r3 = 0;  // (C/9) - sup tail(3), >= 0 when the law holds
  double margin_r4 = 0;
  bool pass = false;
};

inline TailReport tail_report(const SpaceTimeFieldD& m) {
  TailReport rep;
  rep.C = 4.0 * sup_tail_mass(m, 2.0);
  rep.margin_r3 = rep.C / 9.0 - sup_tail_mass(m, 3.0);
  rep.margin_r4 = rep.C / 16.0 - sup_tail_mass(m, 4.0);
  rep.pass = rep.margin_r3 >= 0 && rep.margin_r4 >= 0;
  return rep;
}

/// squared L2 norm of D_v sqrt(m + 1e-12), summed over v-axes; the
/// vacuum floor keeps the quotient |D_v m|^2 / m finite at m = 0
inline double sqrt_gradient(const FieldD& m) {
  if (m.values.minCoeff() < 0) throw Error("sqrt_gradient: negative density");
  FieldD root(m.grid);
  root.values = (m.values + 1e-12).sqrt();
  double s = 0;
  for (const FieldD& gcomp : discrete_gradient_v(root))
    s += pairwise_sum(Array2<double>(gcomp.values.square()));
  return s * m.grid.cell_volume();
}

inline std::vector<double> sqrt_gradient_series(const SpaceTimeFieldD& m) {
  std::vector<double> out;
  for (const auto& s : m.slices)
    out.push_back(sqrt_gradient(FieldD(m.grid, s)));
  return out;
}

/// integral of m |b|^2 on one time slice
inline double drift_energy(const FieldD& m,
                           const std::vector<Array2<double>>& b_slices) {
  Array2<double> bsq = Array2<double>::Zero(m.values.rows(), m.values.cols());
  for (const auto& comp : b_slices) bsq += comp.square();
  return pairwise_sum(Array2<double>(m.values * bsq)) * m.grid.cell_volume();
}

inline std::vector<double> drift_energy_series(
    const SpaceTimeFieldD& m, const std::vector<SpaceTimeFieldD>& b) {
  std::vector<double> out;
  std::vector<Array2<double>> slice(b.size());
  for (std::size_t k = 0; k < m.slices.size(); ++k) {
    for (std::size_t a = 0; a < b.size(); ++a) slice[a] = b[a].slices[k];
    out.push_back(drift_energy(FieldD(m.grid, m.slices[k]), slice));
  }
  return out;
}

inline double trapezoid_total(const std::vector<double>& series, double dt) {
  if (series.size() < 2) return 0;
  double s = 0.5 * (series.front() + series.back());
  for (std::size_t k = 1; k + 1 < series.size(); ++k) s += series[k];
  return s * dt;
}

inline std::vector<double> boundary_leakage_series(const SpaceTimeFieldD& m) {
  std::vector<double> out;
  for (const auto& s : m.slices) out.push_back(detail::wall_mass(s, m.grid));
  return out;
}

// ---------------------------------------------------------------------------
// entropy dissipation accounting

/// sup_t int m log m <= int m0 log m0 + 1/2 ||m |b|^2||_1 + 1/2 I_v(m),
/// with I_v = 4 ||D_v sqrt m||_2^2 the velocity Fisher information and 5%
/// slack on the right-hand scale.
struct EntropyReport {
  double lhs_sup = 0;
  double initial = 0;
  double drift_term = 0;   // 1/2 ||m |b|^2||_1 in space-time
  double fisher_term = 0;  // 1/2 * 4 ||D_v sqrt m||^2 in space-time
  double rhs = 0;
  double slack = 0;
  bool pass = false;
};

inline EntropyReport entropy_report(const SpaceTimeFieldD& m,
                                    const std::vector<SpaceTimeFieldD>& b) {
  EntropyReport rep;
  const std::vector<double> ent = entropy_series(m);
  rep.lhs_sup = *std::max_element(ent.begin(), ent.end());
  rep.initial = ent.front();
  rep.drift_term =
      0.5 * trapezoid_total(drift_energy_series(m, b), m.grid.dt());
  rep.fisher_term =
      2.0 * trapezoid_total(sqrt_gradient_series(m), m.grid.dt());
  rep.rhs = rep.initial + rep.drift_term + rep.fisher_term;
  rep.slack = 0.05 * std::max(1.0, std::abs(rep.rhs));
  rep.pass = rep.lhs_sup <= rep.rhs + rep.slack;
  return rep;
}

// ---------------------------------------------------------------------------
// moment growth envelope

/// least-squares exponent B on log s(t), then A chosen so s(t) <= A e^{Bt}
/// holds with equality at the binding time level
struct MomentFit {
  double A = 0;
  double B = 0;
};

inline MomentFit moment_growth_fit(const std::vector<double>& times,
                                   const std::vector<double>& values) {
  if (times.size() != values.size() || times.size() < 2)
    throw Error("moment_growth_fit: need matching series, length >= 2");
  const std::size_t n = times.size();
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(values[k] > 0))
      throw Error("moment_growth_fit: values must be positive");
    const double y = std::log(values[k]);
    st += times[k];
    sy += y;
    stt += times[k] * times[k];
    sty += times[k] * y;
  }
  MomentFit fit;
  const double det = double(n) * stt - st * st;
  fit.B = det != 0 ? (double(n) * sty - st * sy) / det : 0.0;
  double loga = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k)
    loga = std::max(loga, std::log(values[k]) - fit.B * times[k]);
  fit.A = std::exp(loga);
  return fit;
}

// ---------------------------------------------------------------------------
// renormalization residuals

/// (1/n) integral of |D_v f|^2 over the cells with n < f < 2n (strict)
inline double renorm_residual(const FieldD& f, double n) {
  if (n <= 0) throw Error("renorm_residual: level must be positive");
  require_finite(f.values, "renorm_residual");
  std::vector<FieldD> grad = discrete_gradient_v(f);
  Array2<double> gsq =
      Array2<double>::Zero(f.values.rows(), f.values.cols());
  for (const auto& comp : grad) gsq += comp.values.square();
  Array2<double> band =
      ((f.values > n) && (f.values < 2 * n)).cast<double>();
  return pairwise_sum(Array2<double>(band * gsq)) * f.grid.cell_volume() / n;
}

/// space-time version, trapezoid in t
inline double renorm_residual(const SpaceTimeFieldD& f, double n) {
  double s = 0;
  const int n_t = f.grid.n_t();
  for (int k = 0; k <= n_t; ++k) {
    const double w = (k == 0 || k == n_t) ? 0.5 : 1.0;
    s += w * renorm_residual(FieldD(f.grid, f.slices[k]), n);
  }
  return s * f.grid.dt();
}

// ---------------------------------------------------------------------------
// gain norms

struct GainNorms {
  double m_norm = 0;      // ||m||_p,      p = (Q+2)/Q
  double drift_norm = 0;  // ||m |b|^2||_q, q = (Q+2)/(Q+1)
};

inline GainNorms gain_norms(const SpaceTimeFieldD& m,
                            const std::vector<SpaceTimeFieldD>& b) {
  const GainExponents ge = gain_exponents(m.grid.d());
  GainNorms gn;
  gn.m_norm = lp_norm(m, ge.p);
  SpaceTimeFieldD mb2(m.grid);
  for (std::size_t k = 0; k < m.slices.size(); ++k) {
    Array2<double> bsq =
        Array2<double>::Zero(m.slices[k].rows(), m.slices[k].cols());
    for (const auto& comp : b) bsq += comp.slices[k].square();
    mb2.slices[k] = m.slices[k] * bsq;
  }
  gn.drift_norm = lp_norm(mb2, ge.q);
  return gn;
}

// ---------------------------------------------------------------------------
// spectral fractional seminorms

/// periodic x-axis seminorm: [f]^2 = sum over x-lines of
/// 2 L_x * sum_k |k pi / L_x|^(2s) |c_k|^2 * (transverse cell measure)
inline double fractional_x_seminorm(const FieldD& f, double s) {
  if (!(s > 0 && s < 1))
    throw Error("fractional_x_seminorm: s must lie in (0, 1)");
  require_finite(f.values, "fractional_x_seminorm");
  const PhaseGrid& g = f.grid;
  const int n = g.n_x();
  const double Lx = g.L_x();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq(n);
  std::vector<double> line(n);
  // transverse measure: remaining x-axes and all v-axes
  const double transverse = g.cell_volume() / g.h_x();
  double acc = 0;
  const Eigen::Index n_lines = g.nx_cells() / n;
  for (int axis = 0; axis < g.d(); ++axis) {
    const Eigen::Index stride = axis == 0 ? n_lines : 1;
    for (Eigen::Index l = 0; l < n_lines; ++l) {
      const Eigen::Index base = axis == 0 ? l : l * n;
      for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
        for (int i = 0; i < n; ++i) line[std::size_t(i)] =
            f.values(base + stride * i, c);
        fft.fwd(freq, line);
        for (int i = 0; i < n; ++i) {
          const int k = i <= n / 2 ? i : i - n;
          const double w = std::pow(std::abs(k) * M_PI / Lx, 2 * s);
          acc += w * std::norm(freq[std::size_t(i)]) / double(n) / double(n);
        }
      }
    }
  }
  return std::sqrt(2.0 * Lx * acc * transverse);
}

/// space-time estimate: L2-in-t of per-slice seminorms
inline double fractional_x_seminorm(const SpaceTimeFieldD& f, double s) {
  std::vector<double> per;
  for (const auto& sl : f.slices) {
    const double v = fractional_x_seminorm(FieldD(f.grid, sl), s);
    per.push_back(v * v);
  }
  return std::sqrt(trapezoid_total(per, f.grid.dt()));
}

/// time-axis seminorm of a scalar series via even reflection to a circle
inline double fractional_t_seminorm(const std::vector<double>& series,
                                    double T, double s) {
  const int n_t = int(series.size()) - 1;
  if (n_t < 1) throw Error("fractional_t_seminorm: need at least two samples");
  if (!(T > 0)) throw Error("fractional_t_seminorm: T must be positive");
  const int N = 2 * n_t;
  std::vector<double> z(static_cast<std::size_t>(N));
  for (int k = 0; k <= n_t; ++k) z[std::size_t(k)] = series[std::size_t(k)];
  for (int k = 1; k < n_t; ++k)
    z[std::size_t(2 * n_t - k)] = series[std::size_t(k)];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq(static_cast<std::size_t>(N));
  fft.fwd(freq, z);
  double acc = 0;
  for (int i = 0; i < N; ++i) {
    const int k = i <= N / 2 ? i : i - N;
    acc += std::pow(std::abs(k) * M_PI / T, 2 * s) *
           std::norm(freq[std::size_t(i)]) / double(N) / double(N);
  }
  return std::sqrt(T * acc);
}

// ---------------------------------------------------------------------------
// Lasry-Lions decomposition

struct LasryLions {
  double I = 0;    // terminal pairing of G differences
  double II = 0;   // running pairing of F differences
  double III = 0;  // symmetric convexity bracket weighted by m, m'
};

namespace detail {

inline Array2<double> convexity_bracket(const Array2<double>& u_at,
                                        const Array2<double>& u_other,
                                        const PhaseGrid& g,
                                        const Hamiltonian& H) {
  std::vector<FieldD> ga = discrete_gradient_v(FieldD(g, u_at));
  std::vector<FieldD> gb = discrete_gradient_v(FieldD(g, u_other));
  Array2<double> sa = Array2<double>::Zero(u_at.rows(), u_at.cols());
  Array2<double> sb = sa;
  for (int a = 0; a < g.d(); ++a) {
    sa += ga[std::size_t(a)].values.square();
    sb += gb[std::size_t(a)].values.square();
  }
  // H(Du') - H(Du) - (Du' - Du) . H_p(Du), with H_p = 2 gscale(s) Du
  Array2<double> dot = Array2<double>::Zero(u_at.rows(), u_at.cols());
  for (int a = 0; a < g.d(); ++a)
    dot += (gb[std::size_t(a)].values - ga[std::size_t(a)].values) *
           ga[std::size_t(a)].values;
  return ham_value(H, sb) - ham_value(H, sa) - ham_gscale2(H, sa) * dot;
}

}  // namespace detail

inline LasryLions lasry_lions_terms(const SpaceTimeFieldD& u,
                                    const SpaceTimeFieldD& m,
                                    const SpaceTimeFieldD& u2,
                                    const SpaceTimeFieldD& m2,
                                    const Coupling& F_coupling,
                                    const Coupling& G_coupling,
                                    const Hamiltonian& H) {
  const PhaseGrid& g = u.grid;
  if (!g.same_geometry(m.grid) || !g.same_geometry(u2.grid) ||
      !g.same_geometry(m2.grid))
    throw Error("lasry_lions_terms: grids disagree");
  const double vol = g.cell_volume();
  const int n_t = g.n_t();
  LasryLions ll;

  {
    FieldD a(g, m.slices[std::size_t(n_t)]);
    FieldD b2(g, m2.slices[std::size_t(n_t)]);
    Array2<double> dG =
        G_coupling.eval(a).values - G_coupling.eval(b2).values;
    ll.I = pairwise_sum(Array2<double>(dG * (a.values - b2.values))) * vol;
  }
  for (int k = 0; k <= n_t; ++k) {
    const double w = (k == 0 || k == n_t) ? 0.5 : 1.0;
    FieldD a(g, m.slices[std::size_t(k)]);
    FieldD b2(g, m2.slices[std::size_t(k)]);
    Array2<double> dF =
        F_coupling.eval(a).values - F_coupling.eval(b2).values;
    ll.II += w * pairwise_sum(Array2<double>(dF * (a.values - b2.values)));

    Array2<double> br1 = detail::convexity_bracket(
        u.slices[std::size_t(k)], u2.slices[std::size_t(k)], g, H);
    Array2<double> br2 = detail::convexity_bracket(
        u2.slices[std::size_t(k)], u.slices[std::size_t(k)], g, H);
    ll.III += w * pairwise_sum(Array2<double>(m.slices[std::size_t(k)] * br1 +
                                              m2.slices[std::size_t(k)] * br2));
  }
  ll.II *= vol * g.dt();
  ll.III *= vol * g.dt();
  return ll;
}

// ---------------------------------------------------------------------------
// L1 energy ledger

struct L1Ledger {
  double sup_u = 0;         // sup_t ||u(t)||_1
  double H_of_Du = 0;       // ||H(D_v u)||_1 in space-time
  double F_of_m = 0;        // ||F(.,m)||_1 in space-time
  double F_m = 0;           // ||F(.,m) m||_1 in space-time
  double G_of_mT = 0;       // ||G(m(T))||_1
  double G_mT = 0;          // ||G(m(T)) m(T)||_1
  double drift_energy = 0;  // ||m |H_p(D_v u)|^2||_1 in space-time
  double chain_lhs = 0;     // sup_u + H_of_Du
  double chain_rhs = 0;     // F_of_m + G_of_mT + 5% slack
  bool chain_pass = false;
};

inline L1Ledger l1_ledger(const SpaceTimeFieldD& u, const SpaceTimeFieldD& m,
                          const Coupling& F_coupling,
                          const Coupling& G_coupling, const Hamiltonian& H) {
  const PhaseGrid& g = u.grid;
  if (!g.same_geometry(m.grid)) throw Error("l1_ledger: grids disagree");
  const double vol = g.cell_volume();
  const int n_t = g.n_t();
  L1Ledger led;
  double h_acc = 0, f_acc = 0, fm_acc = 0, de_acc = 0;
  for (int k = 0; k <= n_t; ++k) {
    const double w = (k == 0 || k == n_t) ? 0.5 : 1.0;
    const Array2<double>& uk = u.slices[std::size_t(k)];
    const Array2<double>& mk = m.slices[std::size_t(k)];
    led.sup_u = std::max(led.sup_u, pairwise_sum(Array2<double>(uk.abs())) * vol);

    std::vector<FieldD> gr = discrete_gradient_v(FieldD(g, uk));
    Array2<double> s = Array2<double>::Zero(uk.rows(), uk.cols());
    for (int a = 0; a < g.d(); ++a) s += gr[std::size_t(a)].values.square();
    h_acc += w * pairwise_sum(Array2<double>(ham_value(H, s).abs()));
    // |H_p|^2 = (2 gscale)^2 |Du|^2
    de_acc += w * pairwise_sum(Array2<double>(
                      mk * ham_gscale2(H, s).square() * s));

    Array2<double> Fk = F_coupling.eval(FieldD(g, mk)).values;
    f_acc += w * pairwise_sum(Array2<double>(Fk.abs()));
    fm_acc += w * pairwise_sum(Array2<double>((Fk * mk).abs()));
  }
  led.H_of_Du = h_acc * vol * g.dt();
  led.F_of_m = f_acc * vol * g.dt();
  led.F_m = fm_acc * vol * g.dt();
  led.drift_energy = de_acc * vol * g.dt();
  FieldD mT(g, m.slices[std::size_t(n_t)]);
  Array2<double> GT = G_coupling.eval(mT).values;
  led.G_of_mT = pairwise_sum(Array2<double>(GT.abs())) * vol;
  led.G_mT = pairwise_sum(Array2<double>((GT * mT.values).abs())) * vol;
  led.chain_lhs = led.sup_u + led.H_of_Du;
  led.chain_rhs = led.F_of_m + led.G_of_mT +
                  0.05 * std::max(1.0, led.F_of_m + led.G_of_mT);
  led.chain_pass = led.chain_lhs <= led.chain_rhs;
  return led;
}

// ---------------------------------------------------------------------------
// regularity norms

struct RegularityReport {
  double sup_dx_m = 0;  // sup_t ||D_x m(t)||_2
  double sup_dv_m = 0;  // sup_t ||D_v m(t)||_2
  double dvv_l2 = 0;    // ||D^2_vv m||_2 in space-time
  double dvx_l2 = 0;    // ||D_v D_x m||_2 in space-time
};

namespace detail {

inline Array2<double> dx_centered(const Array2<double>& f, const PhaseGrid& g,
                                  int axis) {
  return (gather_rows(f, x_shift_perm(g, axis, 1)) -
          gather_rows(f, x_shift_perm(g, axis, -1))) /
         (2 * g.h_x());
}

}  // namespace detail

inline RegularityReport regularity_report(const SpaceTimeFieldD& m) {
  const PhaseGrid& g = m.grid;
  RegularityReport rep;
  const double vol = g.cell_volume();
  double dvv_acc = 0, dvx_acc = 0;
  const int n_t = g.n_t();
  for (int k = 0; k <= n_t; ++k) {
    const double w = (k == 0 || k == n_t) ? 0.5 : 1.0;
    const Array2<double>& mk = m.slices[std::size_t(k)];
    double dx2 = 0, dv2 = 0;
    for (int a = 0; a < g.d(); ++a)
      dx2 += pairwise_sum(
          Array2<double>(detail::dx_centered(mk, g, a).square()));
    std::vector<FieldD> gr = discrete_gradient_v(FieldD(g, mk));
    for (int a = 0; a < g.d(); ++a) {
      dv2 += pairwise_sum(Array2<double>(gr[std::size_t(a)].values.square()));
      // second v-difference with reflected walls
      Array2<double> up =
          detail::v_shift_clamped(gr[std::size_t(a)].values, g, a, 1);
      Array2<double> dn =
          detail::v_shift_clamped(gr[std::size_t(a)].values, g, a, -1);
      Array2<double> dvv = (up - dn) / (2 * g.h_v());
      dvv_acc += w * pairwise_sum(Array2<double>(dvv.square()));
      for (int ax = 0; ax < g.d(); ++ax)
        dvx_acc += w * pairwise_sum(Array2<double>(
                           detail::dx_centered(gr[std::size_t(a)].values, g, ax)
                               .square()));
    }
    rep.sup_dx_m = std::max(rep.sup_dx_m, std::sqrt(dx2 * vol));
    rep.sup_dv_m = std::max(rep.sup_dv_m, std::sqrt(dv2 * vol));
  }
  rep.dvv_l2 = std::sqrt(dvv_acc * vol * g.dt());
  rep.dvx_l2 = std::sqrt(dvx_acc * vol * g.dt());
  return rep;
}

// ---------------------------------------------------------------------------
// duality identity

/// |LHS - RHS| of the energy identity
///   int u(T) m(T) + iint m [H_p(D_v u).D_v u - H(D_v u)] + iint F(m) m
///     = int m0 u(0),
/// by grid quadrature with the trapezoid rule in time. m0 defaults to the
/// first slice of m (exact for any forward-solved density); pass it
/// explicitly to audit against independent initial data. Invariant under
/// u -> u + const since both endpoint pairings shift by the same unit mass.
inline double duality_gap(const SpaceTimeFieldD& u, const SpaceTimeFieldD& m,
                          const Coupling& F_coupling, const Hamiltonian& H,
                          const Array2<double>* m0 = nullptr) {
  const PhaseGrid& g = u.grid;
  if (!g.same_geometry(m.grid)) throw Error("duality_gap: grids disagree");
  const double vol = g.cell_volume();
  const int n_t = g.n_t();
  const Array2<double>& init = m0 ? *m0 : m.slices[0];

  const double terminal =
      pairwise_sum(Array2<double>(u.slices[std::size_t(n_t)] *
                                  m.slices[std::size_t(n_t)])) *
      vol;
  const double initial = pairwise_sum(Array2<double>(init * u.slices[0])) * vol;

  SpaceTimeFieldD Fm = F_coupling.eval(m);
  std::vector<double> excess_per, coupling_per;
  for (int k = 0; k <= n_t; ++k) {
    const auto ku = std::size_t(k);
    std::vector<FieldD> gr = discrete_gradient_v(FieldD(g, u.slices[ku]));
    Array2<double> sq = gr[0].values.square();
    for (int ax = 1; ax < g.d(); ++ax)
      sq += gr[std::size_t(ax)].values.square();
    excess_per.push_back(
        pairwise_sum(Array2<double>(m.slices[ku] * ham_excess(H, sq))) * vol);
    coupling_per.push_back(
        pairwise_sum(Array2<double>(Fm.slices[ku] * m.slices[ku])) * vol);
  }
  const double running = trapezoid_total(excess_per, g.dt()) +
                         trapezoid_total(coupling_per, g.dt());
  return std::abs(terminal + running - initial);
}

// ---------------------------------------------------------------------------
// report assembly and export

struct DiagnosticsReport {
  std::vector<double> times;
  std::vector<double> mass;
  std::vector<double> entropy;
  std::vector<double> moment_v2;
  std::vector<double> moment_v4;
  std::vector<double> drift_energy;
  std::vector<double> sqrt_gradient;
  std::vector<double> boundary_leakage;

  double drift_energy_total = 0;
  double sqrt_gradient_total = 0;
  double duality_gap = 0;
  std::vector<double> renorm_levels;  // the n values
  std::vector<double> renorm_fp;      // residuals on m
  std::vector<double> renorm_hjb;     // residuals on u
  LevelSequence de_giorgi;
  GainNorms gain;
  double fractional_x = 0;
  LasryLions lasry;
  L1Ledger ledger;
  RegularityReport regularity;
  EntropyReport entropy_check;
  TailReport tail;
  MomentFit v4_fit;
};

struct DiagnosticsOptions {
  std::vector<double> renorm_levels = {2.0, 4.0, 8.0};
  int de_giorgi_K = 6;
  double de_giorgi_scale = 1.0;
  double fractional_s = 1.0 / 3.0;
};

inline DiagnosticsReport assemble_diagnostics(
    const SpaceTimeFieldD& u, const SpaceTimeFieldD& m,
    const std::vector<SpaceTimeFieldD>& b, const Coupling& F_coupling,
    const Coupling& G_coupling, const Hamiltonian& H,
    const DiagnosticsOptions& opt = {}) {
  const PhaseGrid& g = m.grid;
  DiagnosticsReport rep;
  for (int k = 0; k <= g.n_t(); ++k) rep.times.push_back(g.t_level(k));
  rep.mass = mass_series(m);
  rep.entropy = entropy_series(m);
  rep.moment_v2 = v_moment_series(m, 1);
  rep.moment_v4 = v_moment_series(m, 2);
  rep.drift_energy = drift_energy_series(m, b);
  rep.sqrt_gradient = sqrt_gradient_series(m);
  rep.boundary_leakage = boundary_leakage_series(m);
  rep.drift_energy_total = trapezoid_total(rep.drift_energy, g.dt());
  rep.sqrt_gradient_total = trapezoid_total(rep.sqrt_gradient, g.dt());
  rep.renorm_levels = opt.renorm_levels;
  for (double n : opt.renorm_levels) {
    rep.renorm_fp.push_back(renorm_residual(m, n));
    rep.renorm_hjb.push_back(renorm_residual(u, n));
  }
  rep.de_giorgi = de_giorgi_levels(m, opt.de_giorgi_K, opt.de_giorgi_scale);
  rep.gain = gain_norms(m, b);
  rep.fractional_x = fractional_x_seminorm(m, opt.fractional_s);
  rep.duality_gap = duality_gap(u, m, F_coupling, H);
  rep.ledger = l1_ledger(u, m, F_coupling, G_coupling, H);
  rep.regularity = regularity_report(m);
  rep.entropy_check = entropy_report(m, b);
  rep.tail = tail_report(m);
  rep.v4_fit = moment_growth_fit(rep.times, rep.moment_v4);
  return rep;
}

inline void write_series_csv(const std::string& path, const char* index_label,
                             const std::vector<double>& index,
                             const std::vector<double>& values) {
  if (index.size() != values.size())
    throw Error("write_series_csv: index/value lengths disagree");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("write_series_csv: cannot open " + path);
  std::fprintf(f, "%s,value\n", index_label);
  for (std::size_t k = 0; k < index.size(); ++k)
    std::fprintf(f, "%.17g,%.17g\n", index[k], values[k]);
  std::fclose(f);
}

inline nlohmann::json to_json(const DiagnosticsReport& rep) {
  nlohmann::json j;
  j["duality_gap"] = rep.duality_gap;
  j["drift_energy_total"] = rep.drift_energy_total;
  j["sqrt_gradient_total"] = rep.sqrt_gradient_total;
  j["renorm_levels"] = rep.renorm_levels;
  j["renorm_fp"] = rep.renorm_fp;
  j["renorm_hjb"] = rep.renorm_hjb;
  j["gain_m_norm"] = rep.gain.m_norm;
  j["gain_drift_norm"] = rep.gain.drift_norm;
  j["fractional_x"] = rep.fractional_x;
  j["lasry_lions"] = {rep.lasry.I, rep.lasry.II, rep.lasry.III};
  j["l1_ledger"] = {{"sup_u", rep.ledger.sup_u},
                    {"H_of_Du", rep.ledger.H_of_Du},
                    {"F_of_m", rep.ledger.F_of_m},
                    {"F_m", rep.ledger.F_m},
                    {"G_of_mT", rep.ledger.G_of_mT},
                    {"G_mT", rep.ledger.G_mT},
                    {"drift_energy", rep.ledger.drift_energy},
                    {"chain_pass", rep.ledger.chain_pass}};
  j["regularity"] = {{"sup_dx_m", rep.regularity.sup_dx_m},
                     {"sup_dv_m", rep.regularity.sup_dv_m},
                     {"dvv_l2", rep.regularity.dvv_l2},
                     {"dvx_l2", rep.regularity.dvx_l2}};
  j["entropy_check"] = {{"lhs_sup", rep.entropy_check.lhs_sup},
                        {"rhs", rep.entropy_check.rhs},
                        {"pass", rep.entropy_check.pass}};
  j["tail"] = {{"C", rep.tail.C},
               {"margin_r3", rep.tail.margin_r3},
               {"margin_r4", rep.tail.margin_r4},
               {"pass", rep.tail.pass}};
  j["de_giorgi_alpha"] = rep.de_giorgi.alpha;
  j["de_giorgi_U"] = rep.de_giorgi.U;
  j["de_giorgi_A"] = rep.de_giorgi.A;
  j["moment_v4_fit"] = {{"A", rep.v4_fit.A}, {"B", rep.v4_fit.B}};
  return j;
}

inline void write_report_csv(const DiagnosticsReport& rep,
                             const std::string& dir) {
  auto put = [&](const char* name, const std::vector<double>& vals) {
    write_series_csv(dir + "/series_" + name + ".csv", "t", rep.times, vals);
  };
  put("mass", rep.mass);
  put("entropy", rep.entropy);
  put("moment_v2", rep.moment_v2);
  put("moment_v4", rep.moment_v4);
  put("drift_energy", rep.drift_energy);
  put("sqrt_gradient", rep.sqrt_gradient);
  put("boundary_leakage", rep.boundary_leakage);
  write_series_csv(dir + "/series_renorm_fp.csv", "level", rep.renorm_levels,
                   rep.renorm_fp);
  write_series_csv(dir + "/series_renorm_hjb.csv", "level", rep.renorm_levels,
                   rep.renorm_hjb);
  write_series_csv(dir + "/series_de_giorgi_U.csv", "alpha",
                   rep.de_giorgi.alpha, rep.de_giorgi.U);
}

}  // namespace kmfg
