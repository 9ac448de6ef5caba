/// Local monotone couplings F(x, v, m) used for both the running cost and
/// the terminal cost.
///
/// linear:          F = c0 * m                    (ratio envelope)
/// bump_quadratic:  F = phi(x, v) * (m + m^2)     (L1 envelope)
/// with phi = c0 * (0.5 + 0.5 exp(-(|x|^2 + |v|^2))), so phi is smooth and
/// bounded in [c0/2, c0] and the effective monotonicity constant is c0/2.
///
/// Envelope certificates: with f_L the (ratio or sup) envelope constant over
/// m' <= L,
///   ratio:  F(m) <= f_L m + (m/L) F(m)
///   L1:     F(m) <= f_L   + (m/L) F(m)
/// Both are sampled densely (log-spaced levels plus random (cell, m) draws)
/// and the report counts violations.

#pragma once

#include <kmfg/phase_grid.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace kmfg {

enum class EnvelopeKind { ratio, l1 };

struct Coupling {
  enum class Name { zero, linear, bump_quadratic };

  Name name = Name::linear;
  double c0 = 1.0;

  static Coupling from_name(const std::string& n, double c0 = 1.0) {
    Coupling c;
    if (n == "zero") c.name = Name::zero;
    else if (n == "linear") c.name = Name::linear;
    else if (n == "bump_quadratic") c.name = Name::bump_quadratic;
    else throw Error("unknown coupling: " + n);
    if (!(c0 > 0)) throw Error("coupling c0 must be positive");
    c.c0 = c0;
    return c;
  }

  EnvelopeKind envelope() const {
    return name == Name::bump_quadratic ? EnvelopeKind::l1
                                        : EnvelopeKind::ratio;
  }

  /// Declared lower bound on dF/dm over admissible (x, v, m).
  double monotonicity_c0() const {
    if (name == Name::zero) return 0.0;
    return name == Name::linear ? c0 : 0.5 * c0;
  }

  double phi(double xsq_plus_vsq) const {
    return c0 * (0.5 + 0.5 * std::exp(-xsq_plus_vsq));
  }

  double eval_scalar(double m, double xsq_plus_vsq) const {
    if (m < 0) throw Error("coupling: negative density");
    if (name == Name::zero) return 0.0;
    if (name == Name::linear) return c0 * m;
    return phi(xsq_plus_vsq) * (m + m * m);
  }

  /// Slice evaluation; preserves the field's grid.
  template <typename Scalar>
  Field<Scalar> eval(const Field<Scalar>& m) const {
    require_finite(m.values, "coupling eval");
    if ((m.values < Scalar(0)).any())
      throw Error("coupling: negative density");
    Field<Scalar> out(m.grid);
    if (name == Name::zero) return out;
    if (name == Name::linear) {
      out.values = Scalar(c0) * m.values;
      return out;
    }
    const auto& g = m.grid;
    Array1<double> xw = g.x_sq_weights();
    Array1<double> vw = g.v_sq_weights();
    for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
      for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
        const double mv = double(m.values(r, c));
        out.values(r, c) = Scalar(phi(xw[r] + vw[c]) * (mv + mv * mv));
      }
    return out;
  }

  template <typename Scalar>
  SpaceTimeField<Scalar> eval(const SpaceTimeField<Scalar>& m) const {
    SpaceTimeField<Scalar> out(m.grid);
    out.slices.clear();
    for (const auto& s : m.slices)
      out.slices.push_back(eval(Field<Scalar>(m.grid, s)).values);
    return out;
  }
};

struct MonotoneReport {
  double min_slope = 0;
  double required = 0;
  bool pass = false;
};

/// Finite-difference monotonicity probe over random (cell, m) samples.
inline MonotoneReport monotone_check(const Coupling& c, double tol = 1e-8,
                                     int samples = 10000,
                                     const double* required_c0 = nullptr) {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> um(0.0, 20.0);
  std::uniform_real_distribution<double> uq(0.0, 30.0);  // |x|^2 + |v|^2
  const double delta = 1e-6;
  MonotoneReport rep;
  rep.min_slope = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double m = um(rng), q = uq(rng);
    const double slope =
        (c.eval_scalar(m + delta, q) - c.eval_scalar(m, q)) / delta;
    rep.min_slope = std::min(rep.min_slope, slope);
  }
  rep.required = required_c0 ? *required_c0 : c.monotonicity_c0();
  rep.pass = rep.min_slope >= rep.required - tol;
  return rep;
}

struct EnvelopeReport {
  EnvelopeKind kind;
  double L = 0;
  double f_L = 0;        // envelope constant over m' <= L
  long violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
};

/// Certifies the envelope inequality at 1024 log-spaced density levels and
/// `samples` random (cell, m) draws; counts violations (expected zero for the
/// monotone built-ins).
inline EnvelopeReport envelope_check(const Coupling& c, double L = 5.0,
                                     int samples = 10000) {
  EnvelopeReport rep;
  rep.kind = c.envelope();
  rep.L = L;
  std::vector<double> qs = {0.0, 0.5, 2.0, 10.0, 30.0};
  // envelope constant from a dense sweep of m' <= L
  for (double q : qs)
    for (int i = 0; i < 1024; ++i) {
      const double m = L * std::pow(10.0, -6.0 + 6.0 * (i + 1) / 1024.0);
      const double F = c.eval_scalar(m, q);
      rep.f_L = std::max(rep.f_L, rep.kind == EnvelopeKind::ratio ? F / m : F);
    }
  auto margin = [&](double m, double q) {
    const double F = c.eval_scalar(m, q);
    const double rhs = (rep.kind == EnvelopeKind::ratio ? rep.f_L * m : rep.f_L) +
                       (m / L) * F;
    return rhs - F;
  };
  for (double q : qs)
    for (int i = 0; i < 1024; ++i) {
      const double m = std::pow(10.0, -4.0 + 8.0 * i / 1023.0);
      const double g = margin(m, q);
      rep.worst_margin = std::min(rep.worst_margin, g);
      if (g < -1e-12) ++rep.violations;
    }
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> um(0.0, 100.0);
  std::uniform_real_distribution<double> uq(0.0, 30.0);
  for (int i = 0; i < samples; ++i) {
    const double g = margin(um(rng), uq(rng));
    rep.worst_margin = std::min(rep.worst_margin, g);
    if (g < -1e-12) ++rep.violations;
  }
  return rep;
}

}  // namespace kmfg
