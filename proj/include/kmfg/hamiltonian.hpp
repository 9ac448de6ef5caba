/// Hamiltonians H(p) with the structure constants the estimates rely on.
///
/// All built-ins are radial: H(p) = h(s) with s = |p|^2, so the gradient is
/// H_p(p) = 2 g(s) p with g = h'. This makes whole-field drift evaluation a
/// pair of elementwise maps on |D_v u|^2. The regularization
///   H^eps = H / (1 + eps sqrt(H))
/// keeps the same radial form with
///   h_eps = h / (1 + eps sqrt(h)),
///   g_eps = g (1 + (eps/2) sqrt(h)) / (1 + eps sqrt(h))^2,
/// which is the exact derivative of h_eps (chain rule with
/// d/ds sqrt(h) = g / (2 sqrt(h))). H^eps is globally Lipschitz with
/// |H_p^eps| <= 2/eps and satisfies |H_p^eps|^2 <= 4 (H_p^eps . p - H^eps)
/// and |H_p^eps|^2 <= 4 H^eps for the quadratic base.

#pragma once

#include <kmfg/phase_grid.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace kmfg {

enum class HamiltonianKind { lipschitz, quadratic, regularized };

struct Hamiltonian {
  enum class Base { zero, quadratic, half_quadratic, soft_norm, abs_norm };

  Base base = Base::quadratic;
  double epsilon = 0.0;  // > 0 switches on the regularization wrap

  static Hamiltonian from_name(const std::string& name, double eps = 0.0) {
    Hamiltonian H;
    if (name == "zero") H.base = Base::zero;
    else if (name == "quadratic") H.base = Base::quadratic;
    else if (name == "half_quadratic") H.base = Base::half_quadratic;
    else if (name == "lipschitz" || name == "soft_norm") H.base = Base::soft_norm;
    else if (name == "abs_norm") H.base = Base::abs_norm;
    else throw Error("unknown hamiltonian kind: " + name);
    if (eps < 0) throw Error("hamiltonian epsilon must be >= 0");
    H.epsilon = eps;
    return H;
  }

  HamiltonianKind kind() const {
    if (epsilon > 0) return HamiltonianKind::regularized;
    switch (base) {
      case Base::quadratic:
      case Base::half_quadratic:
        return HamiltonianKind::quadratic;
      default:
        return HamiltonianKind::lipschitz;
    }
  }

  /// Structure constants: H <= C |p|^2, H_p.p - H >= c H, |H_p|^2 <= 2C H
  /// for the quadratic kinds; |H_p| <= L for the Lipschitz/regularized kinds.
  double growth_C() const { return 2.0; }
  double convexity_c() const { return 1.0; }
  double lipschitz_L() const {
    if (epsilon > 0) return 2.0 / epsilon;
    switch (base) {
      case Base::zero: return 0.0;
      case Base::soft_norm: return 1.0;
      case Base::abs_norm: return 1.0;
      default: return std::numeric_limits<double>::infinity();
    }
  }

  double base_value_sq(double s) const {
    switch (base) {
      case Base::zero: return 0.0;
      case Base::quadratic: return s;
      case Base::half_quadratic: return 0.5 * s;
      case Base::soft_norm: return std::sqrt(1.0 + s) - 1.0;
      case Base::abs_norm: return std::sqrt(s);
    }
    return 0.0;
  }

  double base_gscale_sq(double s) const {
    switch (base) {
      case Base::zero: return 0.0;
      case Base::quadratic: return 1.0;
      case Base::half_quadratic: return 0.5;
      case Base::soft_norm: return 0.5 / std::sqrt(1.0 + s);
      case Base::abs_norm: return s > 0 ? 0.5 / std::sqrt(s) : 0.0;
    }
    return 0.0;
  }

  /// h(s) with the regularization applied.
  double value_sq(double s) const {
    const double h = base_value_sq(s);
    if (epsilon <= 0) return h;
    return h / (1.0 + epsilon * std::sqrt(h));
  }

  /// g(s) = d/ds value_sq(s); the gradient is H_p(p) = 2 g(|p|^2) p.
  double gscale_sq(double s) const {
    const double g = base_gscale_sq(s);
    if (epsilon <= 0) return g;
    const double r = std::sqrt(base_value_sq(s));
    const double den = 1.0 + epsilon * r;
    return g * (1.0 + 0.5 * epsilon * r) / (den * den);
  }

  double value(const double* p, int d) const {
    double s = 0;
    for (int a = 0; a < d; ++a) s += p[a] * p[a];
    return value_sq(s);
  }

  void gradient(const double* p, int d, double* out) const {
    double s = 0;
    for (int a = 0; a < d; ++a) s += p[a] * p[a];
    const double g2 = 2.0 * gscale_sq(s);
    for (int a = 0; a < d; ++a) out[a] = g2 * p[a];
  }

  double value1(double p) const { return value(&p, 1); }
  double gradient1(double p) const {
    double g;
    gradient(&p, 1, &g);
    return g;
  }
};

/// Legendre bracket H_p(p).p - H(p), the duality integrand; >= 0 for any
/// convex H with H(0) = 0, and >= c H on the quadratic class.
inline double legendre_excess(const Hamiltonian& H, const double* p, int d) {
  double s = 0;
  for (int a = 0; a < d; ++a) s += p[a] * p[a];
  return 2.0 * H.gscale_sq(s) * s - H.value_sq(s);
}

inline double legendre_excess1(const Hamiltonian& H, double p) {
  return legendre_excess(H, &p, 1);
}

/// Elementwise H over a field of squared gradient magnitudes.
template <typename Scalar>
Array2<Scalar> ham_value(const Hamiltonian& H, const Array2<Scalar>& grad_sq) {
  return grad_sq.unaryExpr([&](Scalar s) { return Scalar(H.value_sq(double(s))); });
}

/// Elementwise 2 g(|q|^2); multiply by the gradient component to get H_p.
template <typename Scalar>
Array2<Scalar> ham_gscale2(const Hamiltonian& H, const Array2<Scalar>& grad_sq) {
  return grad_sq.unaryExpr(
      [&](Scalar s) { return Scalar(2.0 * H.gscale_sq(double(s))); });
}

/// Elementwise Legendre bracket over a field of squared gradient magnitudes.
template <typename Scalar>
Array2<Scalar> ham_excess(const Hamiltonian& H, const Array2<Scalar>& grad_sq) {
  return grad_sq.unaryExpr([&](Scalar s) {
    const double sd = double(s);
    return Scalar(2.0 * H.gscale_sq(sd) * sd - H.value_sq(sd));
  });
}

struct StructureMargin {
  std::string name;
  double margin;     // >= 0 means the inequality holds at every sample
  double worst_p[2];
};

struct StructureReport {
  std::vector<StructureMargin> margins;
  bool pass = true;
};

/// Samples the structural inequalities on the box [-box, box]^2. Margins are
/// the minimum slack over the sample grid. The kind being certified defaults
/// to the Hamiltonian's own; passing another kind asks whether H satisfies
/// that kind's structure (useful as a negative control).
inline StructureReport check_structure(const Hamiltonian& H, double box = 5.0,
                                       int n = 201,
                                       const HamiltonianKind* as_kind = nullptr) {
  StructureReport rep;
  auto add = [&](const std::string& name, double margin, double px, double py) {
    rep.margins.push_back({name, margin, {px, py}});
    if (margin < -1e-12) rep.pass = false;
  };
  const HamiltonianKind kind = as_kind ? *as_kind : H.kind();
  double m_nonneg = std::numeric_limits<double>::infinity();
  double m_growth = m_nonneg, m_convex = m_nonneg, m_gradsq = m_nonneg;
  double m_lip = m_nonneg, m_le_base = m_nonneg;
  double w[6][2] = {};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double p[2] = {-box + 2.0 * box * i / (n - 1),
                           -box + 2.0 * box * j / (n - 1)};
      const double s = p[0] * p[0] + p[1] * p[1];
      const double val = H.value(p, 2);
      double gr[2];
      H.gradient(p, 2, gr);
      const double gn2 = gr[0] * gr[0] + gr[1] * gr[1];
      auto track = [&](double& slot, double cand, int k) {
        if (cand < slot) {
          slot = cand;
          w[k][0] = p[0];
          w[k][1] = p[1];
        }
      };
      track(m_nonneg, val, 0);
      if (kind == HamiltonianKind::quadratic) {
        track(m_growth, H.growth_C() * s - val, 1);
        track(m_convex, (gr[0] * p[0] + gr[1] * p[1]) - val -
                            H.convexity_c() * val, 2);
        track(m_gradsq, 2.0 * H.growth_C() * val - gn2, 3);
      }
      if (kind == HamiltonianKind::lipschitz ||
          kind == HamiltonianKind::regularized)
        track(m_lip, H.lipschitz_L() - std::sqrt(gn2), 4);
      if (kind == HamiltonianKind::regularized) {
        Hamiltonian base = H;
        base.epsilon = 0.0;
        track(m_le_base, base.value(p, 2) - val, 5);
      }
    }
  add("nonnegative", m_nonneg, w[0][0], w[0][1]);
  if (kind == HamiltonianKind::quadratic) {
    add("growth", m_growth, w[1][0], w[1][1]);
    add("convexity_excess", m_convex, w[2][0], w[2][1]);
    add("gradient_sq", m_gradsq, w[3][0], w[3][1]);
  }
  if (kind == HamiltonianKind::lipschitz || kind == HamiltonianKind::regularized)
    add("lipschitz", m_lip, w[4][0], w[4][1]);
  if (kind == HamiltonianKind::regularized)
    add("regularized_le_base", m_le_base, w[5][0], w[5][1]);
  return rep;
}

}  // namespace kmfg
