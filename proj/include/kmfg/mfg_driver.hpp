#pragma once

/// Fixed-point driver for the coupled backward-forward system. The map Phi
/// sends a candidate density history mu to a solution pair: the backward
/// solve consumes the sources F(mu) and G(mu(T)), its value function supplies
/// the feedback drift H_p(D_v u), and the forward solve pushes m0 through
/// that drift. A damped Picard iteration m <- (1-theta) m + theta Phi(m)
/// hunts the fixed point; damping is the convergence device, divergence is
/// detected (five consecutive residual growths) rather than excluded.
/// Quadratic Hamiltonians have no global Lipschitz bound, so they enter only
/// through the epsilon continuation H/(1 + eps sqrt(H)) with warm starts
/// along a decreasing schedule.

#include <kmfg/diagnostics.hpp>

#include <string>
#include <utility>
#include <vector>

namespace kmfg {

enum class InitialGuess { kolmogorov_flow, heat_smoothed, uniform };

inline InitialGuess initial_guess_from_name(const std::string& s) {
  if (s == "kolmogorov_flow") return InitialGuess::kolmogorov_flow;
  if (s == "heat_smoothed") return InitialGuess::heat_smoothed;
  if (s == "uniform") return InitialGuess::uniform;
  throw Error("unknown initial guess: " + s);
}

struct MFGConfig {
  double theta = 0.5;            // damping weight on the Phi image
  double tol_fixed_point = 1e-6; // sup over time levels of the L2 update
  int max_iters = 100;
  std::vector<double> epsilon_schedule;          // for epsilon_continuation
  std::vector<double> truncation_levels = {2.0, 4.0, 8.0};
  InitialGuess initial_guess = InitialGuess::kolmogorov_flow;
  OperatorConfig operators;
  bool collect_diagnostics = true;

  void validate() const {
    if (!(theta > 0.0) || !(theta <= 1.0))
      throw Error("MFGConfig: theta must lie in (0, 1]");
    if (!(tol_fixed_point > 0))
      throw Error("MFGConfig: tol_fixed_point must be positive");
    if (max_iters < 1) throw Error("MFGConfig: max_iters must be >= 1");
    for (std::size_t i = 0; i < epsilon_schedule.size(); ++i) {
      if (!(epsilon_schedule[i] > 0))
        throw Error("MFGConfig: epsilon schedule must be positive");
      if (i > 0 && !(epsilon_schedule[i] < epsilon_schedule[i - 1]))
        throw Error("MFGConfig: epsilon schedule must be strictly decreasing");
    }
    for (double k : truncation_levels)
      if (!(k > 0))
        throw Error("MFGConfig: truncation levels must be positive");
  }
};

struct MFGProblem {
  PhaseGrid grid;
  Hamiltonian H;
  Coupling F;
  Coupling G;
  FieldD m0;

  MFGProblem(const PhaseGrid& g, const Hamiltonian& ham, const Coupling& F_,
             const Coupling& G_, const FieldD& m0_)
      : grid(g), H(ham), F(F_), G(G_), m0(m0_) {
    if (!grid.same_geometry(m0.grid))
      throw Error("MFGProblem: m0 lives on a different grid");
  }
};

enum class MFGStatus { converged, max_iters };

inline const char* to_string(MFGStatus s) {
  return s == MFGStatus::converged ? "converged" : "max_iters";
}

struct MFGSolution {
  SpaceTimeFieldD u;
  SpaceTimeFieldD m;
  std::vector<double> residual_history;  // sup_t ||m^{k+1} - m^k||_2
  double epsilon = 0;  // H^eps level in effect; 0 marks un-regularized
  DiagnosticsReport diagnostics;
  MFGStatus status = MFGStatus::converged;
  int iterations = 0;
  std::vector<LasryLions> lasry_history;  // consecutive Phi-output pairs

  explicit MFGSolution(const PhaseGrid& g) : u(g), m(g) {}
};

/// Thrown when the residual grows five consecutive iterations; carries the
/// history so the caller can see the blow-up profile.
struct DivergenceError : Error {
  std::vector<double> residual_history;
  DivergenceError(const std::string& what, std::vector<double> history)
      : Error(what), residual_history(std::move(history)) {}
};

/// sup over time levels of the slice L2 distance, the metric of the
/// fixed-point space C([0,T]; L2).
inline double sup_t_l2_distance(const SpaceTimeFieldD& a,
                                const SpaceTimeFieldD& b) {
  if (!a.grid.same_geometry(b.grid))
    throw Error("sup_t_l2_distance: grids disagree");
  const double vol = a.grid.cell_volume();
  double worst = 0;
  for (std::size_t k = 0; k < a.slices.size(); ++k) {
    const Array2<double> diff = (a.slices[k] - b.slices[k]).square();
    worst = std::max(worst, std::sqrt(pairwise_sum(diff) * vol));
  }
  return worst;
}

inline double sup_t_l1_distance(const SpaceTimeFieldD& a,
                                const SpaceTimeFieldD& b) {
  if (!a.grid.same_geometry(b.grid))
    throw Error("sup_t_l1_distance: grids disagree");
  const double vol = a.grid.cell_volume();
  double worst = 0;
  for (std::size_t k = 0; k < a.slices.size(); ++k) {
    const Array2<double> diff = (a.slices[k] - b.slices[k]).abs();
    worst = std::max(worst, pairwise_sum(diff) * vol);
  }
  return worst;
}

struct PhiResult {
  SpaceTimeFieldD u;
  SpaceTimeFieldD m;
};

/// One application of the fixed-point map: mu -> (u, m).
inline PhiResult phi_map(const SpaceTimeFieldD& mu, const MFGProblem& prob,
                         const OperatorConfig& op = {}) {
  const PhaseGrid& g = prob.grid;
  if (!g.same_geometry(mu.grid)) throw Error("phi_map: mu grid disagrees");
  const double vol = g.cell_volume();
  for (std::size_t k = 0; k < mu.slices.size(); ++k) {
    if ((mu.slices[k] < 0).any())
      throw Error("phi_map: mu must be nonnegative (time level " +
                  std::to_string(k) + ")");
    const double mass = pairwise_sum(mu.slices[k]) * vol;
    if (std::abs(mass - 1.0) > 1e-8)
      throw Error("phi_map: mu slice " + std::to_string(k) + " has mass " +
                  detail::fmt_g(mass) + ", expected unit mass");
  }
  SpaceTimeFieldD F_src = prob.F.eval(mu);
  FieldD G_term = prob.G.eval(FieldD(g, mu.slices.back()));
  PhiResult out{solve_hjb(HJBProblem(g, prob.H, F_src, G_term), op),
                SpaceTimeFieldD(g)};
  std::vector<SpaceTimeFieldD> b = feedback_drift(out.u, prob.H);
  out.m = solve_fp(FPProblem(g, b, prob.m0), op).m;
  return out;
}

/// Starting density history. kolmogorov_flow solves the drift-free forward
/// equation (mass-correct, matches Phi exactly when H = 0); heat_smoothed
/// applies one implicit v-diffusion step to m0 and extends it constant in
/// time; uniform spreads unit mass over the whole box.
inline SpaceTimeFieldD initial_density(const MFGProblem& prob,
                                       InitialGuess mode,
                                       const OperatorConfig& op = {}) {
  const PhaseGrid& g = prob.grid;
  switch (mode) {
    case InitialGuess::kolmogorov_flow:
      return solve_fp(FPProblem(g, {}, prob.m0), op).m;
    case InitialGuess::heat_smoothed: {
      FieldD s = prob.m0;
      v_diffusion_drift_step(s, g.dt(), {}, VStepMode::fp);
      SpaceTimeFieldD out(g);
      for (auto& sl : out.slices) sl = s.values;
      return out;
    }
    case InitialGuess::uniform: {
      SpaceTimeFieldD out(g);
      const double c = 1.0 / (g.cell_volume() * double(g.nx_cells()) *
                              double(g.nv_cells()));
      for (auto& sl : out.slices) sl.setConstant(c);
      return out;
    }
  }
  throw Error("initial_density: unknown mode");
}

/// Damped Picard iteration on the density history. Requires a globally
/// Lipschitz drift map: raw quadratic Hamiltonians are rejected, use
/// epsilon_continuation for those. The returned (u, m) is the exact pair of
/// the final Phi evaluation, so the backward/forward equations hold for it
/// discretely; the residual history measures the damped update distances.
inline MFGSolution solve_mfg(const MFGConfig& cfg, const MFGProblem& prob,
                             const SpaceTimeFieldD* warm_start = nullptr) {
  cfg.validate();
  if (prob.H.kind() == HamiltonianKind::quadratic)
    throw Error(
        "solve_mfg: raw quadratic Hamiltonian has unbounded H_p; "
        "use epsilon_continuation");
  const PhaseGrid& g = prob.grid;
  if (warm_start && !g.same_geometry(warm_start->grid))
    throw Error("solve_mfg: warm start lives on a different grid");

  SpaceTimeFieldD m_cur = warm_start
                              ? *warm_start
                              : initial_density(prob, cfg.initial_guess,
                                                cfg.operators);
  MFGSolution sol(g);
  sol.epsilon = prob.H.epsilon;

  bool have_prev = false;
  PhiResult prev{SpaceTimeFieldD(g), SpaceTimeFieldD(g)};
  int growth_run = 0;
  for (int k = 0; k < cfg.max_iters; ++k) {
    PhiResult phi = phi_map(m_cur, prob, cfg.operators);
    if (have_prev)
      sol.lasry_history.push_back(lasry_lions_terms(
          prev.u, prev.m, phi.u, phi.m, prob.F, prob.G, prob.H));

    SpaceTimeFieldD m_next(g);
    for (std::size_t j = 0; j < m_next.slices.size(); ++j)
      m_next.slices[j] =
          (1.0 - cfg.theta) * m_cur.slices[j] + cfg.theta * phi.m.slices[j];
    const double res = sup_t_l2_distance(m_next, m_cur);
    if (!sol.residual_history.empty() && res > sol.residual_history.back()) {
      if (++growth_run >= 5) {
        sol.residual_history.push_back(res);
        throw DivergenceError(
            "solve_mfg: residual grew five consecutive iterations "
            "(last " + detail::fmt_g(res) + "), iteration " +
                std::to_string(k + 1),
            sol.residual_history);
      }
    } else {
      growth_run = 0;
    }
    sol.residual_history.push_back(res);
    prev = std::move(phi);
    have_prev = true;
    m_cur = std::move(m_next);
    if (res <= cfg.tol_fixed_point) break;
  }

  sol.iterations = int(sol.residual_history.size());
  sol.status = sol.residual_history.back() <= cfg.tol_fixed_point
                   ? MFGStatus::converged
                   : MFGStatus::max_iters;
  sol.u = std::move(prev.u);
  sol.m = std::move(prev.m);
  if (cfg.collect_diagnostics) {
    DiagnosticsOptions opt;
    opt.renorm_levels = cfg.truncation_levels;
    std::vector<SpaceTimeFieldD> b = feedback_drift(sol.u, prob.H);
    sol.diagnostics = assemble_diagnostics(sol.u, sol.m, b, prob.F, prob.G,
                                           prob.H, opt);
  }
  return sol;
}

/// Distance between the converged densities of two independently
/// initialized runs; the operative uniqueness check.
inline double uniqueness_probe(const MFGConfig& cfg, const MFGProblem& prob) {
  MFGConfig c1 = cfg;
  c1.initial_guess = InitialGuess::kolmogorov_flow;
  c1.collect_diagnostics = false;
  MFGConfig c2 = cfg;
  c2.initial_guess = InitialGuess::uniform;
  c2.collect_diagnostics = false;
  MFGSolution a = solve_mfg(c1, prob);
  MFGSolution b = solve_mfg(c2, prob);
  return sup_t_l2_distance(a.m, b.m);
}

/// Per-level and pairwise quantities recorded along the epsilon schedule.
/// The first three are the eps-uniform energy quantities; the Cauchy
/// distances compare consecutive levels, and the truncated-gradient
/// distances do so after clamping u at each truncation level.
struct ContinuationRecord {
  std::vector<double> epsilon;
  std::vector<double> drift_energy_l1;  // || m |H_p(D_v u)|^2 ||_1
  std::vector<double> hamiltonian_l1;   // || H^eps(D_v u) ||_1
  std::vector<double> sup_u_l1;         // sup_t || u ||_1
  std::vector<double> cauchy_m_l1;
  std::vector<double> cauchy_u_l1;
  std::vector<std::vector<double>> cauchy_trunc_grad;
  std::string abort_reason;  // empty when the whole schedule completed
};

struct ContinuationResult {
  std::vector<MFGSolution> levels;
  ContinuationRecord record;
};

namespace detail {

inline double space_time_l1(const SpaceTimeFieldD& f) {
  std::vector<double> per;
  per.reserve(f.slices.size());
  for (const auto& s : f.slices)
    per.push_back(pairwise_sum(Array2<double>(s.abs())) * f.grid.cell_volume());
  return trapezoid_total(per, f.grid.dt());
}

inline double truncated_gradient_l2(const SpaceTimeFieldD& a,
                                    const SpaceTimeFieldD& b, double level) {
  const PhaseGrid& g = a.grid;
  std::vector<double> per;
  per.reserve(a.slices.size());
  for (std::size_t k = 0; k < a.slices.size(); ++k) {
    const FieldD ta(g, a.slices[k].min(level));
    const FieldD tb(g, b.slices[k].min(level));
    std::vector<FieldD> ga = discrete_gradient_v(ta);
    std::vector<FieldD> gb = discrete_gradient_v(tb);
    double acc = 0;
    for (int ax = 0; ax < g.d(); ++ax)
      acc += pairwise_sum(Array2<double>(
                 (ga[std::size_t(ax)].values - gb[std::size_t(ax)].values)
                     .square())) *
             g.cell_volume();
    per.push_back(acc);
  }
  return std::sqrt(trapezoid_total(per, g.dt()));
}

}  // namespace detail

/// Solve along a decreasing epsilon schedule, warm starting each level from
/// the previous converged density. A failing level aborts the schedule and
/// the completed levels are returned with the failure reason recorded.
inline ContinuationResult epsilon_continuation(const MFGConfig& cfg,
                                               const MFGProblem& prob) {
  cfg.validate();
  if (cfg.epsilon_schedule.empty())
    throw Error("epsilon_continuation: schedule must be nonempty");
  const PhaseGrid& g = prob.grid;
  ContinuationResult out;
  SpaceTimeFieldD warm(g);
  bool have_warm = false;

  for (double eps : cfg.epsilon_schedule) {
    Hamiltonian Heps = prob.H;
    Heps.epsilon = eps;
    MFGProblem level(g, Heps, prob.F, prob.G, prob.m0);
    try {
      MFGSolution s = solve_mfg(cfg, level, have_warm ? &warm : nullptr);
      warm = s.m;
      have_warm = true;

      std::vector<SpaceTimeFieldD> b = feedback_drift(s.u, Heps);
      out.record.epsilon.push_back(eps);
      out.record.drift_energy_l1.push_back(
          trapezoid_total(drift_energy_series(s.m, b), g.dt()));
      std::vector<double> h_per;
      for (const auto& sl : s.u.slices) {
        std::vector<FieldD> gr = discrete_gradient_v(FieldD(g, sl));
        Array2<double> sq = gr[0].values.square();
        for (int ax = 1; ax < g.d(); ++ax)
          sq += gr[std::size_t(ax)].values.square();
        h_per.push_back(pairwise_sum(Array2<double>(ham_value(Heps, sq))) *
                        g.cell_volume());
      }
      out.record.hamiltonian_l1.push_back(trapezoid_total(h_per, g.dt()));
      out.record.sup_u_l1.push_back(sup_t_lp(s.u, 1.0));
      out.levels.push_back(std::move(s));
    } catch (const Error& e) {
      out.record.abort_reason = e.what();
      break;
    }
  }

  for (std::size_t i = 0; i + 1 < out.levels.size(); ++i) {
    const SpaceTimeFieldD& ma = out.levels[i].m;
    const SpaceTimeFieldD& mb = out.levels[i + 1].m;
    const SpaceTimeFieldD& ua = out.levels[i].u;
    const SpaceTimeFieldD& ub = out.levels[i + 1].u;
    SpaceTimeFieldD dm(g), du(g);
    for (std::size_t k = 0; k < dm.slices.size(); ++k) {
      dm.slices[k] = ma.slices[k] - mb.slices[k];
      du.slices[k] = ua.slices[k] - ub.slices[k];
    }
    out.record.cauchy_m_l1.push_back(detail::space_time_l1(dm));
    out.record.cauchy_u_l1.push_back(detail::space_time_l1(du));
    std::vector<double> tg;
    for (double lvl : cfg.truncation_levels)
      tg.push_back(detail::truncated_gradient_l2(ua, ub, lvl));
    out.record.cauchy_trunc_grad.push_back(std::move(tg));
  }
  return out;
}

/// Duality identity audited against the problem's own initial density.
inline double duality_gap(const SpaceTimeFieldD& u, const SpaceTimeFieldD& m,
                          const MFGProblem& prob) {
  if (!prob.grid.same_geometry(u.grid))
    throw Error("duality_gap: grids disagree");
  return duality_gap(u, m, prob.F, prob.H, &prob.m0.values);
}

}  // namespace kmfg
