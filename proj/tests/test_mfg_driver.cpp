#include <kmfg/mfg_driver.hpp>

#include "doctest.h"

using namespace kmfg;

namespace {

PhaseGrid make_grid(int n, int n_t, double T = 1.0, double L_v = 4.0) {
  return PhaseGrid(GridConfig{.d = 1, .T = T, .n_t = n_t,
                              .L_x = 3.14159265358979323846, .n_x = n,
                              .L_v = L_v, .n_v = n});
}

FieldD gaussian_density(const PhaseGrid& g, double sx, double sv) {
  FieldD m(g);
  for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
    for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
      double e = 0;
      for (int a = 0; a < g.d(); ++a) {
        const double x = g.x_center(r, a), v = g.v_center(c, a);
        e += x * x / (2 * sx * sx) + v * v / (2 * sv * sv);
      }
      m.values(r, c) = std::exp(-e);
    }
  m.values /= integrate(m);
  return m;
}

MFGProblem linear_benchmark(const PhaseGrid& g, double eps = 0.5,
                            double c0 = 1.0) {
  return MFGProblem(g, Hamiltonian::from_name("quadratic", eps),
                    Coupling::from_name("linear", c0),
                    Coupling::from_name("linear", c0),
                    gaussian_density(g, 0.8, 0.8));
}

}  // namespace

TEST_CASE("config and problem validation") {
  PhaseGrid g = make_grid(8, 4);
  MFGConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("theta range") {
    cfg.theta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.theta = 1.2;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.theta = 1.0;
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("tolerance and iteration caps") {
    cfg.tol_fixed_point = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.tol_fixed_point = 1e-6;
    cfg.max_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
  SUBCASE("epsilon schedule must decrease strictly") {
    cfg.epsilon_schedule = {0.5, 0.5};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.epsilon_schedule = {0.5, -0.1};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.epsilon_schedule = {0.5, 0.25, 0.125};
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("truncation levels positive") {
    cfg.truncation_levels = {2.0, 0.0};
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
  SUBCASE("m0 grid must match") {
    PhaseGrid g2 = make_grid(16, 4);
    CHECK_THROWS_AS(MFGProblem(g, Hamiltonian::from_name("zero"),
                               Coupling::from_name("zero"),
                               Coupling::from_name("zero"),
                               FieldD(g2)),
                    Error);
  }
  SUBCASE("initial guess names") {
    CHECK(initial_guess_from_name("kolmogorov_flow") ==
          InitialGuess::kolmogorov_flow);
    CHECK(initial_guess_from_name("heat_smoothed") ==
          InitialGuess::heat_smoothed);
    CHECK(initial_guess_from_name("uniform") == InitialGuess::uniform);
    CHECK_THROWS_AS(initial_guess_from_name("warm"), Error);
  }
}

TEST_CASE("sup-t distances") {
  PhaseGrid g = make_grid(8, 3);
  SpaceTimeFieldD a(g), b(g);
  for (auto& s : a.slices) s.setConstant(0.25);
  b = a;
  CHECK(sup_t_l2_distance(a, b) == 0.0);
  CHECK(sup_t_l1_distance(a, b) == 0.0);
  b.slices[2] += 0.5;
  const double measure = g.cell_volume() * 64;
  CHECK(sup_t_l2_distance(a, b) ==
        doctest::Approx(0.5 * std::sqrt(measure)).epsilon(1e-13));
  CHECK(sup_t_l1_distance(a, b) ==
        doctest::Approx(0.5 * measure).epsilon(1e-13));
  PhaseGrid g2 = make_grid(16, 3);
  SpaceTimeFieldD c(g2);
  CHECK_THROWS_AS(sup_t_l2_distance(a, c), Error);
}

TEST_CASE("initial guess builders") {
  PhaseGrid g = make_grid(16, 10);
  MFGProblem prob(g, Hamiltonian::from_name("zero"),
                  Coupling::from_name("zero"), Coupling::from_name("zero"),
                  gaussian_density(g, 0.6, 0.6));
  const double vol = g.cell_volume();
  for (InitialGuess mode : {InitialGuess::kolmogorov_flow,
                            InitialGuess::heat_smoothed,
                            InitialGuess::uniform}) {
    SpaceTimeFieldD m = initial_density(prob, mode);
    for (const auto& s : m.slices) {
      CHECK(s.minCoeff() >= 0.0);
      CHECK(pairwise_sum(s) * vol == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  SUBCASE("heat smoothing is constant in time and spreads mass in v") {
    SpaceTimeFieldD m = initial_density(prob, InitialGuess::heat_smoothed);
    CHECK((m.slices[0] - m.slices.back()).abs().maxCoeff() == 0.0);
    CHECK(m.slices[0].maxCoeff() < prob.m0.values.maxCoeff());
  }
  SUBCASE("uniform fills the box") {
    SpaceTimeFieldD m = initial_density(prob, InitialGuess::uniform);
    CHECK(m.slices[0].maxCoeff() == m.slices[0].minCoeff());
  }
}

TEST_CASE("phi map decouples from mu when the drift vanishes") {
  PhaseGrid g = make_grid(16, 10);
  MFGProblem prob(g, Hamiltonian::from_name("zero"),
                  Coupling::from_name("linear"), Coupling::from_name("linear"),
                  gaussian_density(g, 0.6, 0.6));
  SpaceTimeFieldD mu1 = initial_density(prob, InitialGuess::kolmogorov_flow);
  SpaceTimeFieldD mu2 = initial_density(prob, InitialGuess::uniform);
  PhiResult r1 = phi_map(mu1, prob);
  PhiResult r2 = phi_map(mu2, prob);
  double worst = 0;
  for (std::size_t k = 0; k < r1.m.slices.size(); ++k)
    worst = std::max(worst,
                     (r1.m.slices[k] - r2.m.slices[k]).abs().maxCoeff());
  CHECK(worst == 0.0);  // FP never sees mu when H = 0

  SUBCASE("fully decoupled run gives u = 0 and the drift-free flow") {
    MFGProblem dec(g, Hamiltonian::from_name("zero"),
                   Coupling::from_name("zero"), Coupling::from_name("zero"),
                   prob.m0);
    PhiResult r = phi_map(mu2, dec);
    for (const auto& s : r.u.slices) CHECK(s.abs().maxCoeff() == 0.0);
    SpaceTimeFieldD free = solve_fp(FPProblem(g, {}, dec.m0)).m;
    for (std::size_t k = 0; k < r.m.slices.size(); ++k)
      CHECK((r.m.slices[k] - free.slices[k]).abs().maxCoeff() == 0.0);
  }
  SUBCASE("preconditions") {
    SpaceTimeFieldD bad = mu1;
    bad.slices[3](2, 2) = -1e-3;
    CHECK_THROWS_WITH_AS(phi_map(bad, prob),
                         doctest::Contains("nonnegative"), Error);
    SpaceTimeFieldD heavy = mu1;
    heavy.slices[0] *= 2.0;
    CHECK_THROWS_WITH_AS(phi_map(heavy, prob), doctest::Contains("mass"),
                         Error);
    PhaseGrid g2 = make_grid(8, 10);
    CHECK_THROWS_AS(phi_map(SpaceTimeFieldD(g2), prob), Error);
  }
}

TEST_CASE("phi map contracts on the linear-coupling instance") {
  PhaseGrid g = make_grid(32, 40, 0.8);
  MFGProblem prob(g, Hamiltonian::from_name("quadratic", 0.5),
                  Coupling::from_name("linear"), Coupling::from_name("linear"),
                  gaussian_density(g, 0.7, 0.7));
  SpaceTimeFieldD mu = initial_density(prob, InitialGuess::uniform);
  PhiResult p1 = phi_map(mu, prob);
  PhiResult p2 = phi_map(p1.m, prob);
  const double d1 = sup_t_l2_distance(p1.m, mu);
  const double d2 = sup_t_l2_distance(p2.m, p1.m);
  CHECK(d1 == doctest::Approx(0.37751).epsilon(0.02));
  CHECK(d2 == doctest::Approx(0.0098808).epsilon(0.02));
  CHECK(d2 < 0.1 * d1);
}

TEST_CASE("raw quadratic growth is rejected, Lipschitz classes accepted") {
  PhaseGrid g = make_grid(8, 8);
  FieldD m0 = gaussian_density(g, 0.6, 0.6);
  Coupling zero = Coupling::from_name("zero");
  MFGConfig cfg;
  cfg.collect_diagnostics = false;
  for (const char* name : {"quadratic", "half_quadratic"}) {
    MFGProblem prob(g, Hamiltonian::from_name(name), zero, zero, m0);
    CHECK_THROWS_WITH_AS(solve_mfg(cfg, prob),
                         doctest::Contains("epsilon_continuation"), Error);
  }
  for (const char* name : {"zero", "lipschitz", "abs_norm"}) {
    MFGProblem prob(g, Hamiltonian::from_name(name), zero, zero, m0);
    CHECK_NOTHROW(solve_mfg(cfg, prob));
  }
  MFGProblem reg(g, Hamiltonian::from_name("quadratic", 0.5), zero, zero, m0);
  CHECK_NOTHROW(solve_mfg(cfg, reg));
}

TEST_CASE("zero Hamiltonian converges in one iteration exactly") {
  PhaseGrid g = make_grid(16, 24);
  MFGProblem prob(g, Hamiltonian::from_name("zero"),
                  Coupling::from_name("linear"), Coupling::from_name("linear"),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.tol_fixed_point = 1e-12;
  cfg.collect_diagnostics = false;
  MFGSolution s = solve_mfg(cfg, prob);
  CHECK(s.iterations == 1);
  CHECK(s.residual_history.size() == 1);
  CHECK(s.residual_history[0] == 0.0);
  CHECK(s.status == MFGStatus::converged);
  CHECK(s.epsilon == 0.0);
  CHECK(s.lasry_history.empty());
  SpaceTimeFieldD flow = solve_fp(FPProblem(g, {}, prob.m0)).m;
  for (std::size_t k = 0; k < s.m.slices.size(); ++k)
    CHECK((s.m.slices[k] - flow.slices[k]).abs().maxCoeff() == 0.0);
}

TEST_CASE("linear-coupling benchmark at 32x32x50") {
  PhaseGrid g = make_grid(32, 50);
  MFGProblem prob = linear_benchmark(g);
  MFGConfig cfg;
  cfg.theta = 0.5;
  cfg.tol_fixed_point = 1e-6;
  cfg.max_iters = 50;
  MFGSolution s = solve_mfg(cfg, prob);

  CHECK(s.status == MFGStatus::converged);
  CHECK(s.iterations <= 20);  // measured 12
  CHECK(s.residual_history.back() < 1e-6);
  for (std::size_t k = 1; k < s.residual_history.size(); ++k)
    CHECK(s.residual_history[k] < s.residual_history[k - 1]);
  CHECK(s.epsilon == 0.5);

  SUBCASE("iterate pairs keep the monotone-convex signs") {
    CHECK(s.lasry_history.size() == std::size_t(s.iterations - 1));
    for (const auto& ll : s.lasry_history) {
      CHECK(ll.I >= -1e-8);
      CHECK(ll.II >= -1e-8);
      CHECK(ll.III >= -1e-8);
    }
  }
  SUBCASE("diagnostics are attached to the solution") {
    CHECK(s.diagnostics.mass.size() == 51);
    CHECK(s.diagnostics.ledger.chain_pass);
    CHECK(s.diagnostics.entropy_check.pass);
    for (double mass : s.diagnostics.mass)
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("duality identity holds to discretization accuracy") {
    const double gap = duality_gap(s.u, s.m, prob);
    CHECK(gap == doctest::Approx(5.904905e-04).epsilon(0.02));
    SpaceTimeFieldD shifted = s.u;
    for (auto& sl : shifted.slices) sl += 1.0;
    CHECK(std::abs(duality_gap(shifted, s.m, prob) - gap) <= 1e-12);
  }
  SUBCASE("independent initializations agree") {
    const double dist = uniqueness_probe(cfg, prob);
    CHECK(dist <= 10 * cfg.tol_fixed_point);
  }
}

TEST_CASE("duality gap vanishes for the fully decoupled zero problem") {
  PhaseGrid g = make_grid(16, 12);
  MFGProblem prob(g, Hamiltonian::from_name("zero"),
                  Coupling::from_name("zero"), Coupling::from_name("zero"),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.collect_diagnostics = false;
  MFGSolution s = solve_mfg(cfg, prob);
  CHECK(duality_gap(s.u, s.m, prob) == 0.0);
}

TEST_CASE("duality gap decays under refinement") {
  double gap[2];
  int idx = 0;
  for (int n : {16, 32}) {
    PhaseGrid g = make_grid(n, n == 16 ? 25 : 50);
    MFGProblem prob = linear_benchmark(g);
    MFGConfig cfg;
    cfg.tol_fixed_point = 1e-8;
    cfg.max_iters = 80;
    cfg.collect_diagnostics = false;
    MFGSolution s = solve_mfg(cfg, prob);
    gap[idx++] = duality_gap(s.u, s.m, prob);
  }
  CHECK(gap[0] == doctest::Approx(1.114673e-03).epsilon(0.02));
  CHECK(gap[1] == doctest::Approx(5.907020e-04).epsilon(0.02));
  CHECK(gap[0] / gap[1] >= 1.5);
}

TEST_CASE("max_iters status carries the history without throwing") {
  PhaseGrid g = make_grid(16, 24);
  MFGProblem prob(g, Hamiltonian::from_name("quadratic", 0.2),
                  Coupling::from_name("linear", 20.0),
                  Coupling::from_name("linear", 20.0),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.theta = 1.0;
  cfg.tol_fixed_point = 1e-10;
  cfg.max_iters = 40;
  cfg.collect_diagnostics = false;
  MFGSolution s = solve_mfg(cfg, prob);
  CHECK(s.status == MFGStatus::max_iters);
  CHECK(s.iterations == 40);
  CHECK(s.residual_history.size() == 40);
  CHECK(s.residual_history.back() > cfg.tol_fixed_point);
  CHECK(std::string(to_string(s.status)) == "max_iters");
}

TEST_CASE("divergence is detected after five consecutive growths") {
  PhaseGrid g = make_grid(16, 24);
  MFGProblem prob(g, Hamiltonian::from_name("quadratic", 0.2),
                  Coupling::from_name("linear", 60.0),
                  Coupling::from_name("linear", 60.0),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.theta = 1.0;
  cfg.tol_fixed_point = 1e-10;
  cfg.max_iters = 40;
  cfg.collect_diagnostics = false;
  CHECK_THROWS_AS(solve_mfg(cfg, prob), DivergenceError);
  try {
    solve_mfg(cfg, prob);
  } catch (const DivergenceError& e) {
    CHECK(e.residual_history.size() == 6);
    for (std::size_t k = 1; k < e.residual_history.size(); ++k)
      CHECK(e.residual_history[k] > e.residual_history[k - 1]);
    CHECK(std::string(e.what()).find("five consecutive") !=
          std::string::npos);
  }
}

TEST_CASE("epsilon continuation walks the schedule with warm starts") {
  PhaseGrid g = make_grid(16, 24);
  MFGProblem prob(g, Hamiltonian::from_name("quadratic"),
                  Coupling::from_name("linear"), Coupling::from_name("linear"),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.epsilon_schedule = {0.5, 0.25, 0.125};
  cfg.tol_fixed_point = 1e-7;
  cfg.max_iters = 80;
  cfg.collect_diagnostics = false;
  ContinuationResult cr = epsilon_continuation(cfg, prob);

  REQUIRE(cr.levels.size() == 3);
  CHECK(cr.record.abort_reason.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(cr.levels[i].status == MFGStatus::converged);
    CHECK(cr.levels[i].epsilon == cfg.epsilon_schedule[i]);
    CHECK(cr.record.epsilon[i] == cfg.epsilon_schedule[i]);
  }
  SUBCASE("energy quantities stay bounded along the schedule") {
    CHECK(cr.record.drift_energy_l1[0] ==
          doctest::Approx(0.00497).epsilon(0.03));
    CHECK(cr.record.drift_energy_l1[2] ==
          doctest::Approx(0.00526).epsilon(0.03));
    for (const std::vector<double>* series :
         {&cr.record.drift_energy_l1, &cr.record.hamiltonian_l1,
          &cr.record.sup_u_l1}) {
      const double hi = *std::max_element(series->begin(), series->end());
      const double lo = *std::min_element(series->begin(), series->end());
      CHECK(hi / lo <= 2.0);
    }
  }
  SUBCASE("cauchy distances shrink along the schedule") {
    REQUIRE(cr.record.cauchy_m_l1.size() == 2);
    CHECK(cr.record.cauchy_m_l1[1] < cr.record.cauchy_m_l1[0]);
    CHECK(cr.record.cauchy_u_l1[1] < cr.record.cauchy_u_l1[0]);
    REQUIRE(cr.record.cauchy_trunc_grad[0].size() == 3);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(cr.record.cauchy_trunc_grad[1][j] <
            cr.record.cauchy_trunc_grad[0][j]);
  }
  SUBCASE("warm starting cuts the iteration count") {
    CHECK(cr.levels[1].iterations < cr.levels[0].iterations);
    CHECK(cr.levels[2].iterations <= cr.levels[1].iterations);
  }
  SUBCASE("empty schedule is rejected") {
    cfg.epsilon_schedule.clear();
    CHECK_THROWS_AS(epsilon_continuation(cfg, prob), Error);
  }
}

TEST_CASE("continuation aborts on a failing level and keeps the rest") {
  PhaseGrid g = make_grid(16, 24);
  MFGProblem prob(g, Hamiltonian::from_name("quadratic"),
                  Coupling::from_name("linear", 60.0),
                  Coupling::from_name("linear", 60.0),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.theta = 1.0;
  cfg.tol_fixed_point = 1e-10;
  cfg.max_iters = 40;
  cfg.epsilon_schedule = {1.0, 0.2};
  cfg.collect_diagnostics = false;
  ContinuationResult cr = epsilon_continuation(cfg, prob);
  CHECK(cr.levels.size() == 1);
  CHECK(cr.levels[0].status == MFGStatus::max_iters);
  CHECK(cr.record.abort_reason.find("five consecutive") != std::string::npos);
  CHECK(cr.record.cauchy_m_l1.empty());
}

TEST_CASE("already-Lipschitz base agrees with its regularized solve") {
  PhaseGrid g = make_grid(16, 24);
  MFGProblem prob(g, Hamiltonian::from_name("lipschitz"),
                  Coupling::from_name("linear"), Coupling::from_name("linear"),
                  gaussian_density(g, 0.6, 0.6));
  MFGConfig cfg;
  cfg.tol_fixed_point = 1e-8;
  cfg.max_iters = 80;
  cfg.collect_diagnostics = false;
  MFGSolution direct = solve_mfg(cfg, prob);
  cfg.epsilon_schedule = {0.1};
  ContinuationResult cr = epsilon_continuation(cfg, prob);
  REQUIRE(cr.levels.size() == 1);
  const double dist = sup_t_l1_distance(direct.m, cr.levels[0].m);
  CHECK(dist / sup_t_lp(direct.m, 1.0) < 0.05);  // measured 9e-5
}

TEST_CASE("regularity norms are stable under one refinement") {
  RegularityReport rep[2];
  int idx = 0;
  for (int n : {16, 32}) {
    PhaseGrid g = make_grid(n, n == 16 ? 25 : 50);
    MFGProblem prob = linear_benchmark(g);
    MFGConfig cfg;
    cfg.tol_fixed_point = 1e-8;
    cfg.max_iters = 80;
    cfg.collect_diagnostics = false;
    MFGSolution s = solve_mfg(cfg, prob);
    rep[idx++] = regularity_report(s.m);
  }
  const double ratios[4] = {rep[1].sup_dx_m / rep[0].sup_dx_m,
                            rep[1].sup_dv_m / rep[0].sup_dv_m,
                            rep[1].dvv_l2 / rep[0].dvv_l2,
                            rep[1].dvx_l2 / rep[0].dvx_l2};
  for (double r : ratios) {
    CHECK(r > 0.8);
    CHECK(r < 1.2);
  }
}
