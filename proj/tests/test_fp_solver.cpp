#include <kmfg/fp_solver.hpp>
#include <kmfg/hjb_solver.hpp>

#include <cstdio>
#include <cstdlib>

#include "doctest.h"

using namespace kmfg;

namespace {

PhaseGrid make_grid(int n, int n_t, double T, double L_v,
                    double L_x = 3.14159265358979323846) {
  return PhaseGrid(GridConfig{.d = 1, .T = T, .n_t = n_t, .L_x = L_x,
                              .n_x = n, .L_v = L_v, .n_v = n});
}

FieldD gaussian_density(const PhaseGrid& g, double sx, double sv,
                        double cx = 0, double cv = 0) {
  FieldD m(g);
  for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
    for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
      double e = 0;
      for (int a = 0; a < g.d(); ++a) {
        const double x = g.x_center(r, a) - cx, v = g.v_center(c, a) - cv;
        e += x * x / (2 * sx * sx) + v * v / (2 * sv * sv);
      }
      m.values(r, c) = std::exp(-e);
    }
  m.values /= integrate(m);
  return m;
}

double hist_moment_v(const FieldD& f, int power) {
  double s = 0;
  for (Eigen::Index r = 0; r < f.grid.nx_cells(); ++r)
    for (Eigen::Index c = 0; c < f.grid.nv_cells(); ++c)
      s += f.values(r, c) * std::pow(f.grid.v_axis_center(int(c)), power);
  return s * f.grid.cell_volume();
}

}  // namespace

TEST_CASE("fp problem validation") {
  PhaseGrid g = make_grid(8, 4, 0.2, 3.0);
  FieldD m0 = gaussian_density(g, 0.5, 0.5);

  SUBCASE("good problem accepted") { CHECK_NOTHROW(FPProblem(g, {}, m0)); }
  SUBCASE("mass must be one") {
    FieldD bad = m0;
    bad.values *= 1.5;
    CHECK_THROWS_WITH_AS(FPProblem(g, {}, bad),
                         doctest::Contains("not 1 within"), Error);
  }
  SUBCASE("negative density rejected") {
    FieldD bad = m0;
    bad.values(0, 0) = -1e-3;
    bad.values /= integrate(bad);
    CHECK_THROWS_WITH_AS(FPProblem(g, {}, bad),
                         doctest::Contains("must be >= 0"), Error);
  }
  SUBCASE("drift component count") {
    std::vector<SpaceTimeFieldD> b(2, SpaceTimeFieldD(g));
    CHECK_THROWS_WITH_AS(FPProblem(g, std::move(b), m0),
                         doctest::Contains("one component per v-axis"), Error);
  }
  SUBCASE("drift slice count") {
    std::vector<SpaceTimeFieldD> b(1, SpaceTimeFieldD(g));
    b[0].slices.pop_back();
    CHECK_THROWS_WITH_AS(FPProblem(g, std::move(b), m0),
                         doctest::Contains("n_t + 1 slices"), Error);
  }
}

TEST_CASE("delta density deposit") {
  PhaseGrid g = make_grid(8, 4, 0.2, 4.0);

  SUBCASE("origin splits into four equal quarters") {
    FieldD d = delta_density(g);
    CHECK(std::abs(integrate(d) - 1.0) < 1e-14);
    const double q = 0.25 / g.cell_volume();
    int hits = 0;
    for (Eigen::Index r = 0; r < 8; ++r)
      for (Eigen::Index c = 0; c < 8; ++c)
        if (d.values(r, c) != 0) {
          CHECK(d.values(r, c) == doctest::Approx(q).epsilon(1e-14));
          ++hits;
        }
    CHECK(hits == 4);
  }
  SUBCASE("deposit preserves the mean exactly") {
    FieldD d = delta_density(g, 0.37, -1.21);
    CHECK(std::abs(integrate(d) - 1.0) < 1e-14);
    double mx = 0, mv = 0;
    for (Eigen::Index r = 0; r < 8; ++r)
      for (Eigen::Index c = 0; c < 8; ++c) {
        mx += d.values(r, c) * g.x_axis_center(int(r));
        mv += d.values(r, c) * g.v_axis_center(int(c));
      }
    CHECK(mx * g.cell_volume() == doctest::Approx(0.37).epsilon(1e-13));
    CHECK(mv * g.cell_volume() == doctest::Approx(-1.21).epsilon(1e-13));
  }
  SUBCASE("v clamps at the wall, mass stays one") {
    FieldD d = delta_density(g, 0.0, 99.0);
    CHECK(std::abs(integrate(d) - 1.0) < 1e-14);
    CHECK(d.values.rightCols(1).sum() > 0);
    CHECK(d.values.leftCols(7).sum() == doctest::Approx(0.0));
  }
  SUBCASE("two dimensional deposit") {
    PhaseGrid g2(GridConfig{.d = 2, .T = 0.2, .n_t = 4, .L_x = 2.0,
                            .n_x = 8, .L_v = 3.0, .n_v = 8});
    const double x0[2] = {0.3, -0.4}, v0[2] = {0.1, 0.9};
    FieldD d = delta_density(g2, x0, v0);
    CHECK(std::abs(integrate(d) - 1.0) < 1e-13);
    CHECK(d.values.minCoeff() >= 0.0);
  }
  SUBCASE("scalar form rejects d=2") {
    PhaseGrid g2(GridConfig{.d = 2, .T = 0.2, .n_t = 4, .L_x = 2.0,
                            .n_x = 8, .L_v = 3.0, .n_v = 8});
    CHECK_THROWS_AS(delta_density(g2, 0.0, 0.0), Error);
  }
}

TEST_CASE("delta source converges to the fundamental solution in L1") {
  // frozen measurements: first order toward the exact Gaussian, errors
  // 0.30487 (64^2, n_t=11) and 0.18464 (128^2, n_t=21) at unit-CFL stepping
  OperatorConfig op;
  op.cfl_safety = 1.0;

  PhaseGrid g64 = make_grid(64, 11, 0.5, 4.0);
  FPSolution s64 = solve_fp(FPProblem(g64, {}, delta_density(g64)), op);
  FieldD diff64(g64);
  diff64.values = s64.m.slices[11] - kolmogorov_exact(g64, 0.5, 0.0, 0.0).values;
  const double e64 = lp_norm(diff64, 1.0);
  CHECK(e64 == doctest::Approx(0.30487).epsilon(0.02));

  PhaseGrid g128 = make_grid(128, 21, 0.5, 4.0);
  FPSolution s128 = solve_fp(FPProblem(g128, {}, delta_density(g128)), op);
  FieldD diff128(g128);
  diff128.values =
      s128.m.slices[21] - kolmogorov_exact(g128, 0.5, 0.0, 0.0).values;
  const double e128 = lp_norm(diff128, 1.0);
  CHECK(e128 == doctest::Approx(0.18464).epsilon(0.02));
  CHECK(e64 / e128 > 1.6);  // halving under refinement

  // exact invariants on the rough run
  for (double mass : s128.mass_log) CHECK(std::abs(mass - 1.0) < 1e-12);
  for (const auto& s : s128.m.slices) CHECK(s.minCoeff() >= 0.0);
}

TEST_CASE("even initial data stays even under the free dynamics") {
  PhaseGrid g = make_grid(32, 16, 0.4, 4.0);
  FPSolution sol = solve_fp(FPProblem(g, {}, gaussian_density(g, 0.5, 0.6)));
  const int n = 32;
  double worst = 0;
  for (const auto& s : sol.m.slices)
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c)
        worst = std::max(worst,
                         std::abs(s(r, c) - s(n - 1 - r, n - 1 - c)));
  CHECK(worst < 1e-13 * sol.m.slices[0].maxCoeff());
}

TEST_CASE("conservation log and wall leakage for compact data") {
  PhaseGrid g = make_grid(32, 12, 0.3, 4.0);
  FPSolution sol = solve_fp(FPProblem(g, {}, gaussian_density(g, 0.5, 0.5)));
  CHECK(int(sol.mass_log.size()) == 13);
  for (double mass : sol.mass_log) CHECK(std::abs(mass - 1.0) < 1e-12);
  CHECK(sol.wall_mass_sup >= 0.0);
  CHECK(sol.wall_mass_sup < 1e-4);
}

TEST_CASE("drifted solve keeps exact positivity and mass") {
  PhaseGrid g = make_grid(32, 12, 0.3, 4.0);
  std::vector<SpaceTimeFieldD> b(1, SpaceTimeFieldD(g));
  for (int k = 0; k <= 12; ++k)
    for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
      for (Eigen::Index c = 0; c < g.nv_cells(); ++c)
        b[0].slices[k](r, c) =
            0.8 * std::sin(g.x_axis_center(int(r))) + 0.1 * k;
  FPSolution sol =
      solve_fp(FPProblem(g, std::move(b), gaussian_density(g, 0.5, 0.5)));
  for (double mass : sol.mass_log) CHECK(std::abs(mass - 1.0) < 1e-12);
  for (const auto& s : sol.m.slices) CHECK(s.minCoeff() >= 0.0);
}

TEST_CASE("nan drift aborts with the time level named") {
  PhaseGrid g = make_grid(16, 8, 0.2, 3.0);
  std::vector<SpaceTimeFieldD> b(1, SpaceTimeFieldD(g));
  b[0].slices[3](2, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(FPProblem(g, std::move(b), gaussian_density(g, 0.5, 0.5)),
                       doctest::Contains("FPProblem drift"), Error);
}

TEST_CASE("de giorgi levels") {
  PhaseGrid g = make_grid(64, 1, 1.0, 4.0);

  SUBCASE("alpha ladder") {
    FieldD m(g);
    m.values.setConstant(1e-3);
    m.values /= integrate(m);
    LevelSequence seq = de_giorgi_levels(m, 3);
    CHECK(seq.alpha[0] == 3.0);
    CHECK(seq.alpha[1] == 2.5);
    CHECK(seq.alpha[2] == 2.25);
  }

  SUBCASE("frozen values for the centered peak") {
    FieldD m(g);
    for (Eigen::Index r = 0; r < 64; ++r)
      for (Eigen::Index c = 0; c < 64; ++c) {
        const double x = g.x_axis_center(int(r)), v = g.v_axis_center(int(c));
        m.values(r, c) = 5.0 * std::exp(-(x * x / (2 * 0.4 * 0.4) +
                                          v * v / (2 * 0.5 * 0.5)));
      }
    LevelSequence seq = de_giorgi_levels(m, 7);
    CHECK(seq.U[1] == doctest::Approx(5.3905662786884339).epsilon(1e-10));
    CHECK(seq.A[1] == doctest::Approx(0.88357293382212931).epsilon(1e-10));
    CHECK(seq.U[3] == doctest::Approx(11.020509038545523).epsilon(1e-10));
    CHECK(seq.A[3] == doctest::Approx(1.0799224746714913).epsilon(1e-10));
    for (int k = 1; k < 7; ++k) CHECK(seq.U[k] >= seq.U[k - 1]);
  }

  SUBCASE("fields below 2 truncate to nothing") {
    FieldD m(g);
    for (Eigen::Index r = 0; r < 64; ++r)
      for (Eigen::Index c = 0; c < 64; ++c) {
        const double x = g.x_axis_center(int(r)), v = g.v_axis_center(int(c));
        m.values(r, c) = 1.9 * std::exp(-(x * x + v * v));
      }
    LevelSequence seq = de_giorgi_levels(m, 5);
    for (double u : seq.U) CHECK(u == 0.0);
    for (double a : seq.A) CHECK(a == 0.0);
  }

  SUBCASE("chebyshev step holds across the synthetic family") {
    std::vector<FieldD> family;
    const double peaks[] = {5.0, 6.25, 7.5, 8.75, 10.0};
    const double shapes[][4] = {{0.4, 0.5, 0.0, 0.0},
                                {0.7, 0.35, 0.8, -0.5},
                                {0.3, 0.9, -1.0, 1.2}};
    for (double P : peaks)
      for (const auto& s : shapes) {
        FieldD m(g);
        for (Eigen::Index r = 0; r < 64; ++r)
          for (Eigen::Index c = 0; c < 64; ++c) {
            const double x = g.x_axis_center(int(r)) - s[2];
            const double v = g.v_axis_center(int(c)) - s[3];
            m.values(r, c) = P * std::exp(-(x * x / (2 * s[0] * s[0]) +
                                            v * v / (2 * s[1] * s[1])));
          }
        family.push_back(m);
      }
    {
      FieldD m(g);
      for (Eigen::Index r = 0; r < 64; ++r)
        for (Eigen::Index c = 0; c < 64; ++c) {
          const double x = g.x_axis_center(int(r)), v = g.v_axis_center(int(c));
          m.values(r, c) =
              6.0 * std::exp(-((x + 1) * (x + 1) / (2 * 0.5 * 0.5) +
                               (v + 1) * (v + 1) / (2 * 0.4 * 0.4))) +
              9.0 * std::exp(-((x - 1) * (x - 1) / (2 * 0.35 * 0.35) +
                               (v - 1) * (v - 1) / (2 * 0.6 * 0.6)));
        }
      family.push_back(m);
    }
    CHECK(family.size() == 16);
    int violations = 0;
    for (const auto& m : family) {
      LevelSequence seq = de_giorgi_levels(m, 7);
      for (int k = 1; k < 7; ++k)
        if (seq.A[k] > std::pow(16.0, k) * seq.U[k - 1] &&
            seq.A[k] > 0)
          ++violations;
    }
    CHECK(violations == 0);
  }

  SUBCASE("scale folds into the field") {
    FieldD m = gaussian_density(g, 0.4, 0.5);
    FieldD scaled(g);
    scaled.values = 0.5 * m.values;
    LevelSequence a = de_giorgi_levels(m, 4, 0.5);
    LevelSequence b = de_giorgi_levels(scaled, 4, 1.0);
    for (int k = 0; k < 4; ++k) {
      CHECK(a.U[k] == b.U[k]);
      CHECK(a.A[k] == b.A[k]);
    }
  }

  SUBCASE("space-time integral of a constant-in-time field") {
    PhaseGrid gt = make_grid(32, 10, 0.7, 4.0);
    FieldD m(gt);
    for (Eigen::Index r = 0; r < 32; ++r)
      for (Eigen::Index c = 0; c < 32; ++c) {
        const double x = gt.x_axis_center(int(r)), v = gt.v_axis_center(int(c));
        m.values(r, c) = 4.0 * std::exp(-(x * x + v * v));
      }
    SpaceTimeFieldD st(gt);
    for (auto& s : st.slices) s = m.values;
    LevelSequence sp = de_giorgi_levels(m, 4);
    LevelSequence tm = de_giorgi_levels(st, 4);
    for (int k = 0; k < 4; ++k) {
      CHECK(tm.U[k] == doctest::Approx(0.7 * sp.U[k]).epsilon(1e-13));
      CHECK(tm.A[k] == doctest::Approx(0.7 * sp.A[k]).epsilon(1e-13));
    }
  }

  SUBCASE("argument validation") {
    FieldD m = gaussian_density(g, 0.4, 0.5);
    CHECK_THROWS_AS(de_giorgi_levels(m, 0), Error);
    CHECK_THROWS_AS(de_giorgi_levels(m, 3, -1.0), Error);
  }
}

TEST_CASE("monte carlo free dynamics") {
  PhaseGrid g(GridConfig{.d = 1, .T = 0.5, .n_t = 10, .L_x = M_PI,
                         .n_x = 32, .L_v = 5.0, .n_v = 32});
  FieldD m0 = gaussian_density(g, 0.4, 0.7);
  FPProblem prob(g, {}, m0);
  SpaceTimeFieldD pde = solve_fp(prob).m;
  const long long n = 150000;
  MCReport rep = monte_carlo_fp(prob, n, 42, &pde);

  SUBCASE("histogram is a density and close to the pde") {
    CHECK(std::abs(integrate(rep.histogram) - 1.0) < 1e-12);
    CHECK(rep.histogram.values.minCoeff() >= 0.0);
    CHECK(rep.l1_distance == doctest::Approx(0.10142).epsilon(0.05));
    CHECK(rep.l1_distance < 0.13);
  }

  SUBCASE("variance growth matches the free kinetic law") {
    // sampled V_0 is cell-uniform: variance from the field plus h^2/12
    const double var0 = hist_moment_v(m0, 2) +
                        g.h_v() * g.h_v() / 12.0 -
                        std::pow(hist_moment_v(m0, 1), 2);
    const double expect = var0 + 2.0 * 0.5;
    const double band = 3.0 * expect * std::sqrt(2.0 / double(n)) + 0.004;
    CHECK(std::abs(rep.var_v[0] - expect) < band);
  }

  SUBCASE("path modulus certifies the half-Holder bound") {
    CHECK(rep.modulus_sup > 0.5);
    CHECK(rep.modulus_sup < 2.0);
    CHECK(int(rep.snapshot_times.size()) == 6);
    CHECK(rep.snapshot_times.front() == 0.0);
    CHECK(rep.snapshot_times.back() == doctest::Approx(0.5));
  }

  SUBCASE("seeded determinism and thread invariance") {
    MCReport again = monte_carlo_fp(prob, n, 42, &pde);
    CHECK((again.histogram.values == rep.histogram.values).all());
    CHECK(again.modulus_sup == rep.modulus_sup);
    CHECK(again.var_v[0] == rep.var_v[0]);

    setenv("KMFG_THREADS", "3", 1);
    MCReport threaded = monte_carlo_fp(prob, n, 42, &pde);
    unsetenv("KMFG_THREADS");
    CHECK((threaded.histogram.values == rep.histogram.values).all());
    CHECK(threaded.modulus_sup == rep.modulus_sup);

    MCReport other = monte_carlo_fp(prob, n, 43, &pde);
    CHECK(!(other.histogram.values == rep.histogram.values).all());
  }

  SUBCASE("low particle count raises the warning flag") {
    MCReport tiny = monte_carlo_fp(prob, 100, 1, &pde);
    CHECK(tiny.low_particle_warning);
    CHECK(!rep.low_particle_warning);
  }
}

TEST_CASE("monte carlo feels a constant drift") {
  PhaseGrid g(GridConfig{.d = 1, .T = 0.5, .n_t = 10, .L_x = M_PI,
                         .n_x = 32, .L_v = 5.0, .n_v = 32});
  FieldD m0 = gaussian_density(g, 0.4, 0.7);
  std::vector<SpaceTimeFieldD> b(1, SpaceTimeFieldD(g));
  for (auto& s : b[0].slices) s.setConstant(0.6);
  FPProblem prob(g, std::move(b), m0);
  SpaceTimeFieldD pde = solve_fp(prob).m;
  MCReport rep = monte_carlo_fp(prob, 150000, 7, &pde);
  const double mean_mc = hist_moment_v(rep.histogram, 1);
  CHECK(mean_mc == doctest::Approx(-0.3).epsilon(0.05));
  CHECK(rep.l1_distance < 0.15);
}

TEST_CASE("trajectory streaming leaves the simulation untouched") {
  PhaseGrid g = make_grid(16, 6, 0.3, 4.0);
  FPProblem prob(g, {}, gaussian_density(g, 0.5, 0.6));
  SpaceTimeFieldD pde = solve_fp(prob).m;
  const char* path = "traj_test.csv";
  MCReport plain = monte_carlo_fp(prob, 20000, 5, &pde);
  MCReport traced = monte_carlo_fp(prob, 20000, 5, &pde, {}, path, 4);
  CHECK((traced.histogram.values == plain.histogram.values).all());

  std::FILE* f = std::fopen(path, "r");
  REQUIRE(f != nullptr);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  CHECK(std::string(line) == "particle,t,x0,v0\n");
  int rows = 0;
  double tmax = -1;
  while (std::fgets(line, sizeof line, f)) {
    long pid;
    double t, x, v;
    REQUIRE(std::sscanf(line, "%ld,%lf,%lf,%lf", &pid, &t, &x, &v) == 4);
    CHECK(pid < 4);
    CHECK(std::abs(x) <= g.L_x());
    CHECK(std::abs(v) <= g.L_v());
    tmax = std::max(tmax, t);
    ++rows;
  }
  std::fclose(f);
  std::remove(path);
  CHECK(rows == 4 * 7);  // 4 particles, n_t + 1 levels
  CHECK(tmax == doctest::Approx(0.3));
}

TEST_CASE("pairing with the adjoint backward solve is conserved") {
  PhaseGrid g = make_grid(32, 12, 0.4, 4.0);
  FPProblem prob(g, {}, gaussian_density(g, 0.5, 0.6));
  FPSolution fp = solve_fp(prob);

  FieldD G(g);
  for (Eigen::Index r = 0; r < 32; ++r)
    for (Eigen::Index c = 0; c < 32; ++c) {
      const double x = g.x_axis_center(int(r)), v = g.v_axis_center(int(c));
      G.values(r, c) = std::cos(x) * std::exp(-0.5 * v * v) + 0.3;
    }
  HJBProblem adj(g, Hamiltonian::from_name("zero"), SpaceTimeFieldD(g), G);
  SpaceTimeFieldD phi = solve_hjb(adj);

  std::vector<double> pairing(13);
  for (int k = 0; k <= 12; ++k)
    pairing[k] = pairwise_sum(
                     Array2<double>(fp.m.slices[k] * phi.slices[k])) *
                 g.cell_volume();
  for (int k = 1; k <= 12; ++k)
    CHECK(pairing[k] == doctest::Approx(pairing[0]).epsilon(1e-12));
}

TEST_CASE("two dimensional forward solve") {
  PhaseGrid g(GridConfig{.d = 2, .T = 0.2, .n_t = 6, .L_x = 2.0,
                         .n_x = 8, .L_v = 3.0, .n_v = 8});
  FieldD m0 = gaussian_density(g, 0.5, 0.5);
  FPSolution sol = solve_fp(FPProblem(g, {}, m0));
  for (double mass : sol.mass_log) CHECK(std::abs(mass - 1.0) < 1e-12);
  for (const auto& s : sol.m.slices) CHECK(s.minCoeff() >= 0.0);

  SUBCASE("monte carlo runs and bins consistently") {
    FPProblem prob(g, {}, m0);
    MCReport rep = monte_carlo_fp(prob, 20000, 11, &sol.m);
    CHECK(std::abs(integrate(rep.histogram) - 1.0) < 1e-12);
    CHECK(int(rep.var_v.size()) == 2);
    CHECK(rep.var_v[0] == doctest::Approx(rep.var_v[1]).epsilon(0.2));
    MCReport again = monte_carlo_fp(prob, 20000, 11, &sol.m);
    CHECK((again.histogram.values == rep.histogram.values).all());
  }
}
