#include <doctest.h>

#include <kmfg/hamiltonian.hpp>

#include <random>

using namespace kmfg;

namespace {

// frozen reference values: eps, px, py, H^eps, H_p^eps, excess = H_p^eps.p - H^eps
struct RegSample {
  double eps, px, py, value, gx, gy, excess;
};
const RegSample kRegSamples[] = {
    {1.0, 1.0, 0.0, 5.0000000000000000e-01, 7.5000000000000000e-01,
     0.0000000000000000e+00, 2.5000000000000000e-01},
    {1.0, 5.0, 0.0, 4.1666666666666661e+00, 9.7222222222222232e-01,
     0.0000000000000000e+00, 6.9444444444444442e-01},
    {0.5, 1.5, -2.0, 2.7777777777777777e+00, 9.6296296296296291e-01,
     -1.2839506172839505e+00, 1.2345679012345678e+00},
    {0.1, 3.0, 4.0, 1.6666666666666664e+01, 3.3333333333333330e+00,
     4.4444444444444446e+00, 1.1111111111111111e+01},
    {0.25, -0.3, 0.7, 4.8723350450321484e-01, -4.6372644517450851e-01,
     1.0820283720738531e+00, 4.0930428950083497e-01},
};

}  // namespace

TEST_CASE("regularized quadratic: frozen reference values") {
  for (const auto& s : kRegSamples) {
    Hamiltonian H = Hamiltonian::from_name("quadratic", s.eps);
    const double p[2] = {s.px, s.py};
    double g[2];
    H.gradient(p, 2, g);
    const double val = H.value(p, 2);
    CHECK(val == doctest::Approx(s.value).epsilon(1e-14));
    CHECK(g[0] == doctest::Approx(s.gx).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(s.gy).epsilon(1e-14));
    CHECK(g[0] * s.px + g[1] * s.py - val ==
          doctest::Approx(s.excess).epsilon(1e-13));
  }
}

TEST_CASE("soft norm: frozen reference value") {
  Hamiltonian H = Hamiltonian::from_name("lipschitz");
  const double p[2] = {0.6, -1.1};
  double g[2];
  H.gradient(p, 2, g);
  CHECK(H.value(p, 2) == doctest::Approx(0.6031219541881399).epsilon(1e-14));
  CHECK(g[0] == doctest::Approx(0.3742697169310832).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(-0.6861611477069859).epsilon(1e-14));
}

TEST_CASE("gradient matches central finite differences at random points") {
  std::vector<Hamiltonian> hams = {
      Hamiltonian::from_name("quadratic"),
      Hamiltonian::from_name("half_quadratic"),
      Hamiltonian::from_name("lipschitz"),
      Hamiltonian::from_name("quadratic", 1.0),
      Hamiltonian::from_name("quadratic", 0.5),
      Hamiltonian::from_name("quadratic", 0.1),
      Hamiltonian::from_name("lipschitz", 0.5),
  };
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ud(-5.0, 5.0);
  const double h = 1e-5;
  for (const auto& H : hams) {
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      double p[2] = {ud(rng), ud(rng)};
      double g[2];
      H.gradient(p, 2, g);
      for (int a = 0; a < 2; ++a) {
        double pp[2] = {p[0], p[1]}, pm[2] = {p[0], p[1]};
        pp[a] += h;
        pm[a] -= h;
        const double fd = (H.value(pp, 2) - H.value(pm, 2)) / (2 * h);
        const double rel =
            std::abs(fd - g[a]) / std::max(std::abs(g[a]), 1e-8);
        worst = std::max(worst, rel);
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("regularization is monotone in eps and below the base") {
  Hamiltonian H0 = Hamiltonian::from_name("quadratic");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(-5.0, 5.0);
  const double epses[] = {0.05, 0.1, 0.25, 0.5, 1.0, 2.0};
  for (int trial = 0; trial < 1000; ++trial) {
    double p[2] = {ud(rng), ud(rng)};
    double prev = H0.value(p, 2);
    for (double e : epses) {
      Hamiltonian He = Hamiltonian::from_name("quadratic", e);
      const double val = He.value(p, 2);
      CHECK(val <= prev + 1e-14);
      prev = val;
    }
  }
}

TEST_CASE("structure report: quadratic kinds pass with the stated constants") {
  for (const char* name : {"quadratic", "half_quadratic"}) {
    StructureReport rep = check_structure(Hamiltonian::from_name(name));
    CHECK(rep.pass);
    for (const auto& m : rep.margins) CHECK(m.margin >= -1e-12);
  }
}

TEST_CASE("structure report: Lipschitz and regularized kinds pass") {
  StructureReport rep = check_structure(Hamiltonian::from_name("lipschitz"));
  CHECK(rep.pass);
  for (double eps : {1.0, 0.5, 0.1}) {
    StructureReport r = check_structure(Hamiltonian::from_name("quadratic", eps));
    CHECK(r.pass);
    bool saw_lip = false, saw_le = false;
    for (const auto& m : r.margins) {
      if (m.name == "lipschitz") {
        saw_lip = true;
        // |H_p^eps| <= 1/eps so the 2/eps budget leaves at least 1/eps slack
        CHECK(m.margin >= 1.0 / eps - 1e-9);
      }
      if (m.name == "regularized_le_base") {
        saw_le = true;
        CHECK(m.margin >= -1e-15);
      }
    }
    CHECK(saw_lip);
    CHECK(saw_le);
  }
}

TEST_CASE("structure report: |p| fails the quadratic structure (negative control)") {
  Hamiltonian H = Hamiltonian::from_name("abs_norm");
  CHECK(H.kind() == HamiltonianKind::lipschitz);
  CHECK(check_structure(H).pass);  // fine as a Lipschitz Hamiltonian
  const HamiltonianKind as_quad = HamiltonianKind::quadratic;
  StructureReport rep = check_structure(H, 5.0, 201, &as_quad);
  CHECK_FALSE(rep.pass);
  bool growth_fails = false;
  for (const auto& m : rep.margins)
    if (m.name == "growth" && m.margin < 0) growth_fails = true;
  CHECK(growth_fails);  // |p| <= C|p|^2 breaks near p = 0
}

TEST_CASE("kind classification and construction errors") {
  CHECK(Hamiltonian::from_name("quadratic").kind() == HamiltonianKind::quadratic);
  CHECK(Hamiltonian::from_name("half_quadratic").kind() == HamiltonianKind::quadratic);
  CHECK(Hamiltonian::from_name("lipschitz").kind() == HamiltonianKind::lipschitz);
  CHECK(Hamiltonian::from_name("zero").kind() == HamiltonianKind::lipschitz);
  CHECK(Hamiltonian::from_name("quadratic", 0.5).kind() == HamiltonianKind::regularized);
  CHECK_THROWS_AS(Hamiltonian::from_name("cubic"), Error);
  CHECK_THROWS_AS(Hamiltonian::from_name("quadratic", -1.0), Error);
  CHECK(Hamiltonian::from_name("zero").value1(3.0) == 0.0);
  CHECK(std::isinf(Hamiltonian::from_name("quadratic").lipschitz_L()));
}

TEST_CASE("one-dimensional wrappers agree with the general evaluation") {
  Hamiltonian H = Hamiltonian::from_name("quadratic", 0.5);
  for (double p : {-3.0, -0.2, 0.0, 1.7}) {
    CHECK(H.value1(p) == H.value(&p, 1));
    double g;
    H.gradient(&p, 1, &g);
    CHECK(H.gradient1(p) == g);
  }
}

TEST_CASE("array evaluation matches scalar evaluation") {
  Hamiltonian H = Hamiltonian::from_name("quadratic", 0.25);
  Array2<double> q(3, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-4.0, 4.0);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = ud(rng);
  Array2<double> s = q.square();
  Array2<double> val = ham_value(H, s);
  Array2<double> g2 = ham_gscale2(H, s);
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double p = q.data()[i];
    CHECK(val.data()[i] == doctest::Approx(H.value1(p)).epsilon(1e-15));
    CHECK(g2.data()[i] * p == doctest::Approx(H.gradient1(p)).epsilon(1e-15));
  }
}

TEST_CASE("legendre excess closed forms and convexity sign") {
  SUBCASE("quadratic base gives excess equal to H") {
    Hamiltonian H = Hamiltonian::from_name("quadratic");
    double p[2] = {2.0, 0.0};
    CHECK(legendre_excess(H, p, 2) == doctest::Approx(4.0).epsilon(1e-15));
  }
  SUBCASE("regularized hand value at epsilon 1") {
    Hamiltonian H = Hamiltonian::from_name("quadratic", 1.0);
    double p[2] = {1.0, 0.0};
    CHECK(legendre_excess(H, p, 2) == doctest::Approx(0.25).epsilon(1e-14));
    // 0.25 = H^eps(p)/2 at this point
    CHECK(legendre_excess(H, p, 2) ==
          doctest::Approx(0.5 * H.value(p, 2)).epsilon(1e-14));
  }
  SUBCASE("vanishes at the origin") {
    for (const char* name : {"zero", "quadratic", "half_quadratic",
                             "lipschitz", "abs_norm"}) {
      Hamiltonian H = Hamiltonian::from_name(name);
      CHECK(legendre_excess1(H, 0.0) == 0.0);
    }
  }
  SUBCASE("nonnegative for every raw convex base at random points") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(-6.0, 6.0);
    for (const char* name : {"zero", "quadratic", "half_quadratic",
                             "lipschitz", "abs_norm"}) {
      Hamiltonian H = Hamiltonian::from_name(name);
      for (int k = 0; k < 200; ++k) {
        double p[2] = {ud(rng), ud(rng)};
        CHECK(legendre_excess(H, p, 2) >= -1e-14);
      }
    }
  }
  SUBCASE("regularized quadratic class keeps a positive excess") {
    // closed form: excess = H^eps / (1 + eps |p|); the wrap of the
    // degree-one bases is not convex and genuinely dips negative
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ud(-6.0, 6.0);
    for (const char* name : {"quadratic", "half_quadratic"}) {
      for (double eps : {0.3, 1.0}) {
        Hamiltonian H = Hamiltonian::from_name(name, eps);
        Hamiltonian raw = Hamiltonian::from_name(name);
        for (int k = 0; k < 200; ++k) {
          double p[2] = {ud(rng), ud(rng)};
          const double r = std::sqrt(raw.value(p, 2));
          CHECK(legendre_excess(H, p, 2) ==
                doctest::Approx(H.value(p, 2) / (1 + eps * r)).epsilon(1e-12));
          CHECK(legendre_excess(H, p, 2) >= 0.0);
        }
      }
    }
    Hamiltonian Habs = Hamiltonian::from_name("abs_norm", 1.0);
    double p[2] = {2.0, 0.0};
    CHECK(legendre_excess(Habs, p, 2) < 0.0);
  }
  SUBCASE("array form matches the pointwise form") {
    Hamiltonian H = Hamiltonian::from_name("quadratic", 0.5);
    Array2<double> s(2, 3);
    s << 0.0, 0.5, 1.0, 2.0, 4.0, 9.0;
    Array2<double> ex = ham_excess(H, s);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double p = std::sqrt(s.data()[i]);
      CHECK(ex.data()[i] == doctest::Approx(legendre_excess1(H, p)).epsilon(1e-14));
    }
  }
}
