/// Forward solver for dt m - Lap_v m - v . D_x m - div_v(m b) = 0 built
/// from the split steps in kolmogorov_core, plus the level-set truncation
/// sequence used by the boundedness argument and an Euler-Maruyama particle
/// cross-check of the same dynamics.
///
/// The particle SDE matches the characteristics of the implemented PDE:
/// dX = -V dt, dV = -b dt + sqrt(2) dB, periodic in x, reflecting at the
/// v walls (the no-flux twin of the PDE boundary). Blocks of particles get
/// independent streams derived from (seed, block), and block results are
/// merged in block order, so the output is identical for any thread count.

#pragma once

#include <kmfg/kolmogorov_core.hpp>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace kmfg {

struct FPProblem {
  PhaseGrid grid;
  std::vector<SpaceTimeFieldD> b;  // one component per v-axis; empty = no drift
  FieldD m0;

  FPProblem(const PhaseGrid& g, std::vector<SpaceTimeFieldD> drift,
            const FieldD& initial)
      : grid(g), b(std::move(drift)), m0(initial) {
    if (!grid.same_geometry(m0.grid))
      throw Error("FPProblem: m0 grid disagrees");
    if (!b.empty() && int(b.size()) != grid.d())
      throw Error("FPProblem: drift needs one component per v-axis");
    for (const auto& comp : b) {
      if (!grid.same_geometry(comp.grid))
        throw Error("FPProblem: drift grid disagrees");
      if (int(comp.slices.size()) != grid.n_t() + 1)
        throw Error("FPProblem: drift must carry n_t + 1 slices");
      for (const auto& s : comp.slices) require_finite(s, "FPProblem drift");
    }
    require_finite(m0.values, "FPProblem m0");
    if (m0.values.minCoeff() < 0) throw Error("FPProblem: m0 must be >= 0");
    const double mass = integrate(m0);
    if (std::abs(mass - 1.0) > 1e-10)
      throw Error("FPProblem: m0 mass " + detail::fmt_g(mass) +
                  " is not 1 within 1e-10");
  }
};

struct FPSolution {
  SpaceTimeFieldD m;
  std::vector<double> mass_log;  // discrete mass at every time level
  double wall_mass_sup = 0;      // sup_t mass sitting in the outermost v cells
};

namespace detail {

inline double wall_mass(const Array2<double>& slice, const PhaseGrid& g) {
  const int n = g.n_v();
  double s = 0;
  for (Eigen::Index c = 0; c < slice.cols(); ++c) {
    bool wall = false;
    for (int axis = 0; axis < g.d(); ++axis) {
      const int j = g.d() == 1 ? int(c)
                               : (axis == 0 ? int(c / n) : int(c % n));
      wall = wall || j == 0 || j == n - 1;
    }
    if (wall) s += pairwise_sum(slice.col(c).data(), slice.rows());
  }
  return s * g.cell_volume();
}

}  // namespace detail

/// Forward Strang march. Every slice is nonnegative exactly (M-matrix step
/// plus convex upwind transport) and keeps unit mass to roundoff; both are
/// asserted per step rather than trusted.
inline FPSolution solve_fp(const FPProblem& prob,
                           const OperatorConfig& op = {}) {
  const PhaseGrid& g = prob.grid;
  const double dt = g.dt();
  FPSolution sol;
  sol.m = SpaceTimeFieldD(g);
  sol.m.slices[0] = prob.m0.values;
  sol.mass_log.push_back(integrate(prob.m0));
  sol.wall_mass_sup = detail::wall_mass(prob.m0.values, g);

  FieldD w(g);
  std::vector<Array2<double>> b_mid(prob.b.size());
  for (int k = 0; k < g.n_t(); ++k) {
    w.values = sol.m.slices[k];
    for (std::size_t a = 0; a < prob.b.size(); ++a)
      b_mid[a] = 0.5 * (prob.b[a].slices[k] + prob.b[a].slices[k + 1]);

    transport_step(w, dt / 2, -1, op);
    v_diffusion_drift_step(w, dt, b_mid, VStepMode::fp);
    transport_step(w, dt / 2, -1, op);

    if (!w.values.isFinite().all())
      throw Error("solve_fp: non-finite values at time level " +
                  std::to_string(k + 1));
    if (w.values.minCoeff() < 0)
      throw Error("solve_fp: internal assertion failed, negative density at "
                  "time level " +
                  std::to_string(k + 1));
    sol.m.slices[k + 1] = w.values;
    sol.mass_log.push_back(integrate(w));
    sol.wall_mass_sup =
        std::max(sol.wall_mass_sup, detail::wall_mass(w.values, g));
  }
  return sol;
}

/// Unit point mass deposited with cloud-in-cell weights (periodic in x,
/// clamped in v); the discrete stand-in for a delta source.
inline FieldD delta_density(const PhaseGrid& g, const double* x0,
                            const double* v0) {
  struct AxisDep {
    int lo[2];
    double w[2];
  };
  const int d = g.d();
  std::vector<AxisDep> xdep(d), vdep(d);
  for (int a = 0; a < d; ++a) {
    const double fx = (x0[a] + g.L_x()) / g.h_x() - 0.5;
    int i0 = int(std::floor(fx));
    const double t = fx - i0;
    const int n = g.n_x();
    xdep[a].lo[0] = ((i0 % n) + n) % n;
    xdep[a].lo[1] = (xdep[a].lo[0] + 1) % n;
    xdep[a].w[0] = 1 - t;
    xdep[a].w[1] = t;
    const double fv = (v0[a] + g.L_v()) / g.h_v() - 0.5;
    int j0 = int(std::floor(fv));
    double s = fv - j0;
    const int m = g.n_v();
    if (j0 < 0) { j0 = 0; s = 0; }
    if (j0 > m - 2) { j0 = m - 2; s = 1; }
    vdep[a].lo[0] = j0;
    vdep[a].lo[1] = j0 + 1;
    vdep[a].w[0] = 1 - s;
    vdep[a].w[1] = s;
  }
  FieldD out(g);
  const int corners_x = 1 << d, corners_v = 1 << d;
  for (int cx = 0; cx < corners_x; ++cx)
    for (int cv = 0; cv < corners_v; ++cv) {
      Eigen::Index row = 0, col = 0;
      double w = 1;
      for (int a = 0; a < d; ++a) {
        const int bx = (cx >> a) & 1, bv = (cv >> a) & 1;
        row = row * g.n_x() + xdep[a].lo[bx];
        col = col * g.n_v() + vdep[a].lo[bv];
        w *= xdep[a].w[bx] * vdep[a].w[bv];
      }
      out.values(row, col) += w / g.cell_volume();
    }
  return out;
}

inline FieldD delta_density(const PhaseGrid& g, double x0 = 0, double v0 = 0) {
  if (g.d() != 1) throw Error("delta_density: scalar form is d=1 only");
  return delta_density(g, &x0, &v0);
}

// ---------------------------------------------------------------------------
// level truncations

struct LevelSequence {
  std::vector<double> alpha;  // 2 + 2^-k: 3, 2.5, 2.25, ...
  std::vector<double> U;      // integral of m_k^4
  std::vector<double> A;      // measure of {m_k > 0}
};

/// Truncation sequence m_k = (scale * m - alpha_k)_+ with U_k and the
/// superlevel measures A_k. The Chebyshev step A_k <= 16^k U_{k-1} is a
/// property of peaked fields (checked in tests), not of the raw definition.
inline LevelSequence de_giorgi_levels(const FieldD& m, int K,
                                      double scale = 1.0) {
  if (K < 1) throw Error("de_giorgi_levels: K must be >= 1");
  if (scale <= 0) throw Error("de_giorgi_levels: scale must be > 0");
  require_finite(m.values, "de_giorgi_levels");
  LevelSequence seq;
  const double vol = m.grid.cell_volume();
  for (int k = 0; k < K; ++k) {
    const double alpha = 2.0 + std::pow(2.0, -double(k));
    Array2<double> mk = (scale * m.values - alpha).max(0.0);
    seq.alpha.push_back(alpha);
    seq.U.push_back(pairwise_sum(Array2<double>(mk.pow(4))) * vol);
    seq.A.push_back(double((mk > 0.0).count()) * vol);
  }
  return seq;
}

/// Space-time version: U and A integrate over t with trapezoid weights.
inline LevelSequence de_giorgi_levels(const SpaceTimeFieldD& m, int K,
                                      double scale = 1.0) {
  if (K < 1) throw Error("de_giorgi_levels: K must be >= 1");
  if (scale <= 0) throw Error("de_giorgi_levels: scale must be > 0");
  LevelSequence seq;
  const PhaseGrid& g = m.grid;
  const double vol = g.cell_volume();
  for (int k = 0; k < K; ++k) {
    const double alpha = 2.0 + std::pow(2.0, -double(k));
    double Uk = 0, Ak = 0;
    for (int j = 0; j <= g.n_t(); ++j) {
      require_finite(m.slices[j], "de_giorgi_levels");
      Array2<double> mk = (scale * m.slices[j] - alpha).max(0.0);
      const double wt = (j == 0 || j == g.n_t()) ? 0.5 : 1.0;
      Uk += wt * pairwise_sum(Array2<double>(mk.pow(4)));
      Ak += wt * double((mk > 0.0).count());
    }
    seq.alpha.push_back(alpha);
    seq.U.push_back(Uk * vol * g.dt());
    seq.A.push_back(Ak * vol * g.dt());
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Monte Carlo cross-check

struct MCReport {
  FieldD histogram;           // empirical density at t = T
  double l1_distance = 0;     // vs the PDE final slice
  std::vector<double> var_v;  // empirical Var(V_T) per axis
  double modulus_sup = 0;     // sup over pairs of E[|dX|+|dV|] / sqrt(dt)
  std::vector<double> snapshot_times;
  bool low_particle_warning = false;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline int env_threads() {
  const char* s = std::getenv("KMFG_THREADS");
  if (!s) return 1;
  const int n = std::atoi(s);
  return n >= 1 ? n : 1;
}

/// Multilinear interpolation of one drift component at (x, v), periodic in
/// x and clamped in v; slice index fixed by the caller.
inline double interp_b(const Array2<double>& slice, const PhaseGrid& g,
                       const double* x, const double* v) {
  const int d = g.d();
  int xlo[2][2];
  double xw[2][2];
  int vlo[2][2];
  double vw[2][2];
  for (int a = 0; a < d; ++a) {
    const double fx = (x[a] + g.L_x()) / g.h_x() - 0.5;
    int i0 = int(std::floor(fx));
    const double t = fx - i0;
    const int n = g.n_x();
    xlo[a][0] = ((i0 % n) + n) % n;
    xlo[a][1] = (xlo[a][0] + 1) % n;
    xw[a][0] = 1 - t;
    xw[a][1] = t;
    const double fv = (v[a] + g.L_v()) / g.h_v() - 0.5;
    int j0 = int(std::floor(fv));
    double s = fv - j0;
    const int m = g.n_v();
    if (j0 < 0) { j0 = 0; s = 0; }
    if (j0 > m - 2) { j0 = m - 2; s = 1; }
    vlo[a][0] = j0;
    vlo[a][1] = j0 + 1;
    vw[a][0] = 1 - s;
    vw[a][1] = s;
  }
  double acc = 0;
  for (int cx = 0; cx < (1 << d); ++cx)
    for (int cv = 0; cv < (1 << d); ++cv) {
      Eigen::Index row = 0, col = 0;
      double w = 1;
      for (int a = 0; a < d; ++a) {
        row = row * g.n_x() + xlo[a][(cx >> a) & 1];
        col = col * g.n_v() + vlo[a][(cv >> a) & 1];
        w *= xw[a][(cx >> a) & 1] * vw[a][(cv >> a) & 1];
      }
      acc += w * slice(row, col);
    }
  return acc;
}

struct MCBlockResult {
  Array2<double> counts;
  std::vector<double> sum_v, sum_v2;           // per axis at T
  std::vector<double> pair_abs;                // per snapshot pair
};

}  // namespace detail

/// Euler-Maruyama simulation of dX = -V dt, dV = -b dt + sqrt(2) dB on the
/// PDE time grid, binned on the PDE cells. `pde` defaults to solve_fp on
/// the same problem. Deterministic for a fixed seed independent of
/// KMFG_THREADS. When `trajectory_csv` is set, the first `n_trajectories`
/// particles stream their paths as rows (particle, t, x..., v...); recording
/// consumes no random draws, so results match the non-recording run.
inline MCReport monte_carlo_fp(const FPProblem& prob, long long n_particles,
                               std::uint64_t seed,
                               const SpaceTimeFieldD* pde = nullptr,
                               const OperatorConfig& op = {},
                               const char* trajectory_csv = nullptr,
                               int n_trajectories = 8) {
  if (n_particles < 1) throw Error("monte_carlo_fp: need n_particles >= 1");
  const PhaseGrid& g = prob.grid;
  const int d = g.d();
  const int n_t = g.n_t();
  const double dt = g.dt();

  MCReport rep;
  rep.histogram = FieldD(g);
  rep.low_particle_warning = n_particles < 10000;
  if (rep.low_particle_warning)
    std::fprintf(stderr,
                 "monte_carlo_fp: %lld particles, histogram noise will "
                 "dominate below 1e4\n",
                 n_particles);

  SpaceTimeFieldD pde_local(g);
  if (!pde) {
    pde_local = solve_fp(prob, op).m;
    pde = &pde_local;
  }

  // CDF sampling of m0: cells weighted by value (row-major scan)
  const Eigen::Index cells = g.nx_cells() * g.nv_cells();
  std::vector<double> cdf(cells);
  {
    double acc = 0;
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
      for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
        acc += prob.m0.values(r, c);
        cdf[i++] = acc;
      }
    for (auto& x : cdf) x /= acc;
  }

  const int n_snap = 6;
  std::vector<int> snap_steps(n_snap);
  for (int i = 0; i < n_snap; ++i)
    snap_steps[i] = int(std::llround(double(i) * n_t / (n_snap - 1)));
  rep.snapshot_times.resize(n_snap);
  for (int i = 0; i < n_snap; ++i)
    rep.snapshot_times[i] = g.t_level(snap_steps[i]);
  const int n_pairs = n_snap * (n_snap - 1) / 2;

  const long long block_size = 16384;
  const long long n_blocks = (n_particles + block_size - 1) / block_size;
  std::vector<detail::MCBlockResult> results{std::size_t(n_blocks)};
  std::string traj_rows;  // filled by block 0 only

  auto run_block = [&](long long blk) {
    detail::MCBlockResult& out = results[std::size_t(blk)];
    out.counts = Array2<double>::Zero(g.nx_cells(), g.nv_cells());
    out.sum_v.assign(std::size_t(d), 0.0);
    out.sum_v2.assign(std::size_t(d), 0.0);
    out.pair_abs.assign(std::size_t(n_pairs), 0.0);
    std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(
                                               std::uint64_t(blk) + 1)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const long long lo = blk * block_size;
    const long long hi = std::min(n_particles, lo + block_size);
    double x[2], v[2];
    double snaps[6][4];
    for (long long p = lo; p < hi; ++p) {
      // sample the start cell from m0, uniform within the cell
      const double u = unif(rng);
      const Eigen::Index cell =
          std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
      Eigen::Index row = cell / g.nv_cells(), col = cell % g.nv_cells();
      for (int a = d - 1; a >= 0; --a) {
        x[a] = g.x_axis_center(int(row % g.n_x())) +
               (unif(rng) - 0.5) * g.h_x();
        row /= g.n_x();
        v[a] = g.v_axis_center(int(col % g.n_v())) +
               (unif(rng) - 0.5) * g.h_v();
        col /= g.n_v();
      }
      const bool record =
          trajectory_csv && blk == 0 && p - lo < n_trajectories;
      int next_snap = 0;
      for (int k = 0; k <= n_t; ++k) {
        if (record) {
          traj_rows += std::to_string(p) + "," + detail::fmt_g(g.t_level(k));
          for (int a = 0; a < d; ++a) traj_rows += "," + detail::fmt_g(x[a]);
          for (int a = 0; a < d; ++a) traj_rows += "," + detail::fmt_g(v[a]);
          traj_rows += "\n";
        }
        while (next_snap < n_snap && snap_steps[next_snap] == k) {
          for (int a = 0; a < d; ++a) {
            snaps[next_snap][a] = x[a];
            snaps[next_snap][d + a] = v[a];
          }
          ++next_snap;
        }
        if (k == n_t) break;
        double bval[2] = {0, 0};
        if (!prob.b.empty())
          for (int a = 0; a < d; ++a)
            bval[a] = detail::interp_b(prob.b[a].slices[k], g, x, v);
        for (int a = 0; a < d; ++a) {
          x[a] -= v[a] * dt;
          v[a] += -bval[a] * dt + std::sqrt(2.0 * dt) * normal(rng);
          // periodic x
          const double span = 2 * g.L_x();
          x[a] -= span * std::floor((x[a] + g.L_x()) / span);
          // reflecting v walls
          for (int rfl = 0; rfl < 8 && (v[a] > g.L_v() || v[a] < -g.L_v());
               ++rfl)
            v[a] = v[a] > g.L_v() ? 2 * g.L_v() - v[a] : -2 * g.L_v() - v[a];
        }
      }
      // bin at T
      Eigen::Index brow = 0, bcol = 0;
      for (int a = 0; a < d; ++a) {
        int ix = int(std::floor((x[a] + g.L_x()) / g.h_x()));
        ix = std::min(g.n_x() - 1, std::max(0, ix));
        int jv = int(std::floor((v[a] + g.L_v()) / g.h_v()));
        jv = std::min(g.n_v() - 1, std::max(0, jv));
        brow = brow * g.n_x() + ix;
        bcol = bcol * g.n_v() + jv;
      }
      out.counts(brow, bcol) += 1.0;
      for (int a = 0; a < d; ++a) {
        out.sum_v[std::size_t(a)] += v[a];
        out.sum_v2[std::size_t(a)] += v[a] * v[a];
      }
      int pair = 0;
      for (int i = 0; i < n_snap; ++i)
        for (int j = i + 1; j < n_snap; ++j, ++pair) {
          double acc = 0;
          for (int a = 0; a < 2 * d; ++a)
            acc += std::abs(snaps[j][a] - snaps[i][a]);
          out.pair_abs[std::size_t(pair)] += acc;
        }
    }
  };

  const int n_threads = std::min<long long>(detail::env_threads(), n_blocks);
  if (n_threads <= 1) {
    for (long long blk = 0; blk < n_blocks; ++blk) run_block(blk);
  } else {
    std::atomic<long long> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (long long blk = next.fetch_add(1); blk < n_blocks;
             blk = next.fetch_add(1))
          run_block(blk);
      });
    for (auto& th : pool) th.join();
  }

  // merge in block order: deterministic regardless of scheduling
  std::vector<double> sum_v(std::size_t(d), 0.0), sum_v2(std::size_t(d), 0.0);
  std::vector<double> pair_abs(std::size_t(n_pairs), 0.0);
  Array2<double> counts = Array2<double>::Zero(g.nx_cells(), g.nv_cells());
  for (const auto& r : results) {
    counts += r.counts;
    for (int a = 0; a < d; ++a) {
      sum_v[std::size_t(a)] += r.sum_v[std::size_t(a)];
      sum_v2[std::size_t(a)] += r.sum_v2[std::size_t(a)];
    }
    for (int p = 0; p < n_pairs; ++p)
      pair_abs[std::size_t(p)] += r.pair_abs[std::size_t(p)];
  }

  if (trajectory_csv) {
    std::FILE* f = std::fopen(trajectory_csv, "w");
    if (!f)
      throw Error("monte_carlo_fp: cannot open trajectory file " +
                  std::string(trajectory_csv));
    std::string header = "particle,t";
    for (int a = 0; a < d; ++a) header += ",x" + std::to_string(a);
    for (int a = 0; a < d; ++a) header += ",v" + std::to_string(a);
    std::fprintf(f, "%s\n%s", header.c_str(), traj_rows.c_str());
    std::fclose(f);
  }

  const double n = double(n_particles);
  rep.histogram.values = counts / (n * g.cell_volume());
  FieldD diff(g);
  diff.values = rep.histogram.values - pde->slices[n_t];
  rep.l1_distance = lp_norm(diff, 1.0);
  for (int a = 0; a < d; ++a) {
    const double mean = sum_v[std::size_t(a)] / n;
    rep.var_v.push_back(sum_v2[std::size_t(a)] / n - mean * mean);
  }
  int pair = 0;
  for (int i = 0; i < n_snap; ++i)
    for (int j = i + 1; j < n_snap; ++j, ++pair) {
      const double gap = rep.snapshot_times[j] - rep.snapshot_times[i];
      if (gap <= 0) continue;
      rep.modulus_sup = std::max(
          rep.modulus_sup, pair_abs[std::size_t(pair)] / n / std::sqrt(gap));
    }
  return rep;
}

}  // namespace kmfg
