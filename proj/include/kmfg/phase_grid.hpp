/// Phase-space grid, field containers, quadrature and norms.
///
/// Domain: x in [-L_x, L_x)^d periodic, v in [-L_v, L_v]^d truncated with
/// no-flux walls, t in [0, T]. Cells are centered; spatial quadrature is
/// midpoint, time quadrature over stored levels is trapezoid. Fields store
/// one value per cell in a dense array with rows indexing x-cells and
/// columns indexing v-cells (row-major, v fastest), matching the on-disk
/// checkpoint layout.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace kmfg {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <typename Scalar>
using Array2 = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Array1 = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Fixed-order pairwise summation; deterministic for a given length.
template <typename Scalar>
Scalar pairwise_sum(const Scalar* data, std::ptrdiff_t n) {
  if (n <= 8) {
    Scalar s = 0;
    for (std::ptrdiff_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::ptrdiff_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

template <typename Scalar>
Scalar pairwise_sum(const Array2<Scalar>& a) {
  return pairwise_sum(a.data(), a.size());
}

template <typename Scalar>
Scalar pairwise_sum(const Array1<Scalar>& a) {
  return pairwise_sum(a.data(), a.size());
}

struct GridConfig {
  int d = 1;
  double T = 1.0;
  int n_t = 100;
  double L_x = 3.14159265358979323846;
  int n_x = 64;
  double L_v = 4.0;
  int n_v = 64;
  std::int64_t memory_budget_cells = std::int64_t(1) << 26;
};

class PhaseGrid {
 public:
  PhaseGrid() : PhaseGrid(GridConfig{}) {}

  explicit PhaseGrid(const GridConfig& c) : cfg_(c) {
    if (cfg_.d != 1 && cfg_.d != 2) throw Error("d must be 1 or 2");
    if (!(cfg_.T > 0)) throw Error("T must be positive");
    if (cfg_.n_t < 1) throw Error("n_t must be >= 1");
    if (!(cfg_.L_x > 0) || !(cfg_.L_v > 0)) throw Error("L_x and L_v must be positive");
    if (cfg_.n_x < 4 || (cfg_.n_x & (cfg_.n_x - 1)) != 0)
      throw Error("n_x must be power of two >= 4");
    if (cfg_.n_v < 4) throw Error("n_v must be >= 4");
    const std::int64_t cells =
        std::int64_t(nx_cells()) * std::int64_t(nv_cells());
    if (cells > cfg_.memory_budget_cells)
      throw Error("grid exceeds memory budget: " + std::to_string(cells) +
                  " cells > " + std::to_string(cfg_.memory_budget_cells));
  }

  int d() const { return cfg_.d; }
  double T() const { return cfg_.T; }
  int n_t() const { return cfg_.n_t; }
  double L_x() const { return cfg_.L_x; }
  int n_x() const { return cfg_.n_x; }
  double L_v() const { return cfg_.L_v; }
  int n_v() const { return cfg_.n_v; }
  const GridConfig& config() const { return cfg_; }

  double dt() const { return cfg_.T / cfg_.n_t; }
  double h_x() const { return 2.0 * cfg_.L_x / cfg_.n_x; }
  double h_v() const { return 2.0 * cfg_.L_v / cfg_.n_v; }

  Eigen::Index nx_cells() const {
    Eigen::Index n = cfg_.n_x;
    return cfg_.d == 1 ? n : n * n;
  }
  Eigen::Index nv_cells() const {
    Eigen::Index n = cfg_.n_v;
    return cfg_.d == 1 ? n : n * n;
  }
  double cell_volume() const {
    return std::pow(h_x(), cfg_.d) * std::pow(h_v(), cfg_.d);
  }

  /// Center coordinate of x-cell index along one axis.
  double x_axis_center(int i) const { return -cfg_.L_x + (i + 0.5) * h_x(); }
  double v_axis_center(int j) const { return -cfg_.L_v + (j + 0.5) * h_v(); }

  /// Decode flattened cell indices (row = x, col = v); axis in [0, d).
  double x_center(Eigen::Index row, int axis) const {
    if (cfg_.d == 1) return x_axis_center(int(row));
    return axis == 0 ? x_axis_center(int(row / cfg_.n_x))
                     : x_axis_center(int(row % cfg_.n_x));
  }
  double v_center(Eigen::Index col, int axis) const {
    if (cfg_.d == 1) return v_axis_center(int(col));
    return axis == 0 ? v_axis_center(int(col / cfg_.n_v))
                     : v_axis_center(int(col % cfg_.n_v));
  }

  /// |x|^2 per row and |v|^2 per column, as quadrature weight vectors.
  Array1<double> x_sq_weights() const {
    Array1<double> w(nx_cells());
    for (Eigen::Index r = 0; r < nx_cells(); ++r) {
      double s = 0;
      for (int a = 0; a < cfg_.d; ++a) s += x_center(r, a) * x_center(r, a);
      w[r] = s;
    }
    return w;
  }
  Array1<double> v_sq_weights() const {
    Array1<double> w(nv_cells());
    for (Eigen::Index c = 0; c < nv_cells(); ++c) {
      double s = 0;
      for (int a = 0; a < cfg_.d; ++a) s += v_center(c, a) * v_center(c, a);
      w[c] = s;
    }
    return w;
  }

  double t_level(int k) const { return k * dt(); }

  bool same_geometry(const PhaseGrid& o) const {
    return cfg_.d == o.cfg_.d && cfg_.n_x == o.cfg_.n_x &&
           cfg_.n_v == o.cfg_.n_v && cfg_.L_x == o.cfg_.L_x &&
           cfg_.L_v == o.cfg_.L_v;
  }

 private:
  GridConfig cfg_;
};

template <typename Scalar>
struct Field {
  PhaseGrid grid;
  Array2<Scalar> values;  // (nx_cells, nv_cells)

  Field() = default;
  explicit Field(const PhaseGrid& g)
      : grid(g), values(Array2<Scalar>::Zero(g.nx_cells(), g.nv_cells())) {}
  Field(const PhaseGrid& g, Array2<Scalar> v) : grid(g), values(std::move(v)) {
    if (values.rows() != grid.nx_cells() || values.cols() != grid.nv_cells())
      throw Error("field shape does not match grid");
  }
};

template <typename Scalar>
struct SpaceTimeField {
  PhaseGrid grid;
  std::vector<Array2<Scalar>> slices;  // n_t + 1 levels, slices[k] at t = k dt

  SpaceTimeField() = default;
  explicit SpaceTimeField(const PhaseGrid& g) : grid(g) {
    slices.assign(g.n_t() + 1,
                  Array2<Scalar>::Zero(g.nx_cells(), g.nv_cells()));
  }
  Field<Scalar> at(int k) const { return Field<Scalar>(grid, slices.at(k)); }
};

using FieldD = Field<double>;
using SpaceTimeFieldD = SpaceTimeField<double>;

template <typename Scalar>
void require_finite(const Array2<Scalar>& a, const char* what) {
  if (!a.isFinite().all()) throw Error(std::string(what) + ": non-finite entries");
}

/// Midpoint quadrature over phase space.
template <typename Scalar>
Scalar integrate(const Field<Scalar>& f) {
  require_finite(f.values, "integrate");
  return pairwise_sum(f.values) * Scalar(f.grid.cell_volume());
}

/// Trapezoid in time of the spatial integrals.
template <typename Scalar>
Scalar integrate(const SpaceTimeField<Scalar>& f) {
  Scalar s = 0;
  const int nt = int(f.slices.size()) - 1;
  for (int k = 0; k <= nt; ++k) {
    require_finite(f.slices[k], "integrate");
    const Scalar w = (k == 0 || k == nt) ? Scalar(0.5) : Scalar(1);
    s += w * pairwise_sum(f.slices[k]);
  }
  return s * Scalar(f.grid.cell_volume()) * Scalar(f.grid.dt());
}

enum class MomentWeight { x_sq, v_sq, v_fourth, energy, entropy };

template <typename Scalar>
Scalar moment(const Field<Scalar>& f, MomentWeight w) {
  require_finite(f.values, "moment");
  const auto& g = f.grid;
  Array2<Scalar> weighted(f.values.rows(), f.values.cols());
  switch (w) {
    case MomentWeight::x_sq: {
      Array1<double> xw = g.x_sq_weights();
      weighted = f.values.colwise() * xw.cast<Scalar>();
      break;
    }
    case MomentWeight::v_sq: {
      Array1<double> vw = g.v_sq_weights();
      weighted = f.values.rowwise() * vw.cast<Scalar>().transpose();
      break;
    }
    case MomentWeight::v_fourth: {
      Array1<double> vw = g.v_sq_weights();
      weighted = f.values.rowwise() * vw.square().cast<Scalar>().transpose();
      break;
    }
    case MomentWeight::energy: {
      Array1<double> xw = g.x_sq_weights();
      Array1<double> vw = g.v_sq_weights();
      weighted = (f.values.colwise() * xw.cast<Scalar>()) +
                 (f.values.rowwise() * vw.cast<Scalar>().transpose());
      break;
    }
    case MomentWeight::entropy: {
      if ((f.values < Scalar(0)).any())
        throw Error("moment: entropy weight requires nonnegative field");
      weighted = (f.values > Scalar(0))
                     .select(f.values * f.values.log(), Array2<Scalar>::Zero(
                                 f.values.rows(), f.values.cols()));
      break;
    }
  }
  return pairwise_sum(weighted) * Scalar(g.cell_volume());
}

template <typename Scalar>
Scalar lp_norm(const Field<Scalar>& f, double p) {
  require_finite(f.values, "lp_norm");
  if (p < 1.0) throw Error("lp_norm: p must be in [1, inf]");
  if (std::isinf(p)) return f.values.abs().maxCoeff();
  if (p == 1.0) return pairwise_sum(f.values.abs().eval()) * Scalar(f.grid.cell_volume());
  if (p == 2.0)
    return std::sqrt(pairwise_sum(f.values.square().eval()) *
                     Scalar(f.grid.cell_volume()));
  Array2<Scalar> q = f.values.abs().pow(Scalar(p));
  return std::pow(pairwise_sum(q) * Scalar(f.grid.cell_volume()), Scalar(1.0 / p));
}

/// Space-time L^p with trapezoid time weights; p = inf gives the overall max.
template <typename Scalar>
Scalar lp_norm(const SpaceTimeField<Scalar>& f, double p) {
  if (p < 1.0) throw Error("lp_norm: p must be in [1, inf]");
  const int nt = int(f.slices.size()) - 1;
  if (std::isinf(p)) {
    Scalar m = 0;
    for (const auto& s : f.slices) {
      require_finite(s, "lp_norm");
      m = std::max(m, s.abs().maxCoeff());
    }
    return m;
  }
  Scalar acc = 0;
  for (int k = 0; k <= nt; ++k) {
    require_finite(f.slices[k], "lp_norm");
    const Scalar w = (k == 0 || k == nt) ? Scalar(0.5) : Scalar(1);
    Array2<Scalar> q = f.slices[k].abs().pow(Scalar(p));
    acc += w * pairwise_sum(q);
  }
  return std::pow(acc * Scalar(f.grid.cell_volume()) * Scalar(f.grid.dt()),
                  Scalar(1.0 / p));
}

/// sup over stored time levels of the slice L^p norm.
template <typename Scalar>
Scalar sup_t_lp(const SpaceTimeField<Scalar>& f, double p) {
  Scalar m = 0;
  for (const auto& s : f.slices)
    m = std::max(m, lp_norm(Field<Scalar>(f.grid, s), p));
  return m;
}

enum class Axis { x, t };

namespace detail {

/// Signed frequency magnitude for DFT bin n of N samples spanning length P:
/// k_n = 2 pi n_signed / P.
inline double bin_frequency(int n, int N, double period) {
  const int ns = (n <= N / 2) ? n : n - N;
  return 2.0 * 3.14159265358979323846 * std::abs(ns) / period;
}

/// sum_n |k_n|^{2s} |c_n|^2 for one complex spectrum (c already normalized).
inline double weighted_power(const std::vector<std::complex<double>>& c,
                             double s, double period) {
  double acc = 0;
  const int N = int(c.size());
  for (int n = 0; n < N; ++n) {
    const double k = bin_frequency(n, N, period);
    if (k > 0) acc += std::pow(k, 2.0 * s) * std::norm(c[n]);
  }
  return acc;
}

/// x-spectral weighted power of one slice: for d=1 a 1-D DFT per v-column,
/// for d=2 a 2-D DFT per v-cell with radial weight |k|^{2s}.
inline double slice_x_power(const Array2<double>& vals, const PhaseGrid& g,
                            double s) {
  Eigen::FFT<double> fft;
  const double period = 2.0 * g.L_x();
  double acc = 0;
  if (g.d() == 1) {
    const int N = g.n_x();
    std::vector<double> line(N);
    std::vector<std::complex<double>> spec;
    for (Eigen::Index c = 0; c < vals.cols(); ++c) {
      for (int i = 0; i < N; ++i) line[i] = vals(i, c);
      fft.fwd(spec, line);
      for (auto& z : spec) z /= double(N);
      acc += weighted_power(spec, s, period);
    }
    return acc * period * g.h_v();
  }
  const int N = g.n_x();
  Eigen::ArrayXXcd block(N, N);
  std::vector<double> line(N);
  std::vector<std::complex<double>> spec;
  std::vector<std::complex<double>> cline(N), cspec;
  for (Eigen::Index c = 0; c < vals.cols(); ++c) {
    for (int i0 = 0; i0 < N; ++i0) {
      for (int i1 = 0; i1 < N; ++i1) line[i1] = vals(i0 * N + i1, c);
      fft.fwd(spec, line);
      for (int i1 = 0; i1 < N; ++i1) block(i0, i1) = spec[i1];
    }
    for (int i1 = 0; i1 < N; ++i1) {
      for (int i0 = 0; i0 < N; ++i0) cline[i0] = block(i0, i1);
      fft.fwd(cspec, cline);
      for (int i0 = 0; i0 < N; ++i0) block(i0, i1) = cspec[i0];
    }
    block /= double(N) * double(N);
    double sub = 0;
    for (int i0 = 0; i0 < N; ++i0)
      for (int i1 = 0; i1 < N; ++i1) {
        const double k0 = bin_frequency(i0, N, period);
        const double k1 = bin_frequency(i1, N, period);
        const double k2 = k0 * k0 + k1 * k1;
        if (k2 > 0) sub += std::pow(k2, s) * std::norm(block(i0, i1));
      }
    acc += sub;
  }
  return acc * period * period * g.h_v() * g.h_v();
}

}  // namespace detail

/// Spectral fractional seminorm of order s in (0, 1) along the x axis of a
/// single slice: sum over cells of |k|^{2s}-weighted spectral power.
template <typename Scalar>
Scalar fractional_seminorm(const Field<Scalar>& f, double s, Axis axis = Axis::x) {
  if (!(s > 0.0 && s < 1.0)) throw Error("fractional_seminorm: s must be in (0,1)");
  if (axis == Axis::t)
    throw Error("fractional_seminorm: time axis requires a space-time field");
  require_finite(f.values, "fractional_seminorm");
  Array2<double> vals = f.values.template cast<double>();
  return Scalar(std::sqrt(detail::slice_x_power(vals, f.grid, s)));
}

/// Space-time fractional seminorm along the chosen axis. Axis::x integrates
/// the per-slice x-seminorm in time (trapezoid); Axis::t reflects each cell's
/// time series evenly to a 2 n_t circle and weights by |pi m / T|^{2s}.
template <typename Scalar>
Scalar fractional_seminorm(const SpaceTimeField<Scalar>& f, double s, Axis axis) {
  if (!(s > 0.0 && s < 1.0)) throw Error("fractional_seminorm: s must be in (0,1)");
  const auto& g = f.grid;
  const int nt = int(f.slices.size()) - 1;
  if (axis == Axis::x) {
    double acc = 0;
    for (int k = 0; k <= nt; ++k) {
      require_finite(f.slices[k], "fractional_seminorm");
      const double w = (k == 0 || k == nt) ? 0.5 : 1.0;
      Array2<double> vals = f.slices[k].template cast<double>();
      acc += w * detail::slice_x_power(vals, g, s);
    }
    return Scalar(std::sqrt(acc * g.dt()));
  }
  if (nt < 1) throw Error("fractional_seminorm: time axis needs n_t >= 1");
  Eigen::FFT<double> fft;
  const int N = 2 * nt;
  std::vector<double> series(N);
  std::vector<std::complex<double>> spec;
  double acc = 0;
  for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
    for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
      for (int k = 0; k <= nt; ++k) series[k] = double(f.slices[k](r, c));
      for (int k = 1; k < nt; ++k) series[2 * nt - k] = series[k];
      fft.fwd(spec, series);
      for (auto& z : spec) z /= double(N);
      acc += detail::weighted_power(spec, s, 2.0 * g.T());
    }
  return Scalar(std::sqrt(acc * g.T() * g.cell_volume()));
}

// ---------------------------------------------------------------------------
// Checkpoint container: 33-byte header (magic "KMFG1", uint32 d, n_x, n_v,
// f64 L_x, L_v, little endian) followed by one or more row-major f64 slices.
// ---------------------------------------------------------------------------

struct CheckpointData {
  GridConfig geom;  // d, n_x, n_v, L_x, L_v from the header; T/n_t from caller
  std::vector<Array2<double>> slices;
};

namespace detail {

inline void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ofstream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline double get_f64(std::ifstream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline void write_header(std::ofstream& os, const PhaseGrid& g) {
  os.write("KMFG1", 5);
  put_u32(os, std::uint32_t(g.d()));
  put_u32(os, std::uint32_t(g.n_x()));
  put_u32(os, std::uint32_t(g.n_v()));
  put_f64(os, g.L_x());
  put_f64(os, g.L_v());
}

inline void write_slice(std::ofstream& os, const Array2<double>& a) {
  // row-major contiguous; stream doubles in little-endian order
  for (Eigen::Index i = 0; i < a.size(); ++i) put_f64(os, a.data()[i]);
}

}  // namespace detail

template <typename Scalar>
void checkpoint_write(const std::string& path, const Field<Scalar>& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint_write: cannot open " + path);
  detail::write_header(os, f.grid);
  Array2<double> a = f.values.template cast<double>();
  detail::write_slice(os, a);
  if (!os) throw Error("checkpoint_write: write failed for " + path);
}

template <typename Scalar>
void checkpoint_write(const std::string& path, const SpaceTimeField<Scalar>& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint_write: cannot open " + path);
  detail::write_header(os, f.grid);
  for (const auto& s : f.slices) {
    Array2<double> a = s.template cast<double>();
    detail::write_slice(os, a);
  }
  if (!os) throw Error("checkpoint_write: write failed for " + path);
}

inline CheckpointData checkpoint_read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint_read: cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "KMFG1", 5) != 0)
    throw Error("checkpoint_read: bad magic in " + path);
  CheckpointData d;
  d.geom.d = int(detail::get_u32(is));
  d.geom.n_x = int(detail::get_u32(is));
  d.geom.n_v = int(detail::get_u32(is));
  d.geom.L_x = detail::get_f64(is);
  d.geom.L_v = detail::get_f64(is);
  if (!is) throw Error("checkpoint_read: truncated header in " + path);
  if (d.geom.d != 1 && d.geom.d != 2)
    throw Error("checkpoint_read: unsupported dimension in " + path);
  const std::int64_t rows = d.geom.d == 1 ? d.geom.n_x
                                          : std::int64_t(d.geom.n_x) * d.geom.n_x;
  const std::int64_t cols = d.geom.d == 1 ? d.geom.n_v
                                          : std::int64_t(d.geom.n_v) * d.geom.n_v;
  is.seekg(0, std::ios::end);
  const std::int64_t total = std::int64_t(is.tellg()) - 33;
  const std::int64_t slice_bytes = rows * cols * 8;
  if (total <= 0 || slice_bytes <= 0 || total % slice_bytes != 0)
    throw Error("checkpoint_read: payload size is not a whole number of slices in " + path);
  const std::int64_t n_slices = total / slice_bytes;
  is.seekg(33, std::ios::beg);
  for (std::int64_t k = 0; k < n_slices; ++k) {
    Array2<double> a(rows, cols);
    for (std::int64_t i = 0; i < rows * cols; ++i) a.data()[i] = detail::get_f64(is);
    if (!is) throw Error("checkpoint_read: truncated payload in " + path);
    d.slices.push_back(std::move(a));
  }
  return d;
}

/// Rebuild a space-time field from checkpoint data; the header does not
/// carry the horizon, so T is supplied by the caller.
inline SpaceTimeFieldD to_space_time_field(const CheckpointData& d, double T) {
  if (d.slices.size() < 2)
    throw Error("to_space_time_field: need at least two slices");
  GridConfig cfg = d.geom;
  cfg.T = T;
  cfg.n_t = int(d.slices.size()) - 1;
  cfg.memory_budget_cells = std::numeric_limits<std::int64_t>::max();
  SpaceTimeFieldD f{PhaseGrid(cfg)};
  f.slices.assign(d.slices.begin(), d.slices.end());
  return f;
}

inline FieldD to_field(const CheckpointData& d) {
  if (d.slices.empty()) throw Error("to_field: empty checkpoint");
  GridConfig cfg = d.geom;
  cfg.T = 1.0;
  cfg.n_t = 1;
  cfg.memory_budget_cells = std::numeric_limits<std::int64_t>::max();
  return FieldD{PhaseGrid(cfg), d.slices.front()};
}

/// CSV export, one row per cell: x coordinates, v coordinates, value.
template <typename Scalar>
void csv_write(const std::string& path, const Field<Scalar>& f) {
  std::ofstream os(path);
  if (!os) throw Error("csv_write: cannot open " + path);
  const auto& g = f.grid;
  if (g.d() == 1)
    os << "x,v,value\n";
  else
    os << "x0,x1,v0,v1,value\n";
  char buf[512];
  for (Eigen::Index r = 0; r < g.nx_cells(); ++r)
    for (Eigen::Index c = 0; c < g.nv_cells(); ++c) {
      if (g.d() == 1)
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", g.x_center(r, 0),
                      g.v_center(c, 0), double(f.values(r, c)));
      else
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      g.x_center(r, 0), g.x_center(r, 1), g.v_center(c, 0),
                      g.v_center(c, 1), double(f.values(r, c)));
      os << buf;
    }
  if (!os) throw Error("csv_write: write failed for " + path);
}

}  // namespace kmfg
