/// Run manifests, binary checkpoints and the batch entry points behind the
/// command-line tool.
///
/// A manifest is a JSON object with sections grid / hamiltonian / coupling /
/// mfg / operators / initial_density plus scenario, seed and output_dir.
/// Parsing is strict: unknown keys are rejected and every error names the
/// offending field by JSON pointer. A "scenario" other than "custom" first
/// loads a named preset and then overlays the document on top of it (RFC 7386
/// merge-patch, so arrays replace wholesale). echo_manifest materializes
/// every default explicitly; parse(echo(m)) == m.
///
/// Checkpoints are flat binary: an eight-byte magic, the echoed manifest,
/// the grid header, then the raw u and m slices in the canonical row-major
/// cell layout. All text output goes through %.17g so repeated runs of the
/// same manifest are byte-identical.

#pragma once

#include <kmfg/diagnostics.hpp>
#include <kmfg/mfg_driver.hpp>

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace kmfg {

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string scenario = "custom";
  std::uint64_t seed = 0;  // stored and echoed; reserved for sampling tools
  std::string output_dir = "out";

  GridConfig grid;  // memory_budget_cells is not part of the wire format

  std::string hamiltonian_name = "quadratic";
  double hamiltonian_epsilon = 0.0;

  std::string coupling_F_name = "linear";
  double coupling_F_c0 = 1.0;
  std::string coupling_G_name = "linear";
  double coupling_G_c0 = 1.0;

  double theta = 0.5;
  double tol_fixed_point = 1e-6;
  int max_iters = 100;
  std::vector<double> epsilon_schedule;
  std::vector<double> truncation_levels = {2.0, 4.0, 8.0};
  std::string initial_guess = "kolmogorov_flow";

  std::string transport_scheme = "upwind1";
  bool implicit_v_diffusion = true;
  double cfl_safety = 0.8;

  std::string density_name = "gaussian";
  double sigma_x = 0.8;
  double sigma_v = 0.8;

  Hamiltonian hamiltonian() const {
    return Hamiltonian::from_name(hamiltonian_name, hamiltonian_epsilon);
  }
  Coupling F() const { return Coupling::from_name(coupling_F_name, coupling_F_c0); }
  Coupling G() const { return Coupling::from_name(coupling_G_name, coupling_G_c0); }

  MFGConfig mfg_config() const {
    MFGConfig cfg;
    cfg.theta = theta;
    cfg.tol_fixed_point = tol_fixed_point;
    cfg.max_iters = max_iters;
    cfg.epsilon_schedule = epsilon_schedule;
    cfg.truncation_levels = truncation_levels;
    cfg.initial_guess = initial_guess_from_name(initial_guess);
    cfg.operators.transport_scheme = transport_scheme_from_name(transport_scheme);
    cfg.operators.implicit_v_diffusion = implicit_v_diffusion;
    cfg.operators.cfl_safety = cfl_safety;
    return cfg;
  }
};

/// Discretely normalized product gaussian, the canonical initial density.
inline FieldD gaussian_density(const PhaseGrid& g, double sigma_x,
                               double sigma_v) {
  if (!(sigma_x > 0) || !(sigma_v > 0))
    throw Error("gaussian_density: sigmas must be positive");
  FieldD m0(g);
  for (Eigen::Index r = 0; r < m0.values.rows(); ++r)
    for (Eigen::Index c = 0; c < m0.values.cols(); ++c) {
      double e = 0;
      for (int a = 0; a < g.d(); ++a) {
        const double x = g.x_center(r, a), v = g.v_center(c, a);
        e += x * x / (2 * sigma_x * sigma_x) + v * v / (2 * sigma_v * sigma_v);
      }
      m0.values(r, c) = std::exp(-e);
    }
  m0.values /= pairwise_sum(m0.values) * g.cell_volume();
  return m0;
}

inline FieldD build_initial_density(const PhaseGrid& g, const RunManifest& man) {
  if (man.density_name != "gaussian")
    throw Error("unknown initial density: " + man.density_name);
  return gaussian_density(g, man.sigma_x, man.sigma_v);
}

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "custom", "decoupled-kolmogorov", "lipschitz-linear-coupling",
      "quadratic-continuation"};
  return names;
}

/// Named baseline configurations; a manifest document overlays one of these.
inline RunManifest preset_manifest(const std::string& scenario) {
  RunManifest man;
  man.scenario = scenario;
  if (scenario == "custom") return man;
  if (scenario == "decoupled-kolmogorov") {
    // H = 0 and zero couplings: the density is the pure kinetic flow and the
    // fixed point is reached in one iteration. Exercises mass/positivity.
    man.grid = GridConfig{.d = 1, .T = 1.0, .n_t = 40, .n_x = 32, .n_v = 32};
    man.hamiltonian_name = "zero";
    man.coupling_F_name = "zero";
    man.coupling_G_name = "zero";
    man.theta = 1.0;
    man.tol_fixed_point = 1e-9;
    man.max_iters = 10;
    man.sigma_x = 0.6;
    man.sigma_v = 0.6;
    return man;
  }
  if (scenario == "lipschitz-linear-coupling") {
    // Bounded-slope Hamiltonian with monotone linear coupling; the damped
    // fixed point contracts and the run converges directly.
    man.grid = GridConfig{.d = 1, .T = 1.0, .n_t = 50, .n_x = 32, .n_v = 32};
    man.hamiltonian_name = "soft_norm";
    man.theta = 0.5;
    man.tol_fixed_point = 1e-6;
    man.max_iters = 60;
    return man;
  }
  if (scenario == "quadratic-continuation") {
    // Raw quadratic Hamiltonian solved through the decreasing epsilon
    // ladder with warm starts.
    man.grid = GridConfig{.d = 1, .T = 1.0, .n_t = 50, .n_x = 32, .n_v = 32};
    man.hamiltonian_name = "quadratic";
    man.epsilon_schedule = {0.5, 0.25, 0.125, 0.0625};
    man.theta = 0.5;
    man.tol_fixed_point = 1e-6;
    man.max_iters = 80;
    return man;
  }
  throw Error("unknown scenario: " + scenario);
}

/// Serializes a manifest with every field, defaults included, in stable
/// (alphabetical) key order.
inline nlohmann::json echo_manifest(const RunManifest& man) {
  nlohmann::json j;
  j["scenario"] = man.scenario;
  j["seed"] = man.seed;
  j["output_dir"] = man.output_dir;
  j["grid"] = {{"d", man.grid.d},       {"T", man.grid.T},
               {"n_t", man.grid.n_t},   {"L_x", man.grid.L_x},
               {"n_x", man.grid.n_x},   {"L_v", man.grid.L_v},
               {"n_v", man.grid.n_v}};
  j["hamiltonian"] = {{"name", man.hamiltonian_name},
                      {"epsilon", man.hamiltonian_epsilon}};
  j["coupling"] = {
      {"F", {{"name", man.coupling_F_name}, {"c0", man.coupling_F_c0}}},
      {"G", {{"name", man.coupling_G_name}, {"c0", man.coupling_G_c0}}}};
  j["mfg"] = {{"theta", man.theta},
              {"tol_fixed_point", man.tol_fixed_point},
              {"max_iters", man.max_iters},
              {"epsilon_schedule", man.epsilon_schedule},
              {"truncation_levels", man.truncation_levels},
              {"initial_guess", man.initial_guess}};
  j["operators"] = {{"transport_scheme", man.transport_scheme},
                    {"implicit_v_diffusion", man.implicit_v_diffusion},
                    {"cfl_safety", man.cfl_safety}};
  j["initial_density"] = {{"name", man.density_name},
                          {"sigma_x", man.sigma_x},
                          {"sigma_v", man.sigma_v}};
  return j;
}

namespace detail {

[[noreturn]] inline void manifest_fail(const std::string& ptr,
                                       const std::string& msg) {
  throw Error("parse_manifest: " + ptr + ": " + msg);
}

inline void check_keys(const nlohmann::json& obj, const std::string& ptr,
                       std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) manifest_fail(ptr + "/" + it.key(), "unknown key");
  }
}

inline double get_num(const nlohmann::json& obj, const char* key,
                      double fallback, const std::string& ptr) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) manifest_fail(ptr + "/" + key, "expected a number");
  return v.get<double>();
}

inline int get_int(const nlohmann::json& obj, const char* key, int fallback,
                   const std::string& ptr) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer())
    manifest_fail(ptr + "/" + key, "expected an integer");
  return v.get<int>();
}

inline bool get_bool(const nlohmann::json& obj, const char* key, bool fallback,
                     const std::string& ptr) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) manifest_fail(ptr + "/" + key, "expected a boolean");
  return v.get<bool>();
}

inline std::string get_str(const nlohmann::json& obj, const char* key,
                           const std::string& fallback,
                           const std::string& ptr) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) manifest_fail(ptr + "/" + key, "expected a string");
  return v.get<std::string>();
}

inline std::vector<double> get_vec(const nlohmann::json& obj, const char* key,
                                   const std::vector<double>& fallback,
                                   const std::string& ptr) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_array())
    manifest_fail(ptr + "/" + key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number())
      manifest_fail(ptr + "/" + key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::uint64_t get_u64(const nlohmann::json& obj, const char* key,
                             std::uint64_t fallback, const std::string& ptr) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0))
    manifest_fail(ptr + "/" + key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline RunManifest extract_manifest(const nlohmann::json& doc) {
  check_keys(doc, "",
             {"scenario", "seed", "output_dir", "grid", "hamiltonian",
              "coupling", "mfg", "operators", "initial_density"});
  RunManifest man;
  man.scenario = get_str(doc, "scenario", "custom", "");
  bool known_scenario = false;
  for (const auto& s : scenario_names()) known_scenario |= (s == man.scenario);
  if (!known_scenario)
    manifest_fail("/scenario", "unknown scenario " + man.scenario);
  man.seed = get_u64(doc, "seed", man.seed, "");
  man.output_dir = get_str(doc, "output_dir", man.output_dir, "");
  if (man.output_dir.empty())
    manifest_fail("/output_dir", "must not be empty");

  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    if (!g.is_object()) manifest_fail("/grid", "expected an object");
    check_keys(g, "/grid", {"d", "T", "n_t", "L_x", "n_x", "L_v", "n_v"});
    man.grid.d = get_int(g, "d", man.grid.d, "/grid");
    man.grid.T = get_num(g, "T", man.grid.T, "/grid");
    man.grid.n_t = get_int(g, "n_t", man.grid.n_t, "/grid");
    man.grid.L_x = get_num(g, "L_x", man.grid.L_x, "/grid");
    man.grid.n_x = get_int(g, "n_x", man.grid.n_x, "/grid");
    man.grid.L_v = get_num(g, "L_v", man.grid.L_v, "/grid");
    man.grid.n_v = get_int(g, "n_v", man.grid.n_v, "/grid");
  }
  if (man.grid.d != 1 && man.grid.d != 2)
    manifest_fail("/grid/d", "must be 1 or 2");
  if (!(man.grid.T > 0)) manifest_fail("/grid/T", "must be positive");
  if (man.grid.n_t < 1) manifest_fail("/grid/n_t", "must be >= 1");
  if (!(man.grid.L_x > 0)) manifest_fail("/grid/L_x", "must be positive");
  if (!(man.grid.L_v > 0)) manifest_fail("/grid/L_v", "must be positive");
  if (man.grid.n_x < 4 || (man.grid.n_x & (man.grid.n_x - 1)) != 0)
    manifest_fail("/grid/n_x", "must be a power of two >= 4");
  if (man.grid.n_v < 4) manifest_fail("/grid/n_v", "must be >= 4");
  try {
    PhaseGrid probe(man.grid);
  } catch (const Error& e) {
    manifest_fail("/grid", e.what());
  }

  if (doc.contains("hamiltonian")) {
    const auto& h = doc.at("hamiltonian");
    if (!h.is_object()) manifest_fail("/hamiltonian", "expected an object");
    check_keys(h, "/hamiltonian", {"name", "epsilon"});
    man.hamiltonian_name = get_str(h, "name", man.hamiltonian_name, "/hamiltonian");
    man.hamiltonian_epsilon =
        get_num(h, "epsilon", man.hamiltonian_epsilon, "/hamiltonian");
  }
  if (man.hamiltonian_epsilon < 0)
    manifest_fail("/hamiltonian/epsilon", "must be >= 0");
  try {
    Hamiltonian::from_name(man.hamiltonian_name, man.hamiltonian_epsilon);
  } catch (const Error& e) {
    manifest_fail("/hamiltonian/name", e.what());
  }

  if (doc.contains("coupling")) {
    const auto& c = doc.at("coupling");
    if (!c.is_object()) manifest_fail("/coupling", "expected an object");
    check_keys(c, "/coupling", {"F", "G"});
    auto side = [&](const char* key, std::string& name, double& c0) {
      if (!c.contains(key)) return;
      const std::string ptr = std::string("/coupling/") + key;
      const auto& s = c.at(key);
      if (!s.is_object()) manifest_fail(ptr, "expected an object");
      check_keys(s, ptr, {"name", "c0"});
      name = get_str(s, "name", name, ptr);
      c0 = get_num(s, "c0", c0, ptr);
      if (!(c0 > 0)) manifest_fail(ptr + "/c0", "must be positive");
      try {
        Coupling::from_name(name, c0);
      } catch (const Error& e) {
        manifest_fail(ptr + "/name", e.what());
      }
    };
    side("F", man.coupling_F_name, man.coupling_F_c0);
    side("G", man.coupling_G_name, man.coupling_G_c0);
  }

  if (doc.contains("mfg")) {
    const auto& m = doc.at("mfg");
    if (!m.is_object()) manifest_fail("/mfg", "expected an object");
    check_keys(m, "/mfg",
               {"theta", "tol_fixed_point", "max_iters", "epsilon_schedule",
                "truncation_levels", "initial_guess"});
    man.theta = get_num(m, "theta", man.theta, "/mfg");
    man.tol_fixed_point =
        get_num(m, "tol_fixed_point", man.tol_fixed_point, "/mfg");
    man.max_iters = get_int(m, "max_iters", man.max_iters, "/mfg");
    man.epsilon_schedule =
        get_vec(m, "epsilon_schedule", man.epsilon_schedule, "/mfg");
    man.truncation_levels =
        get_vec(m, "truncation_levels", man.truncation_levels, "/mfg");
    man.initial_guess = get_str(m, "initial_guess", man.initial_guess, "/mfg");
  }
  if (!(man.theta > 0) || !(man.theta <= 1))
    manifest_fail("/mfg/theta", "must lie in (0, 1]");
  if (!(man.tol_fixed_point > 0))
    manifest_fail("/mfg/tol_fixed_point", "must be positive");
  if (man.max_iters < 1) manifest_fail("/mfg/max_iters", "must be >= 1");
  for (std::size_t i = 0; i < man.epsilon_schedule.size(); ++i) {
    if (!(man.epsilon_schedule[i] > 0))
      manifest_fail("/mfg/epsilon_schedule", "schedule must be positive");
    if (i > 0 && !(man.epsilon_schedule[i] < man.epsilon_schedule[i - 1]))
      manifest_fail("/mfg/epsilon_schedule",
                    "schedule must be strictly decreasing");
  }
  for (double k : man.truncation_levels)
    if (!(k > 0))
      manifest_fail("/mfg/truncation_levels", "levels must be positive");
  try {
    initial_guess_from_name(man.initial_guess);
  } catch (const Error& e) {
    manifest_fail("/mfg/initial_guess", e.what());
  }

  if (doc.contains("operators")) {
    const auto& o = doc.at("operators");
    if (!o.is_object()) manifest_fail("/operators", "expected an object");
    check_keys(o, "/operators",
               {"transport_scheme", "implicit_v_diffusion", "cfl_safety"});
    man.transport_scheme =
        get_str(o, "transport_scheme", man.transport_scheme, "/operators");
    man.implicit_v_diffusion = get_bool(o, "implicit_v_diffusion",
                                        man.implicit_v_diffusion, "/operators");
    man.cfl_safety = get_num(o, "cfl_safety", man.cfl_safety, "/operators");
  }
  if (!(man.cfl_safety > 0) || !(man.cfl_safety <= 1))
    manifest_fail("/operators/cfl_safety", "must lie in (0, 1]");
  try {
    transport_scheme_from_name(man.transport_scheme);
  } catch (const Error& e) {
    manifest_fail("/operators/transport_scheme", e.what());
  }

  if (doc.contains("initial_density")) {
    const auto& s = doc.at("initial_density");
    if (!s.is_object()) manifest_fail("/initial_density", "expected an object");
    check_keys(s, "/initial_density", {"name", "sigma_x", "sigma_v"});
    man.density_name = get_str(s, "name", man.density_name, "/initial_density");
    man.sigma_x = get_num(s, "sigma_x", man.sigma_x, "/initial_density");
    man.sigma_v = get_num(s, "sigma_v", man.sigma_v, "/initial_density");
  }
  if (man.density_name != "gaussian")
    manifest_fail("/initial_density/name",
                  "unknown density " + man.density_name);
  if (!(man.sigma_x > 0))
    manifest_fail("/initial_density/sigma_x", "must be positive");
  if (!(man.sigma_v > 0))
    manifest_fail("/initial_density/sigma_v", "must be positive");

  return man;
}

}  // namespace detail

/// Strict manifest parser. A non-custom scenario loads the preset and lays
/// the document over it; unknown keys and out-of-range values fail with the
/// offending JSON pointer in the message.
inline RunManifest parse_manifest(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("parse_manifest: invalid JSON: ") + e.what());
  }
  if (!doc.is_object())
    throw Error("parse_manifest: document must be a JSON object");
  std::string scenario = detail::get_str(doc, "scenario", "custom", "");
  bool known = false;
  for (const auto& s : scenario_names()) known |= (s == scenario);
  if (!known)
    detail::manifest_fail("/scenario", "unknown scenario " + scenario);
  nlohmann::json merged = echo_manifest(preset_manifest(scenario));
  merged.merge_patch(doc);
  return detail::extract_manifest(merged);
}

inline RunManifest parse_manifest_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("parse_manifest: cannot open " + path);
  std::string text;
  char buf[1 << 14];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
  std::fclose(f);
  return parse_manifest(text);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  RunManifest manifest;
  PhaseGrid grid;
  SpaceTimeFieldD u;
  SpaceTimeFieldD m;
  double epsilon = 0;
  MFGStatus status = MFGStatus::converged;

  explicit Checkpoint(const PhaseGrid& g) : grid(g), u(g), m(g) {}
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'K', 'M', 'F', 'G',
                                             '1', 0,   0,   0};

inline void put_bytes(std::FILE* f, const void* p, std::size_t n) {
  if (std::fwrite(p, 1, n, f) != n) throw Error("checkpoint: short write");
}

inline void get_bytes(std::FILE* f, void* p, std::size_t n) {
  if (std::fread(p, 1, n, f) != n) throw Error("checkpoint: short read");
}

template <typename T>
void put_pod(std::FILE* f, const T& v) {
  put_bytes(f, &v, sizeof v);
}

template <typename T>
T get_pod(std::FILE* f) {
  T v;
  get_bytes(f, &v, sizeof v);
  return v;
}

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace detail

inline void write_checkpoint(const std::string& path, const RunManifest& man,
                             const SpaceTimeFieldD& u, const SpaceTimeFieldD& m,
                             double epsilon, MFGStatus status) {
  if (!u.grid.same_geometry(m.grid))
    throw Error("checkpoint: u and m grids disagree");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("checkpoint: cannot open " + path + " for writing");
  detail::FileCloser close{f};
  detail::put_bytes(f, detail::kCheckpointMagic, 8);
  const std::string mj = echo_manifest(man).dump();
  detail::put_pod<std::uint64_t>(f, mj.size());
  detail::put_bytes(f, mj.data(), mj.size());
  const PhaseGrid& g = u.grid;
  detail::put_pod<std::int32_t>(f, g.d());
  detail::put_pod<std::int32_t>(f, g.n_t());
  detail::put_pod<std::int32_t>(f, g.n_x());
  detail::put_pod<std::int32_t>(f, g.n_v());
  detail::put_pod<double>(f, g.T());
  detail::put_pod<double>(f, g.L_x());
  detail::put_pod<double>(f, g.L_v());
  detail::put_pod<double>(f, epsilon);
  detail::put_pod<std::int32_t>(f, status == MFGStatus::converged ? 0 : 1);
  detail::put_pod<std::uint64_t>(f, u.slices.size());
  detail::put_pod<std::uint64_t>(f, std::uint64_t(u.slices[0].size()));
  for (const auto& s : u.slices)
    detail::put_bytes(f, s.data(), sizeof(double) * std::size_t(s.size()));
  for (const auto& s : m.slices)
    detail::put_bytes(f, s.data(), sizeof(double) * std::size_t(s.size()));
}

inline void write_checkpoint(const std::string& path, const RunManifest& man,
                             const MFGSolution& sol) {
  write_checkpoint(path, man, sol.u, sol.m, sol.epsilon, sol.status);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("checkpoint: cannot open " + path);
  detail::FileCloser close{f};
  char magic[8];
  detail::get_bytes(f, magic, 8);
  if (std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw Error("checkpoint: bad magic in " + path);
  const auto mlen = detail::get_pod<std::uint64_t>(f);
  if (mlen > (std::uint64_t(1) << 24))
    throw Error("checkpoint: manifest block too large");
  std::string mj(std::size_t(mlen), '\0');
  detail::get_bytes(f, mj.data(), mj.size());
  RunManifest man = parse_manifest(mj);
  GridConfig gc = man.grid;
  gc.d = detail::get_pod<std::int32_t>(f);
  gc.n_t = detail::get_pod<std::int32_t>(f);
  gc.n_x = detail::get_pod<std::int32_t>(f);
  gc.n_v = detail::get_pod<std::int32_t>(f);
  gc.T = detail::get_pod<double>(f);
  gc.L_x = detail::get_pod<double>(f);
  gc.L_v = detail::get_pod<double>(f);
  if (gc.d != man.grid.d || gc.n_t != man.grid.n_t || gc.n_x != man.grid.n_x ||
      gc.n_v != man.grid.n_v || gc.T != man.grid.T || gc.L_x != man.grid.L_x ||
      gc.L_v != man.grid.L_v)
    throw Error("checkpoint: grid header disagrees with embedded manifest");
  Checkpoint cp{PhaseGrid(gc)};
  cp.manifest = std::move(man);
  cp.epsilon = detail::get_pod<double>(f);
  const auto status = detail::get_pod<std::int32_t>(f);
  if (status != 0 && status != 1)
    throw Error("checkpoint: bad status field");
  cp.status = status == 0 ? MFGStatus::converged : MFGStatus::max_iters;
  const auto n_slices = detail::get_pod<std::uint64_t>(f);
  const auto cells = detail::get_pod<std::uint64_t>(f);
  if (n_slices != cp.u.slices.size() ||
      cells != std::uint64_t(cp.u.slices[0].size()))
    throw Error("checkpoint: slice layout disagrees with grid");
  for (auto& s : cp.u.slices)
    detail::get_bytes(f, s.data(), sizeof(double) * std::size_t(s.size()));
  for (auto& s : cp.m.slices)
    detail::get_bytes(f, s.data(), sizeof(double) * std::size_t(s.size()));
  for (const auto& s : cp.u.slices)
    if (!s.isFinite().all()) throw Error("checkpoint: non-finite u data");
  for (const auto& s : cp.m.slices)
    if (!s.isFinite().all()) throw Error("checkpoint: non-finite m data");
  return cp;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareReport {
  std::vector<double> times;
  std::vector<double> u_l1, u_l2, u_linf;
  std::vector<double> m_l1, m_l2, m_linf;
  double sup_u_l1 = 0, sup_u_l2 = 0, sup_u_linf = 0;
  double sup_m_l1 = 0, sup_m_l2 = 0, sup_m_linf = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["times"] = times;
    j["u"] = {{"l1", u_l1}, {"l2", u_l2}, {"linf", u_linf},
              {"sup_l1", sup_u_l1}, {"sup_l2", sup_u_l2},
              {"sup_linf", sup_u_linf}};
    j["m"] = {{"l1", m_l1}, {"l2", m_l2}, {"linf", m_linf},
              {"sup_l1", sup_m_l1}, {"sup_l2", sup_m_l2},
              {"sup_linf", sup_m_linf}};
    return j;
  }
};

/// Per-time-level L1/L2/Linf distances between two checkpoints on the same
/// grid, plus the sup over levels of each.
inline CompareReport compare_checkpoints(const Checkpoint& a,
                                         const Checkpoint& b) {
  if (!a.grid.same_geometry(b.grid))
    throw Error("compare: checkpoints live on different grids");
  CompareReport rep;
  const double vol = a.grid.cell_volume();
  auto push = [&](const Array2<double>& pa, const Array2<double>& pb,
                  std::vector<double>& l1, std::vector<double>& l2,
                  std::vector<double>& linf) {
    const Array2<double> diff = (pa - pb).abs();
    l1.push_back(pairwise_sum(diff) * vol);
    l2.push_back(std::sqrt(pairwise_sum(Array2<double>(diff.square())) * vol));
    linf.push_back(diff.size() ? diff.maxCoeff() : 0.0);
  };
  for (int k = 0; k <= a.grid.n_t(); ++k) {
    rep.times.push_back(a.grid.t_level(k));
    push(a.u.slices[std::size_t(k)], b.u.slices[std::size_t(k)], rep.u_l1,
         rep.u_l2, rep.u_linf);
    push(a.m.slices[std::size_t(k)], b.m.slices[std::size_t(k)], rep.m_l1,
         rep.m_l2, rep.m_linf);
  }
  auto sup = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s = std::max(s, x);
    return s;
  };
  rep.sup_u_l1 = sup(rep.u_l1);
  rep.sup_u_l2 = sup(rep.u_l2);
  rep.sup_u_linf = sup(rep.u_linf);
  rep.sup_m_l1 = sup(rep.m_l1);
  rep.sup_m_l2 = sup(rep.m_l2);
  rep.sup_m_linf = sup(rep.m_linf);
  return rep;
}

inline CompareReport compare_checkpoints(const std::string& path_a,
                                         const std::string& path_b) {
  const Checkpoint a = read_checkpoint(path_a);
  const Checkpoint b = read_checkpoint(path_b);
  return compare_checkpoints(a, b);
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

/// Recomputes the full diagnostics suite from a stored solution. The
/// Hamiltonian is rebuilt from the embedded manifest with the checkpoint's
/// own epsilon, so continuation levels diagnose against the regularization
/// they were solved with. Writes the CSV series when out_dir is non-empty.
inline nlohmann::json diagnose_checkpoint(const std::string& path,
                                          const std::string& out_dir = "") {
  const Checkpoint cp = read_checkpoint(path);
  const Hamiltonian H =
      Hamiltonian::from_name(cp.manifest.hamiltonian_name, cp.epsilon);
  const std::vector<SpaceTimeFieldD> b = feedback_drift(cp.u, H);
  DiagnosticsOptions opt;
  opt.renorm_levels = cp.manifest.truncation_levels;
  const DiagnosticsReport rep = assemble_diagnostics(
      cp.u, cp.m, b, cp.manifest.F(), cp.manifest.G(), H, opt);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_report_csv(rep, out_dir);
  }
  return to_json(rep);
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

/// Exact kinetic fundamental solution sampled on a grid, for external
/// cross-checks of the discrete flow.
inline FieldD oracle_kolmogorov(const PhaseGrid& g, double t, double sigma_x,
                                double sigma_v, double x0 = 0, double v0 = 0,
                                int n_images = 2) {
  return kolmogorov_exact(g, t, sigma_x, sigma_v, x0, v0, n_images);
}

/// Flat CSV dump of one field with cell-center coordinates.
inline void write_field_csv(const std::string& path, const FieldD& f) {
  std::FILE* out = std::fopen(path.c_str(), "w");
  if (!out) throw Error("write_field_csv: cannot open " + path);
  detail::FileCloser close{out};
  const PhaseGrid& g = f.grid;
  std::string header;
  for (int a = 0; a < g.d(); ++a)
    header += "x" + std::to_string(a) + ",";
  for (int a = 0; a < g.d(); ++a)
    header += "v" + std::to_string(a) + ",";
  header += "value\n";
  std::fputs(header.c_str(), out);
  for (Eigen::Index r = 0; r < f.values.rows(); ++r)
    for (Eigen::Index c = 0; c < f.values.cols(); ++c) {
      for (int a = 0; a < g.d(); ++a)
        std::fprintf(out, "%.17g,", g.x_center(r, a));
      for (int a = 0; a < g.d(); ++a)
        std::fprintf(out, "%.17g,", g.v_center(c, a));
      std::fprintf(out, "%.17g\n", f.values(r, c));
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunResult {
  int exit_code = 0;
  // "" on success; otherwise one of "max_iters", "invariant", "divergence",
  // "solver", "config", "io".
  std::string reason;
  std::vector<std::string> checkpoints;  // paths of the written checkpoints
  nlohmann::json summary;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("run: cannot write " + path);
  FileCloser close{f};
  put_bytes(f, text.data(), text.size());
}

/// Hard invariants checked on every stored solution: unit mass to 1e-10 at
/// every time level and exact pointwise nonnegativity.
inline nlohmann::json invariant_block(const SpaceTimeFieldD& m, bool& ok) {
  const double vol = m.grid.cell_volume();
  double worst_mass = 0, min_density = std::numeric_limits<double>::infinity();
  for (const auto& s : m.slices) {
    worst_mass = std::max(worst_mass, std::abs(pairwise_sum(s) * vol - 1.0));
    min_density = std::min(min_density, s.minCoeff());
  }
  const bool mass_ok = worst_mass <= 1e-10;
  const bool positive = min_density >= 0.0;
  ok = mass_ok && positive;
  return {{"mass_error_max", worst_mass},
          {"mass_pass", mass_ok},
          {"min_density", min_density},
          {"positivity_pass", positive}};
}

inline nlohmann::json level_summary(const MFGSolution& sol, bool& ok) {
  nlohmann::json j;
  j["status"] = to_string(sol.status);
  j["iterations"] = sol.iterations;
  j["epsilon"] = sol.epsilon;
  j["residual_history"] = sol.residual_history;
  j["final_residual"] =
      sol.residual_history.empty() ? 0.0 : sol.residual_history.back();
  bool inv_ok = false;
  j["invariants"] = invariant_block(sol.m, inv_ok);
  j["duality_gap"] = sol.diagnostics.duality_gap;
  j["entropy_pass"] = sol.diagnostics.entropy_check.pass;
  j["tail_pass"] = sol.diagnostics.tail.pass;
  j["ledger_chain_pass"] = sol.diagnostics.ledger.chain_pass;
  ok = inv_ok;
  return j;
}

}  // namespace detail

/// Executes one manifest end to end and writes every artifact under
/// output_dir: the echoed manifest, one checkpoint plus diagnostics CSVs per
/// solution level, and summary.json. Exit code 0 means every level converged
/// and the hard invariants (unit mass to 1e-10, exact nonnegativity) hold;
/// 1 flags a clean run that missed tolerance or an invariant, 2 a solver
/// failure (reason "divergence" or "solver"), 3 an unusable output
/// directory (reason "io").
inline RunResult run(const RunManifest& man) {
  namespace fs = std::filesystem;
  RunResult res;
  nlohmann::json summary;
  summary["scenario"] = man.scenario;

  // Stage the output directory first; nothing else is attempted if this
  // fails. create_directories succeeds for root even on read-only modes, so
  // probe with an actual write.
  try {
    std::error_code ec;
    fs::create_directories(man.output_dir, ec);
    if (ec) throw Error("run: cannot create " + man.output_dir + ": " + ec.message());
    detail::write_text(man.output_dir + "/manifest.json",
                       echo_manifest(man).dump(2) + "\n");
  } catch (const std::exception& e) {
    res.exit_code = 3;
    res.reason = "io";
    summary["error"] = e.what();
    summary["reason"] = res.reason;
    res.summary = summary;
    return res;
  }

  auto finish = [&](int code, const std::string& reason) {
    res.exit_code = code;
    res.reason = reason;
    summary["reason"] = reason;
    summary["exit_code"] = code;
    res.summary = summary;
    try {
      detail::write_text(man.output_dir + "/summary.json",
                         summary.dump(2) + "\n");
    } catch (const std::exception&) {
      res.exit_code = 3;
      res.reason = "io";
    }
    return res;
  };

  // Materialize the problem; errors here are configuration, not solver.
  std::vector<MFGSolution> levels;
  std::string abort_reason;
  try {
    const PhaseGrid grid(man.grid);
    const MFGProblem prob(grid, man.hamiltonian(), man.F(), man.G(),
                          build_initial_density(grid, man));
    const MFGConfig cfg = man.mfg_config();
    cfg.validate();

    if (man.epsilon_schedule.empty()) {
      levels.push_back(solve_mfg(cfg, prob));
    } else {
      ContinuationResult cont = epsilon_continuation(cfg, prob);
      summary["continuation"] = {
          {"epsilon", cont.record.epsilon},
          {"drift_energy_l1", cont.record.drift_energy_l1},
          {"hamiltonian_l1", cont.record.hamiltonian_l1},
          {"sup_u_l1", cont.record.sup_u_l1},
          {"cauchy_m_l1", cont.record.cauchy_m_l1},
          {"cauchy_u_l1", cont.record.cauchy_u_l1},
          {"abort_reason", cont.record.abort_reason}};
      levels = std::move(cont.levels);
      abort_reason = cont.record.abort_reason;
    }
  } catch (const DivergenceError& e) {
    summary["error"] = e.what();
    summary["residual_history"] = e.residual_history;
    return finish(2, "divergence");
  } catch (const Error& e) {
    summary["error"] = e.what();
    const std::string what = e.what();
    const bool config = what.find("MFGConfig") != std::string::npos ||
                        what.find("unknown") != std::string::npos ||
                        what.find("must be") != std::string::npos;
    return finish(2, config ? "config" : "solver");
  }

  // Artifacts and verdicts per level.
  bool all_converged = true, all_invariants = true;
  summary["levels"] = nlohmann::json::array();
  try {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const std::string dir =
          levels.size() == 1 && man.epsilon_schedule.empty()
              ? man.output_dir
              : man.output_dir + "/level_" + std::to_string(i);
      fs::create_directories(dir);
      const std::string cp_path = dir + "/checkpoint.kmfg";
      write_checkpoint(cp_path, man, levels[i]);
      write_report_csv(levels[i].diagnostics, dir);
      res.checkpoints.push_back(cp_path);
      bool inv_ok = false;
      nlohmann::json lj = detail::level_summary(levels[i], inv_ok);
      lj["checkpoint"] = levels.size() == 1 && man.epsilon_schedule.empty()
                             ? std::string("checkpoint.kmfg")
                             : "level_" + std::to_string(i) + "/checkpoint.kmfg";
      summary["levels"].push_back(lj);
      all_converged &= levels[i].status == MFGStatus::converged;
      all_invariants &= inv_ok;
    }
  } catch (const std::exception& e) {
    summary["error"] = e.what();
    return finish(3, "io");
  }

  if (!abort_reason.empty()) {
    const bool diverged =
        abort_reason.find("five consecutive") != std::string::npos;
    return finish(2, diverged ? "divergence" : "solver");
  }
  if (!all_converged) return finish(1, "max_iters");
  if (!all_invariants) return finish(1, "invariant");
  return finish(0, "");
}

inline RunResult run_manifest_file(const std::string& path,
                                   const std::string& out_override = "") {
  RunManifest man = parse_manifest_file(path);
  if (!out_override.empty()) man.output_dir = out_override;
  return run(man);
}

}  // namespace kmfg
