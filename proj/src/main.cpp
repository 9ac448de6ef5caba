/// Command-line front end: solve / diagnose / compare / oracle.
///
/// All logic lives in the headers; this file only maps arguments onto the
/// library entry points and library errors onto exit codes. Exit codes from
/// `solve` follow RunResult (0 converged and invariants hold, 1 clean miss,
/// 2 solver failure, 3 io, 4 bad manifest). The only environment variable
/// consulted is KMFG_THREADS, which caps Eigen's internal parallelism.

#include <kmfg/cli_io.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

namespace {

void apply_thread_env() {
  if (const char* s = std::getenv("KMFG_THREADS")) {
    const int n = std::atoi(s);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

int fail_json(const std::string& reason, const std::string& what, int code) {
  nlohmann::json err{{"reason", reason}, {"error", what}};
  std::fprintf(stderr, "%s\n", err.dump().c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();

  CLI::App app{"kinetic mean field games solver"};
  app.require_subcommand(1);

  std::string manifest_path, out_override;
  CLI::App* solve = app.add_subcommand("solve", "run a manifest end to end");
  solve->add_option("manifest", manifest_path, "manifest JSON file")
      ->required();
  solve->add_option("--out", out_override, "override manifest output_dir");

  std::string diag_path, diag_out, suite = "all";
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "recompute diagnostics from a checkpoint");
  diagnose->add_option("checkpoint", diag_path, "checkpoint file")->required();
  diagnose->add_option("--suite", suite, "diagnostic suite")
      ->check(CLI::IsMember({"all"}));
  diagnose->add_option("--out", diag_out, "directory for CSV series");

  std::string cmp_a, cmp_b;
  CLI::App* compare =
      app.add_subcommand("compare", "distances between two checkpoints");
  compare->add_option("a", cmp_a, "first checkpoint")->required();
  compare->add_option("b", cmp_b, "second checkpoint")->required();

  std::string oracle_kind;
  double oracle_t = 1.0, oracle_sx = 0.5, oracle_sv = 0.5;
  double oracle_Lx = 3.14159265358979323846, oracle_Lv = 4.0;
  int oracle_n = 64, oracle_d = 1;
  std::string oracle_out;
  CLI::App* oracle =
      app.add_subcommand("oracle", "emit an exact reference field as CSV");
  oracle->add_option("kind", oracle_kind, "oracle family")
      ->required()
      ->check(CLI::IsMember({"kolmogorov"}));
  oracle->add_option("--t", oracle_t, "evaluation time")->required();
  oracle->add_option("--sigma-x", oracle_sx, "initial x spread");
  oracle->add_option("--sigma-v", oracle_sv, "initial v spread");
  oracle->add_option("--L-x", oracle_Lx, "x half-width");
  oracle->add_option("--L-v", oracle_Lv, "v half-width");
  oracle->add_option("--n", oracle_n, "cells per axis");
  oracle->add_option("--d", oracle_d, "dimension (1 or 2)");
  oracle->add_option("--out", oracle_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      kmfg::RunManifest man;
      try {
        man = kmfg::parse_manifest_file(manifest_path);
      } catch (const kmfg::Error& e) {
        const std::string what = e.what();
        const bool io = what.find("cannot open") != std::string::npos;
        return fail_json(io ? "io" : "config", what, io ? 3 : 4);
      }
      if (!out_override.empty()) man.output_dir = out_override;
      const kmfg::RunResult res = kmfg::run(man);
      std::printf("%s\n", res.summary.dump(2).c_str());
      if (res.exit_code != 0)
        std::fprintf(stderr, "%s\n",
                     nlohmann::json{{"reason", res.reason}}.dump().c_str());
      return res.exit_code;
    }
    if (diagnose->parsed()) {
      const nlohmann::json rep = kmfg::diagnose_checkpoint(diag_path, diag_out);
      std::printf("%s\n", rep.dump(2).c_str());
      return 0;
    }
    if (compare->parsed()) {
      const kmfg::CompareReport rep =
          kmfg::compare_checkpoints(cmp_a, cmp_b);
      std::printf("%s\n", rep.to_json().dump(2).c_str());
      return 0;
    }
    if (oracle->parsed()) {
      const kmfg::PhaseGrid grid(kmfg::GridConfig{.d = oracle_d,
                                                  .T = 1.0,
                                                  .n_t = 1,
                                                  .L_x = oracle_Lx,
                                                  .n_x = oracle_n,
                                                  .L_v = oracle_Lv,
                                                  .n_v = oracle_n});
      const kmfg::FieldD field =
          kmfg::oracle_kolmogorov(grid, oracle_t, oracle_sx, oracle_sv);
      if (oracle_out.empty()) {
        for (int a = 0; a < grid.d(); ++a) std::printf("x%d,", a);
        for (int a = 0; a < grid.d(); ++a) std::printf("v%d,", a);
        std::printf("value\n");
        for (Eigen::Index r = 0; r < field.values.rows(); ++r)
          for (Eigen::Index c = 0; c < field.values.cols(); ++c) {
            for (int a = 0; a < grid.d(); ++a)
              std::printf("%.17g,", grid.x_center(r, a));
            for (int a = 0; a < grid.d(); ++a)
              std::printf("%.17g,", grid.v_center(c, a));
            std::printf("%.17g\n", field.values(r, c));
          }
      } else {
        kmfg::write_field_csv(oracle_out, field);
      }
      return 0;
    }
  } catch (const kmfg::Error& e) {
    return fail_json("error", e.what(), 2);
  }
  return 0;
}
