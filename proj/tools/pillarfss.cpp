#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pillarfss/config.hpp"
#include "pillarfss/error.hpp"
#include "pillarfss/exciton.hpp"
#include "pillarfss/io.hpp"
#include "pillarfss/solver.hpp"
#include "pillarfss/spectro.hpp"
#include "pillarfss/tuner.hpp"

#ifndef PILLARFSS_DEFAULT_CONFIG
#define PILLARFSS_DEFAULT_CONFIG "configs/default.yaml"
#endif

namespace fs = std::filesystem;
using namespace pillarfss;

namespace {

struct Globals {
  std::string config = PILLARFSS_DEFAULT_CONFIG;
  std::string out = "out";
};

std::optional<double> parse_terminal_voltage(const std::string& text, const char* name) {
  if (text == "floating") return std::nullopt;
  try {
    return parse_double(text);
  } catch (const InputError&) {
    throw InputError(std::string("--") + name + ": expected a voltage or 'floating', got '" + text + "'");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir);
  return fs::path(dir);
}

Eigen::Vector3d field_vector(const FieldSolution& s) {
  return {s.e_inplane.x(), s.e_inplane.y(), s.e_z};
}

struct SolveArgs {
  std::string va = "0", vb = "0", vc = "floating";
  std::string field_out;
  std::string mesh_dir;
};

int cmd_solve(const Globals& g, const SolveArgs& a) {
  const RunConfig cfg = load_config(g.config);
  BiasPoint bias;
  bias.v[0] = parse_terminal_voltage(a.va, "va");
  bias.v[1] = parse_terminal_voltage(a.vb, "vb");
  bias.v[2] = parse_terminal_voltage(a.vc, "vc");
  bias.validate();
  const SheetProblem problem = make_problem(cfg);
  const FieldSolution sol = solve_bias_point(problem, bias, cfg.solver);
  const ExcitonState st = exciton_state(cfg.exciton, field_vector(sol));
  Json j;
  j["config_hash"] = config_hash(cfg);
  const Json body = solution_json(sol, st, classify_regime(sol, cfg.solver.regime_threshold));
  for (const auto& [k, v] : body.items()) j[k] = v;
  j["kirchhoff_error"] = kirchhoff_error(sol, cfg.solver.current_floor);
  if (!a.field_out.empty()) atomic_write(a.field_out, field_csv(problem.mesh(), sol.phi));
  if (!a.mesh_dir.empty()) {
    const fs::path dir = ensure_dir(a.mesh_dir);
    const std::string hash = config_hash(cfg);
    std::ostringstream nodes, cells;
    write_mesh_nodes_csv(problem.mesh(), nodes);
    write_mesh_cells_csv(problem.mesh(), cells);
    atomic_write(hashed_path(dir, "mesh-nodes", hash, "csv"), nodes.str());
    atomic_write(hashed_path(dir, "mesh-cells", hash, "csv"), cells.str());
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

SweepResult run_configured_sweep(const RunConfig& cfg, int jobs) {
  const SheetProblem problem = make_problem(cfg);
  SweepResult sweep = run_bias_sweep(cfg.sweep, problem, cfg.exciton, cfg.solver, jobs);
  sweep.config_hash = config_hash(cfg);
  return sweep;
}

int cmd_sweep(const Globals& g, int jobs) {
  const RunConfig cfg = load_config(g.config);
  const SweepResult sweep = run_configured_sweep(cfg, jobs);
  const fs::path dir = ensure_dir(g.out);
  const fs::path csv = hashed_path(dir, "sweep", sweep.config_hash, "csv");
  const fs::path meta = hashed_path(dir, "sweep", sweep.config_hash, "json");
  atomic_write(csv, sweep_csv(sweep));
  atomic_write(meta, sweep_metadata(sweep, cfg).dump(2) + "\n");
  std::cout << csv.string() << '\n' << meta.string() << '\n';
  if (sweep.failed_count() > 0) {
    std::cerr << "sweep: " << sweep.failed_count() << " of " << sweep.records.size()
              << " cells did not converge (see status column)\n";
  }
  return 0;
}

int cmd_fit(const std::string& path, std::optional<double> theta_ref) {
  const PolarizationScan scan = parse_scan_csv(read_file(path), path);
  const FitResult fit = fit_fss_sine(scan);
  Json j = to_json(fit);
  j["points"] = scan.angles.size();
  if (theta_ref) {
    j["theta_ref_rad"] = *theta_ref;
    j["algebraic_fss_ueV"] = algebraic_fss(fit, *theta_ref);
  }
  std::cout << j.dump(2) << '\n';
  std::fprintf(stderr, "delta = %.4f +/- %.4f ueV, theta0 = %.4f +/- %.4f rad, rms = %.4f ueV\n",
               fit.delta_fss, fit.uncertainty(0), fit.theta0, fit.uncertainty(1),
               fit.residual_rms);
  return 0;
}

struct SynthArgs {
  SolveArgs bias;
  std::optional<double> noise, linewidth;
  std::optional<int> angles;
  std::optional<std::uint64_t> seed;
  std::string output;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  const RunConfig cfg = load_config(g.config);
  BiasPoint bias;
  bias.v[0] = parse_terminal_voltage(a.bias.va, "va");
  bias.v[1] = parse_terminal_voltage(a.bias.vb, "vb");
  bias.v[2] = parse_terminal_voltage(a.bias.vc, "vc");
  bias.validate();
  const SheetProblem problem = make_problem(cfg);
  const FieldSolution sol = solve_bias_point(problem, bias, cfg.solver);
  const PolarizationScan scan = synth_polarization_scan(
      cfg.exciton, field_vector(sol), a.linewidth.value_or(cfg.spectro.linewidth),
      a.noise.value_or(cfg.spectro.noise), a.angles.value_or(cfg.spectro.angles),
      a.seed.value_or(cfg.seed));
  const std::string text = scan_csv(scan);
  if (a.output == "-") {
    std::cout << text;
  } else {
    const fs::path path = a.output.empty()
                              ? hashed_path(ensure_dir(g.out), "scan", config_hash(cfg), "csv")
                              : fs::path(a.output);
    atomic_write(path, text);
    std::cout << path.string() << '\n';
  }
  return 0;
}

int cmd_tune(const Globals& g, std::optional<double> tol) {
  RunConfig cfg = load_config(g.config);
  if (tol) {
    cfg.tuner.tol = *tol;
    cfg.tuner.validate();
  }
  const SheetProblem problem = make_problem(cfg);
  const TuneResult res = find_zero_fss(cfg.tuner, problem, cfg.exciton, cfg.solver);
  Json j;
  j["config_hash"] = config_hash(cfg);
  const Json body = to_json(res);
  for (const auto& [k, v] : body.items()) j[k] = v;
  const fs::path path = hashed_path(ensure_dir(g.out), "tune", config_hash(cfg), "json");
  atomic_write(path, j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  if (!res.converged) {
    std::fprintf(stderr, "tune: best fss %.4f ueV is above the tolerance %.4f ueV\n", res.fss, res.tol);
    return static_cast<int>(ExitCode::kTuner);
  }
  return 0;
}

struct IsoArgs {
  std::optional<double> target, separation;
  int jobs = 1;
};

int cmd_iso(const Globals& g, const IsoArgs& a) {
  const RunConfig cfg = load_config(g.config);
  const double target = a.target.value_or(cfg.iso.target);
  const double separation = a.separation.value_or(cfg.iso.separation);
  if (!(target > 0.0) || !(separation >= 0.0)) throw InputError("iso-fss: invalid target or separation");
  const SweepResult sweep = run_configured_sweep(cfg, a.jobs);
  const auto pairs = iso_fss_points(sweep, target, separation);
  const Json j = iso_pairs_json(sweep, pairs, target, separation);
  const fs::path path = hashed_path(ensure_dir(g.out), "iso-fss", sweep.config_hash, "json");
  atomic_write(path, j.dump(2) + "\n");
  std::cout << path.string() << '\n';
  std::cerr << "iso-fss: " << pairs.size() << " pairs\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lateral-field fine-structure tuning of a quantum dot micropillar"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config, "Configuration file (YAML)");
  app.add_option("-o,--out", g.out, "Directory for generated files");

  SolveArgs solve;
  auto* s_solve = app.add_subcommand("solve", "Solve one bias point");
  s_solve->add_option("--va", solve.va, "V_A in V or 'floating'");
  s_solve->add_option("--vb", solve.vb, "V_B in V or 'floating'");
  s_solve->add_option("--vc", solve.vc, "V_C in V or 'floating'");
  s_solve->add_option("--field-out", solve.field_out, "Write the nodal potential CSV here");
  s_solve->add_option("--export-mesh", solve.mesh_dir, "Write mesh node/cell CSVs into this directory");

  int sweep_jobs = 1;
  auto* s_sweep = app.add_subcommand("sweep", "Sweep the (V_A, V_B) grid");
  s_sweep->add_option("-j,--jobs", sweep_jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string fit_path;
  std::optional<double> fit_ref;
  auto* s_fit = app.add_subcommand("fit", "Fit a polarization scan CSV");
  s_fit->add_option("scan", fit_path, "Scan CSV (angle_rad,energy_ueV,sigma_ueV)")->required();
  s_fit->add_option("--theta-ref", fit_ref, "Fixed basis angle for the algebraic FSS, rad");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth-scan", "Synthesize a polarization scan at one bias");
  s_synth->add_option("--va", synth.bias.va, "V_A in V or 'floating'");
  s_synth->add_option("--vb", synth.bias.vb, "V_B in V or 'floating'");
  s_synth->add_option("--vc", synth.bias.vc, "V_C in V or 'floating'");
  s_synth->add_option("--noise", synth.noise, "Gaussian noise on each peak energy, ueV");
  s_synth->add_option("--linewidth", synth.linewidth, "Line FWHM, ueV");
  s_synth->add_option("--angles", synth.angles, "Number of detection angles");
  s_synth->add_option("--seed", synth.seed, "Noise seed (default: config seed)");
  s_synth->add_option("--output", synth.output, "Output CSV path, '-' for stdout");

  std::optional<double> tune_tol;
  auto* s_tune = app.add_subcommand("tune", "Search the bias window for an FSS zero");
  s_tune->add_option("--tol", tune_tol, "Target FSS, ueV");

  IsoArgs iso;
  auto* s_iso = app.add_subcommand("iso-fss", "Find bias pairs with equal FSS and distinct energies");
  s_iso->add_option("--target", iso.target, "Target FSS, ueV");
  s_iso->add_option("--separation", iso.separation, "Minimum mean-energy separation, ueV");
  s_iso->add_option("-j,--jobs", iso.jobs, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kParse);
  }

  try {
    if (s_solve->parsed()) return cmd_solve(g, solve);
    if (s_sweep->parsed()) return cmd_sweep(g, sweep_jobs);
    if (s_fit->parsed()) return cmd_fit(fit_path, fit_ref);
    if (s_synth->parsed()) return cmd_synth(g, synth);
    if (s_tune->parsed()) return cmd_tune(g, tune_tol);
    if (s_iso->parsed()) return cmd_iso(g, iso);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\nresidual history:";
    for (double r : e.residual_history()) std::fprintf(stderr, " %.3e", r);
    std::cerr << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  }
  return 0;
}
