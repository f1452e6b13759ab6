#pragma once

// Run configuration: one YAML document with the sections
//
//   seed, device, materials, exciton, solver, sweep, tuner, spectro
//
// Unknown keys are rejected with the offending line and section. Missing
// keys keep their defaults. See docs/formats.md for the full key list.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pillarfss/device.hpp"
#include "pillarfss/exciton.hpp"
#include "pillarfss/solver.hpp"
#include "pillarfss/tuner.hpp"

namespace pillarfss {

struct SpectroSettings {
  double linewidth = 100.0;  // ueV FWHM
  double noise = 0.5;        // ueV
  int angles = 36;
};

struct IsoSettings {
  double target = 5.0;       // ueV
  double separation = 30.0;  // ueV
};

struct RunConfig {
  std::uint64_t seed = 1;
  DeviceGeometry device;
  double mesh_edge = 1.0;  // um
  MaterialParams materials;
  std::optional<double> temperature;  // K; sets materials.thermal_voltage
  ExcitonParams exciton;
  SolverConfig solver;
  SweepSpec sweep;
  TuneSpec tuner;  // windows follow the sweep ranges
  IsoSettings iso;
  SpectroSettings spectro;

  /// Throws the module error of the first violated invariant.
  void validate() const;
};

/// Throws ConfigError naming source, line and section on any problem.
RunConfig parse_config(const std::string& yaml_text, const std::string& source = "<config>");
/// Throws IoError when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Deterministic "section.key = value" listing of every setting.
std::string canonical_config(const RunConfig& cfg);
/// 16 hex digits, FNV-1a 64 of canonical_config.
std::string config_hash(const RunConfig& cfg);

/// Builds the geometry, mesh and discretization of a configuration.
SheetProblem make_problem(const RunConfig& cfg);

}  // namespace pillarfss
