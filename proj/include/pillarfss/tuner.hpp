#pragma once

// Bias-space orchestration: grid sweeps through solver, exciton and spectro,
// and the search for vanishing fine-structure splitting.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pillarfss/exciton.hpp"
#include "pillarfss/solver.hpp"

namespace pillarfss {

struct AxisRange {
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;

  /// Number of grid values, min + k step for k < count(), last one <= max.
  int count() const;
  double value(int k) const { return min + k * step; }
};

/// Column groups of the sweep CSV.
enum class SweepOutput : unsigned {
  kFields = 1u << 0,
  kCurrents = 1u << 1,
  kRegime = 1u << 2,
  kFss = 1u << 3,
  kTheta0 = 1u << 4,
  kAlgebraicFss = 1u << 5,
  kStark = 1u << 6,
};
inline constexpr unsigned kAllSweepOutputs = 0x7fu;

const char* sweep_output_name(SweepOutput o);
/// Throws ConfigError on an unknown name.
SweepOutput sweep_output_from_name(const std::string& name);

struct SweepSpec {
  AxisRange va{-4.0, 5.0, 0.225};
  AxisRange vb{-4.0, 5.0, 0.225};
  std::optional<double> vc;  // nullopt = floating
  unsigned outputs = kAllSweepOutputs;

  bool wants(SweepOutput o) const { return (outputs & static_cast<unsigned>(o)) != 0u; }
  BiasPoint bias(int ia, int ib) const;
  void validate() const;
};

struct SweepRecord {
  int ia = 0;
  int ib = 0;
  BiasPoint bias;
  bool ok = false;
  std::string status = "ok";  // diagnostic text when !ok
  Eigen::Vector2d e_inplane = Eigen::Vector2d::Zero();
  double e_z = 0.0;
  std::array<double, 3> current{};
  double junction_current = 0.0;
  int region = 0;
  int iters = 0;
  double residual = 0.0;
  ExcitonState exciton;
  double algebraic_fss = 0.0;  // ueV, against SweepResult::theta_ref
  double stark_shift = 0.0;    // ueV
};

struct SweepResult {
  SweepSpec spec;
  int na = 0;
  int nb = 0;
  std::vector<SweepRecord> records;  // index ia * nb + ib
  double theta_ref = 0.0;            // rad, eigenaxis at zero bias
  std::string config_hash;
  int mesh_nodes = 0;
  int mesh_cells = 0;
  double mesh_max_edge = 0.0;
  double wall_seconds = 0.0;

  const SweepRecord& at(int ia, int ib) const {
    return records[static_cast<std::size_t>(ia * nb + ib)];
  }
  int failed_count() const;
};

/// Reference eigenaxis: the high-energy axis at zero applied bias with the
/// sweep's C setting. Falls back to the axis of delta0 when that state is
/// degenerate.
double reference_axis(const SheetProblem& problem, const ExcitonParams& exciton,
                      const SolverConfig& cfg, std::optional<double> vc);

/// Grid rows (fixed V_A) are independent work items. Within a row the solves
/// chain warm starts, V_B ascending on even rows and descending on odd rows,
/// so the output does not depend on jobs.
SweepResult run_bias_sweep(const SweepSpec& spec, const SheetProblem& problem,
                           const ExcitonParams& exciton, const SolverConfig& cfg, int jobs = 1);

struct TuneSpec {
  BiasPoint start = BiasPoint::c_floating(0.0, 0.0);
  std::vector<Terminal> free_terminals{Terminal::A, Terminal::B};
  AxisRange window_a{-4.0, 5.0, 0.225};  // bounds for A (and C, if free)
  AxisRange window_b{-4.0, 5.0, 0.225};  // bounds for B
  double tol = 1.5;                       // ueV
  int restart_grid = 5;                   // coarse starts per free axis
  int max_evaluations = 400;              // per simplex run
  double probe_step = 0.1;                // V, eigenaxis probe distance

  void validate() const;
};

enum class AxisVerdict { kCrossing, kNoCrossing, kIndeterminate };
const char* axis_verdict_name(AxisVerdict v);

struct AxisCheck {
  double rotation = 0.0;  // rad in [0, pi/2]
  double theta_start = 0.0;
  double theta_end = 0.0;
  double fss_start = 0.0;
  double fss_end = 0.0;
  AxisVerdict verdict = AxisVerdict::kIndeterminate;
};

struct TuneResult {
  BiasPoint bias;
  double fss = 0.0;          // ueV
  double theta0 = 0.0;       // rad, at the optimum (0 if degenerate)
  double mean_energy = 0.0;  // eV
  AxisCheck axis;            // probe at bias -/+ probe_step along the approach
  Eigen::VectorXd approach;  // unit vector in free-bias space
  int iterations = 0;        // simplex iterations over all restarts
  int evaluations = 0;       // solves
  int restarts = 0;          // simplex runs started
  bool converged = false;    // fss <= tol
  double tol = 0.0;
};

/// Nelder-Mead on fss over the free biases, started from the best points of
/// a coarse grid. Throws TunerError on invalid specs; an unmet tolerance is
/// reported through converged = false.
TuneResult find_zero_fss(const TuneSpec& spec, const SheetProblem& problem,
                         const ExcitonParams& exciton, const SolverConfig& cfg);

/// Rotation of the high-energy axis between two bias points.
AxisCheck eigenaxis_rotation_check(const BiasPoint& start, const BiasPoint& end,
                                   const SheetProblem& problem, const ExcitonParams& exciton,
                                   const SolverConfig& cfg);

struct IsoFssPair {
  int first = 0;   // record index
  int second = 0;  // record index, > first
  double fss_first = 0.0;
  double fss_second = 0.0;
  double energy_separation = 0.0;  // ueV, |mean_energy difference|
};

/// Pairs of converged cells with |fss - target| <= 0.1 target and mean
/// energies at least min_separation ueV apart, ordered by (first, second).
std::vector<IsoFssPair> iso_fss_points(const SweepResult& sweep, double target_fss,
                                       double min_energy_separation);

}  // namespace pillarfss
