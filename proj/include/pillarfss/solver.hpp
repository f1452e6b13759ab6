#pragma once

// Stationary potential of the p-doped top sheet with a distributed vertical
// p-i-n junction:
//
//   div(sigma_s grad phi) = j(phi)        on the footprint
//   (V_k - U_k) / R_k = I_k               at each driven pad k
//   I_k = 0                               at a floating pad
//
// discretized with P1 finite volumes on the mesh. Nodes on a pad's outer
// edge are merged into one contact unknown U_k, so the reduced unknown
// vector holds the free nodes followed by one entry per populated contact.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "pillarfss/device.hpp"

namespace pillarfss {

/// Exponent argument beyond which the diode law is continued linearly.
inline constexpr double kDiodeClampArgument = 40.0;

/// Shockley current density J_s (exp(phi / (n V_T)) - 1), continued with the
/// tangent line above kDiodeClampArgument so the value stays finite.
template <typename Scalar>
Scalar diode_current_density(const Scalar& phi, const Scalar& saturation, const Scalar& ideality,
                             const Scalar& thermal_voltage) {
  using std::exp;
  const Scalar x = phi / (ideality * thermal_voltage);
  const Scalar clamp(kDiodeClampArgument);
  if (x <= clamp) return saturation * (exp(x) - Scalar(1));
  return saturation * (exp(clamp) * (Scalar(1) + (x - clamp)) - Scalar(1));
}

/// d j / d phi, consistent with the clamped continuation.
template <typename Scalar>
Scalar diode_conductance_density(const Scalar& phi, const Scalar& saturation,
                                 const Scalar& ideality, const Scalar& thermal_voltage) {
  using std::exp;
  const Scalar nvt = ideality * thermal_voltage;
  const Scalar x = phi / nvt;
  const Scalar clamp(kDiodeClampArgument);
  return saturation * exp(x <= clamp ? x : clamp) / nvt;
}

inline double diode_current_density(double phi, const MaterialParams& m) {
  return diode_current_density(phi, m.saturation_current_density, m.ideality, m.thermal_voltage);
}

struct BiasPoint {
  std::array<std::optional<double>, 3> v{};  // nullopt = floating

  static BiasPoint driven(double va, double vb, double vc) {
    return BiasPoint{{va, vb, vc}};
  }
  static BiasPoint c_floating(double va, double vb) {
    return BiasPoint{{va, vb, std::nullopt}};
  }

  bool floating(Terminal t) const { return !v[static_cast<std::size_t>(t)].has_value(); }
  double value(Terminal t) const { return v[static_cast<std::size_t>(t)].value_or(0.0); }

  /// Throws InputError on non-finite values or when every terminal floats.
  void validate() const;
};

struct SolverConfig {
  double newton_tol = 1e-10;       // relative residual
  int max_iters = 60;              // per continuation step
  double damping = 1.0;            // first trial step factor
  int continuation_steps = 4;
  int max_bisections = 8;          // continuation step refinements on failure
  double current_floor = 1e-9;     // A, scale floor for relative residuals
  double regime_threshold = 5e-7;  // A, classify_regime threshold

  void validate() const;
};

struct FieldSolution {
  Eigen::VectorXd phi;              // per mesh node, V
  Eigen::VectorXd unknowns;         // reduced unknown vector (warm starts)
  Eigen::Vector2d e_inplane = Eigen::Vector2d::Zero();  // V/m at qd_node
  double e_z = 0.0;                 // V/m at qd_node
  std::array<double, 3> terminal_current{};  // A, positive into the device
  double junction_current = 0.0;    // A, positive towards ground
  int newton_iters = 0;
  double residual = 0.0;            // relative
  std::vector<double> residual_history;  // last continuation step
  BiasPoint bias;

  double i_a() const { return terminal_current[0]; }
  double i_b() const { return terminal_current[1]; }
  double i_c() const { return terminal_current[2]; }
  double inplane_magnitude() const { return e_inplane.norm(); }
  /// Direction of the in-plane field, radians in (-pi, pi].
  double inplane_angle() const { return std::atan2(e_inplane.y(), e_inplane.x()); }
};

/// Immutable discretization of (mesh, materials); shareable across threads.
class SheetProblem {
 public:
  SheetProblem(Mesh mesh, MaterialParams materials, DeviceGeometry geometry = {});

  const Mesh& mesh() const { return mesh_; }
  const MaterialParams& materials() const { return materials_; }
  const DeviceGeometry& geometry() const { return geometry_; }

  int unknown_count() const { return unknowns_; }
  int free_count() const { return free_; }
  /// Reduced index of a node (contact nodes share their contact's index).
  int unknown_of(int node) const { return dof_[static_cast<std::size_t>(node)]; }
  /// Reduced index of a contact, or -1 if its pad has no nodes.
  int contact_unknown(Terminal t) const { return contact_[static_cast<std::size_t>(t)]; }
  bool has_contact(Terminal t) const { return contact_unknown(t) >= 0; }

  const Eigen::VectorXd& node_area() const { return area_; }
  double total_area() const { return area_.sum(); }

  Eigen::VectorXd expand(const Eigen::VectorXd& unknowns) const;
  /// Restricts node potentials to the reduced vector; contact entries take
  /// the mean over the contact's nodes.
  Eigen::VectorXd reduce(const Eigen::VectorXd& phi) const;

  struct Edge {
    int a;
    int b;
    double conductance;  // S
  };
  const std::vector<Edge>& edges() const { return edges_; }

 private:
  Mesh mesh_;
  MaterialParams materials_;
  DeviceGeometry geometry_;
  std::vector<int> dof_;
  std::array<int, 3> contact_{-1, -1, -1};
  int free_ = 0;
  int unknowns_ = 0;
  Eigen::VectorXd area_;
  std::vector<Edge> edges_;  // between distinct unknowns only
};

struct Assembly {
  Eigen::VectorXd residual;             // A, net outflow per unknown
  Eigen::SparseMatrix<double> jacobian;  // S
};

/// Residual and Jacobian of the discrete current balance at the reduced
/// unknown vector. Throws DimensionError on a length mismatch.
Assembly assemble_system(const SheetProblem& problem, const BiasPoint& bias,
                         const Eigen::VectorXd& unknowns, bool with_jacobian = true);

/// Warm start: a converged reduced vector and the bias it belongs to.
struct WarmStart {
  BiasPoint bias;
  Eigen::VectorXd unknowns;
};

/// Damped Newton with bias continuation from zero (or from the warm start).
/// Throws ConvergenceError / NumericalError.
FieldSolution solve_bias_point(const SheetProblem& problem, const BiasPoint& bias,
                               const SolverConfig& cfg,
                               const std::optional<WarmStart>& warm = std::nullopt);

struct TerminalCurrents {
  double i_a = 0.0;
  double i_b = 0.0;
  double i_c = 0.0;
  double i_junction = 0.0;
};

/// Terminal currents from the contact resistors and the junction current as
/// the sum of nodal diode currents.
TerminalCurrents terminal_currents(const SheetProblem& problem, const FieldSolution& solution);

/// |I_A + I_B + I_C - I_junction| relative to max(|I_k|, floor).
double kirchhoff_error(const FieldSolution& solution, double current_floor);

/// Region 1: neither A nor B passes; 2: both; 3: only A; 4: only B.
int classify_regime(const FieldSolution& solution, double threshold);

/// In-plane field at a node: area-weighted mean of -grad(phi) over the
/// incident cells, V/m.
Eigen::Vector2d inplane_field_at(const Mesh& mesh, const Eigen::VectorXd& phi, int node);

}  // namespace pillarfss
