#include "pillarfss/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <utility>

#include <Eigen/SparseCholesky>

#include "pillarfss/error.hpp"

namespace pillarfss {

void BiasPoint::validate() const {
  bool any = false;
  for (const auto& x : v) {
    if (x.has_value()) {
      any = true;
      if (!std::isfinite(*x)) throw InputError("bias: terminal voltages must be finite");
    }
  }
  if (!any) throw InputError("bias: at least one terminal must be driven");
}

void SolverConfig::validate() const {
  if (!(newton_tol > 0.0)) throw ConfigError("solver: newton_tol must be > 0");
  if (max_iters < 1) throw ConfigError("solver: max_iters must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("solver: damping must lie in (0, 1]");
  if (continuation_steps < 1) throw ConfigError("solver: continuation_steps must be >= 1");
  if (max_bisections < 0) throw ConfigError("solver: max_bisections must be >= 0");
  if (!(current_floor > 0.0)) throw ConfigError("solver: current_floor must be > 0");
  if (!(regime_threshold > 0.0)) throw ConfigError("solver: regime_threshold must be > 0");
}

SheetProblem::SheetProblem(Mesh mesh, MaterialParams materials, DeviceGeometry geometry)
    : mesh_(std::move(mesh)), materials_(materials), geometry_(geometry) {
  mesh_.validate();
  materials_.validate();
  const int n = mesh_.node_count();
  dof_.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (mesh_.region[static_cast<std::size_t>(i)] == Region::Free) dof_[static_cast<std::size_t>(i)] = free_++;
  }
  unknowns_ = free_;
  for (int t = 0; t < kTerminals; ++t) {
    const auto nodes = mesh_.nodes_in(static_cast<Region>(t));
    if (nodes.empty()) continue;
    contact_[static_cast<std::size_t>(t)] = unknowns_;
    for (int i : nodes) dof_[static_cast<std::size_t>(i)] = unknowns_;
    ++unknowns_;
  }
  area_ = mesh_.lumped_areas();

  // P1 stiffness, off-diagonal entries collected per unknown pair.
  std::map<std::pair<int, int>, double> pair_conductance;
  const double sigma = materials_.sheet_conductance;
  for (int c = 0; c < mesh_.cell_count(); ++c) {
    std::array<Eigen::Vector2d, 3> b;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector2d pj = mesh_.nodes.col(mesh_.cells((k + 1) % 3, c));
      const Eigen::Vector2d pk = mesh_.nodes.col(mesh_.cells((k + 2) % 3, c));
      b[static_cast<std::size_t>(k)] = Eigen::Vector2d(pj.y() - pk.y(), pk.x() - pj.x());
    }
    const Eigen::Vector2d e1 = mesh_.nodes.col(mesh_.cells(1, c)) - mesh_.nodes.col(mesh_.cells(0, c));
    const Eigen::Vector2d e2 = mesh_.nodes.col(mesh_.cells(2, c)) - mesh_.nodes.col(mesh_.cells(0, c));
    const double area = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
    for (int k = 0; k < 3; ++k) {
      for (int l = k + 1; l < 3; ++l) {
        const int da = dof_[static_cast<std::size_t>(mesh_.cells(k, c))];
        const int db = dof_[static_cast<std::size_t>(mesh_.cells(l, c))];
        if (da == db) continue;
        const double g = -sigma * b[static_cast<std::size_t>(k)].dot(b[static_cast<std::size_t>(l)]) / (4.0 * area);
        pair_conductance[{std::min(da, db), std::max(da, db)}] += g;
      }
    }
  }
  edges_.reserve(pair_conductance.size());
  for (const auto& [key, g] : pair_conductance) edges_.push_back({key.first, key.second, g});
}

Eigen::VectorXd SheetProblem::expand(const Eigen::VectorXd& unknowns) const {
  Eigen::VectorXd phi(mesh_.node_count());
  for (int i = 0; i < mesh_.node_count(); ++i) phi(i) = unknowns(dof_[static_cast<std::size_t>(i)]);
  return phi;
}

Eigen::VectorXd SheetProblem::reduce(const Eigen::VectorXd& phi) const {
  if (phi.size() != mesh_.node_count()) {
    throw DimensionError("reduce: potential length does not match node count");
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(unknowns_);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(unknowns_);
  for (int i = 0; i < mesh_.node_count(); ++i) {
    u(dof_[static_cast<std::size_t>(i)]) += phi(i);
    count(dof_[static_cast<std::size_t>(i)]) += 1.0;
  }
  return u.cwiseQuotient(count);
}

Assembly assemble_system(const SheetProblem& problem, const BiasPoint& bias,
                         const Eigen::VectorXd& unknowns, bool with_jacobian) {
  const int n = problem.unknown_count();
  if (unknowns.size() != n) {
    throw DimensionError("assemble_system: expected " + std::to_string(n) + " unknowns, got " +
                         std::to_string(unknowns.size()));
  }
  const MaterialParams& m = problem.materials();
  Assembly out;
  out.residual = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);

  for (const auto& e : problem.edges()) {
    const double f = e.conductance * (unknowns(e.a) - unknowns(e.b));
    out.residual(e.a) += f;
    out.residual(e.b) -= f;
  }
  const Mesh& mesh = problem.mesh();
  const Eigen::VectorXd& area = problem.node_area();
  for (int i = 0; i < mesh.node_count(); ++i) {
    const int d = problem.unknown_of(i);
    const double u = unknowns(d);
    out.residual(d) += area(i) * diode_current_density(u, m);
    if (with_jacobian) {
      diag(d) += area(i) * diode_conductance_density(u, m.saturation_current_density, m.ideality,
                                                     m.thermal_voltage);
    }
  }
  for (int t = 0; t < kTerminals; ++t) {
    const auto term = static_cast<Terminal>(t);
    const int c = problem.contact_unknown(term);
    if (c < 0 || bias.floating(term)) continue;
    const double r = m.series_resistance[static_cast<std::size_t>(t)];
    out.residual(c) += (unknowns(c) - bias.value(term)) / r;
    diag(c) += 1.0 / r;
  }

  if (with_jacobian) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(problem.edges().size() * 4 + static_cast<std::size_t>(n));
    for (const auto& e : problem.edges()) {
      trip.emplace_back(e.a, e.a, e.conductance);
      trip.emplace_back(e.b, e.b, e.conductance);
      trip.emplace_back(e.a, e.b, -e.conductance);
      trip.emplace_back(e.b, e.a, -e.conductance);
    }
    for (int d = 0; d < n; ++d) trip.emplace_back(d, d, diag(d));
    out.jacobian.resize(n, n);
    out.jacobian.setFromTriplets(trip.begin(), trip.end());
  }
  return out;
}

namespace {

std::array<double, 3> contact_currents(const SheetProblem& problem, const BiasPoint& bias,
                                       const Eigen::VectorXd& u) {
  std::array<double, 3> i{};
  for (int t = 0; t < kTerminals; ++t) {
    const auto term = static_cast<Terminal>(t);
    const int c = problem.contact_unknown(term);
    if (c < 0 || bias.floating(term)) continue;
    i[static_cast<std::size_t>(t)] =
        (bias.value(term) - u(c)) / problem.materials().series_resistance[static_cast<std::size_t>(t)];
  }
  return i;
}

double junction_current(const SheetProblem& problem, const Eigen::VectorXd& u) {
  double sum = 0.0;
  for (int i = 0; i < problem.mesh().node_count(); ++i) {
    sum += problem.node_area()(i) * diode_current_density(u(problem.unknown_of(i)), problem.materials());
  }
  return sum;
}

struct NewtonOutcome {
  bool converged = false;
  int iters = 0;
  double residual = 0.0;
  std::vector<double> history;
};

// Currents below what the discrete operator can resolve in double precision
// (about 1e-5 of G_max |u|_inf, with G_max the largest Jacobian diagonal)
// never set the scale, otherwise high-conductance sheets in deep reverse bias
// stall on roundoff.
constexpr double kResolvableFraction = 1e-5;

double current_scale(const SheetProblem& problem, const BiasPoint& bias, const Eigen::VectorXd& u,
                     const Eigen::SparseMatrix<double>& jacobian, double floor) {
  double s = floor;
  for (double i : contact_currents(problem, bias, u)) s = std::max(s, std::abs(i));
  const double g_max = jacobian.diagonal().cwiseAbs().maxCoeff();
  return std::max(s, kResolvableFraction * g_max * u.lpNorm<Eigen::Infinity>());
}

// Newton at a fixed bias. The iterate is left at the last accepted point.
NewtonOutcome newton(const SheetProblem& problem, const BiasPoint& bias, const SolverConfig& cfg,
                     Eigen::VectorXd& u) {
  NewtonOutcome out;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;
  double step = cfg.damping;
  Assembly sys = assemble_system(problem, bias, u);
  for (;;) {
    if (!sys.residual.allFinite()) throw NumericalError("solver: non-finite residual");
    const double scale = current_scale(problem, bias, u, sys.jacobian, cfg.current_floor);
    const double rel_max = sys.residual.lpNorm<Eigen::Infinity>() / scale;
    // Sum of all rows, with the edge fluxes cancelled analytically.
    double net = junction_current(problem, u);
    for (double i : contact_currents(problem, bias, u)) net -= i;
    const double rel_sum = std::abs(net) / scale;
    out.residual = std::max(rel_max, rel_sum);
    out.history.push_back(out.residual);
    if (out.residual <= cfg.newton_tol) {
      out.converged = true;
      return out;
    }
    if (out.iters >= cfg.max_iters) return out;

    if (!analyzed) {
      ldlt.analyzePattern(sys.jacobian);
      analyzed = true;
    }
    ldlt.factorize(sys.jacobian);
    if (ldlt.info() != Eigen::Success) throw NumericalError("solver: Jacobian factorization failed");
    const Eigen::VectorXd delta = ldlt.solve(-sys.residual);
    if (!delta.allFinite()) throw NumericalError("solver: non-finite Newton update");

    const double merit = sys.residual.norm();
    bool accepted = false;
    double t = step;
    while (t > 1e-12) {
      Eigen::VectorXd trial = u + t * delta;
      Assembly trial_sys = assemble_system(problem, bias, trial);
      const double trial_merit = trial_sys.residual.norm();
      if (std::isfinite(trial_merit) && trial_merit < (1.0 - 1e-4 * t) * merit) {
        u = std::move(trial);
        sys = std::move(trial_sys);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    ++out.iters;
    if (!accepted) return out;
    step = std::min(1.0, 2.0 * t);
  }
}

BiasPoint interpolate(const BiasPoint& from, const BiasPoint& to, double s) {
  BiasPoint b = to;
  for (int t = 0; t < kTerminals; ++t) {
    auto& slot = b.v[static_cast<std::size_t>(t)];
    if (!slot) continue;
    const double a = from.value(static_cast<Terminal>(t));
    slot = a + s * (*slot - a);
  }
  return b;
}

bool same_floating_pattern(const BiasPoint& a, const BiasPoint& b) {
  for (int t = 0; t < kTerminals; ++t) {
    if (a.floating(static_cast<Terminal>(t)) != b.floating(static_cast<Terminal>(t))) return false;
  }
  return true;
}

}  // namespace

FieldSolution solve_bias_point(const SheetProblem& problem, const BiasPoint& bias,
                               const SolverConfig& cfg, const std::optional<WarmStart>& warm) {
  bias.validate();
  cfg.validate();

  BiasPoint start = bias;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(problem.unknown_count());
  int steps = cfg.continuation_steps;
  if (warm && warm->unknowns.size() == problem.unknown_count() &&
      same_floating_pattern(warm->bias, bias)) {
    start = warm->bias;
    u = warm->unknowns;
    steps = 1;
  } else {
    for (auto& slot : start.v) {
      if (slot) slot = 0.0;
    }
  }

  int total_iters = 0;
  double reached = 0.0;
  double ds = 1.0 / steps;
  int bisections = 0;
  NewtonOutcome last;
  while (reached < 1.0) {
    const double target = std::min(1.0, reached + ds);
    Eigen::VectorXd trial = u;
    last = newton(problem, interpolate(start, bias, target), cfg, trial);
    total_iters += last.iters;
    if (last.converged) {
      u = std::move(trial);
      reached = target;
      continue;
    }
    if (bisections >= cfg.max_bisections) {
      char msg[96];
      std::snprintf(msg, sizeof msg, "solver: Newton did not converge (relative residual %.3e)",
                    last.residual);
      throw ConvergenceError(msg, last.history);
    }
    ++bisections;
    ds *= 0.5;
  }

  FieldSolution sol;
  sol.bias = bias;
  sol.unknowns = u;
  sol.phi = problem.expand(u);
  sol.newton_iters = total_iters;
  sol.residual = last.residual;
  sol.residual_history = last.history;
  sol.terminal_current = contact_currents(problem, bias, u);
  sol.junction_current = junction_current(problem, u);
  const Mesh& mesh = problem.mesh();
  sol.e_inplane = inplane_field_at(mesh, sol.phi, mesh.qd_node);
  const DeviceGeometry& g = problem.geometry();
  sol.e_z = (g.built_in_voltage - sol.phi(mesh.qd_node)) / (g.intrinsic_thickness * 1e-9);
  return sol;
}

TerminalCurrents terminal_currents(const SheetProblem& problem, const FieldSolution& solution) {
  const auto i = contact_currents(problem, solution.bias, solution.unknowns);
  return {i[0], i[1], i[2], junction_current(problem, solution.unknowns)};
}

double kirchhoff_error(const FieldSolution& s, double current_floor) {
  double scale = current_floor;
  for (double i : s.terminal_current) scale = std::max(scale, std::abs(i));
  return std::abs(s.i_a() + s.i_b() + s.i_c() - s.junction_current) / scale;
}

int classify_regime(const FieldSolution& solution, double threshold) {
  const bool a = solution.i_a() >= threshold;
  const bool b = solution.i_b() >= threshold;
  if (a && b) return 2;
  if (a) return 3;
  if (b) return 4;
  return 1;
}

Eigen::Vector2d inplane_field_at(const Mesh& mesh, const Eigen::VectorXd& phi, int node) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  double weight = 0.0;
  for (int c = 0; c < mesh.cell_count(); ++c) {
    if (mesh.cells(0, c) != node && mesh.cells(1, c) != node && mesh.cells(2, c) != node) continue;
    const Eigen::Vector2d p0 = mesh.nodes.col(mesh.cells(0, c));
    const Eigen::Vector2d p1 = mesh.nodes.col(mesh.cells(1, c));
    const Eigen::Vector2d p2 = mesh.nodes.col(mesh.cells(2, c));
    Eigen::Matrix2d d;
    d.col(0) = p1 - p0;
    d.col(1) = p2 - p0;
    const Eigen::Vector2d dphi(phi(mesh.cells(1, c)) - phi(mesh.cells(0, c)),
                               phi(mesh.cells(2, c)) - phi(mesh.cells(0, c)));
    // d^T grad = dphi
    const Eigen::Vector2d grad = d.transpose().partialPivLu().solve(dphi);
    const double area = 0.5 * std::abs(d.determinant());
    sum += area * grad;
    weight += area;
  }
  if (weight == 0.0) return Eigen::Vector2d::Zero();
  return -1e6 * sum / weight;  // V/um -> V/m
}

}  // namespace pillarfss
