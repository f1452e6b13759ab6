#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/tools/roots.hpp>
#include <boost/multiprecision/cpp_dec_float.hpp>

#include "pillarfss/error.hpp"
#include "pillarfss/solver.hpp"
#include "support.hpp"

using namespace pillarfss;
using Hp = boost::multiprecision::cpp_dec_float_50;

namespace {

// Clamped Shockley law evaluated in 50-digit arithmetic.
Hp oracle_current(const Hp& phi, const Hp& js, const Hp& n, const Hp& vt) {
  const Hp x = phi / (n * vt);
  if (x <= 40) return js * (exp(x) - 1);
  return js * (exp(Hp(40)) * (1 + (x - 40)) - 1);
}

Hp oracle_conductance(const Hp& phi, const Hp& js, const Hp& n, const Hp& vt) {
  const Hp x = phi / (n * vt);
  return js * exp(x <= 40 ? x : Hp(40)) / (n * vt);
}

MaterialParams test_materials() {
  MaterialParams m;
  m.sheet_conductance = 1e-3;
  m.saturation_current_density = 1e-12;
  m.ideality = 2.0;
  m.thermal_voltage = 0.025852;
  m.series_resistance = {1e4, 1e4, 1e4};
  return m;
}

BiasPoint only_a(double va) { return BiasPoint{{va, std::nullopt, std::nullopt}}; }

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("diode law matches a high-precision evaluation") {
  const double js = 5e-19, n = 2.0, vt = 0.025852;
  for (double phi = -3.0; phi <= 3.0; phi += 0.0137) {
    const Hp o = oracle_current(Hp(phi), Hp(js), Hp(n), Hp(vt));
    const double d = diode_current_density(phi, js, n, vt);
    CAPTURE(phi);
    CHECK(std::abs(d - o.convert_to<double>()) <= 1e-13 * std::abs(o.convert_to<double>()) + 1e-16 * js);
    const Hp og = oracle_conductance(Hp(phi), Hp(js), Hp(n), Hp(vt));
    const double g = diode_conductance_density(phi, js, n, vt);
    CHECK(g == doctest::Approx(og.convert_to<double>()).epsilon(1e-13));
  }
}

TEST_CASE("diode law saturates in reverse and stays finite in deep forward") {
  const double js = 5e-19, n = 2.0, vt = 0.025852;
  CHECK(diode_current_density(-5.0, js, n, vt) == doctest::Approx(-js).epsilon(1e-15));
  const double big = diode_current_density(100.0, js, n, vt);
  CHECK(std::isfinite(big));
  // Linear continuation: equal slopes on both sides of the clamp.
  const double xc = 40.0 * n * vt;
  const double h = 1e-7;
  const double left = (diode_current_density(xc, js, n, vt) - diode_current_density(xc - h, js, n, vt)) / h;
  const double right = (diode_current_density(xc + h, js, n, vt) - diode_current_density(xc, js, n, vt)) / h;
  CHECK(left == doctest::Approx(right).epsilon(1e-5));
}

TEST_CASE("assembled Jacobian matches finite differences") {
  const SheetProblem problem(rectangle_mesh(4.0, 2.0, 1.0), test_materials());
  for (const BiasPoint& bias : {BiasPoint{{0.6, 0.2, std::nullopt}}, only_a(0.7)}) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(0.2, 0.6);
    Eigen::VectorXd u(problem.unknown_count());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = dist(rng);
    const Assembly sys = assemble_system(problem, bias, u);
    const Eigen::MatrixXd jac(sys.jacobian);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      Eigen::VectorXd up = u, um = u;
      up(k) += h;
      um(k) -= h;
      const Eigen::VectorXd fd = (assemble_system(problem, bias, up, false).residual -
                                  assemble_system(problem, bias, um, false).residual) / (2.0 * h);
      CAPTURE(k);
      CHECK((fd - jac.col(k)).lpNorm<Eigen::Infinity>() <= 1e-6 * jac.col(k).lpNorm<Eigen::Infinity>());
    }
  }
}

TEST_CASE("wrong unknown length is a dimension error") {
  const SheetProblem problem(rectangle_mesh(4.0, 2.0, 1.0), test_materials());
  CHECK_THROWS_AS(assemble_system(problem, only_a(0.1), Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("Laplace limit reproduces the strip field") {
  MaterialParams m = test_materials();
  m.saturation_current_density = 0.0;
  m.series_resistance = {1e-3, 1e-3, 1e-3};
  const SheetProblem problem(rectangle_mesh(50.0, 10.0, 1.0), m);
  const FieldSolution s = solve_bias_point(problem, BiasPoint{{1.0, 0.0, std::nullopt}}, SolverConfig{});
  const double expected = 1.0 / 50e-6;
  CHECK(s.e_inplane.x() == doctest::Approx(expected).epsilon(0.01));
  CHECK(std::abs(s.e_inplane.y()) <= 0.01 * expected);
}

TEST_CASE("lumped single contact matches the scalar root of the circuit") {
  Mesh mesh;
  mesh.nodes.resize(2, 3);
  mesh.nodes << 0.0, 20.0, 0.0, 0.0, 0.0, 10.0;
  mesh.cells.resize(3, 1);
  mesh.cells << 0, 1, 2;
  mesh.region = {Region::PadA, Region::PadA, Region::PadA};
  const MaterialParams m = [] {
    MaterialParams p = test_materials();
    p.series_resistance = {1e5, 1e5, 1e5};
    return p;
  }();
  const SheetProblem problem(mesh, m);
  const double area = 100.0;
  for (double va : {-2.0, 0.3, 1.5, 4.0}) {
    auto f = [&](long double phi) {
      const Hp j = oracle_current(Hp(static_cast<double>(phi)), Hp(m.saturation_current_density),
                                  Hp(m.ideality), Hp(m.thermal_voltage));
      return static_cast<long double>((va - phi) / m.series_resistance[0]) -
             static_cast<long double>(j.convert_to<double>()) * area;
    };
    boost::math::tools::eps_tolerance<long double> tol(50);
    std::uintmax_t iters = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(
        f, std::min(0.0L, static_cast<long double>(va)), std::max(0.0L, static_cast<long double>(va)),
        tol, iters);
    const double root = static_cast<double>(0.5L * (lo + hi));
    const FieldSolution s = solve_bias_point(problem, only_a(va), SolverConfig{});
    CAPTURE(va);
    CHECK(s.phi(0) == doctest::Approx(root).epsilon(1e-9));
    CHECK(s.i_a() == doctest::Approx((va - root) / 1e5).epsilon(1e-6));
  }
}

TEST_CASE("zero bias is equilibrium") {
  const auto& cfg = testing::default_config();
  const FieldSolution s =
      solve_bias_point(testing::default_problem(), BiasPoint::driven(0.0, 0.0, 0.0), cfg.solver);
  CHECK(s.phi.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.junction_current == 0.0);
  CHECK(s.e_z == doctest::Approx(cfg.device.built_in_voltage / (cfg.device.intrinsic_thickness * 1e-9)));
  CHECK(classify_regime(s, cfg.solver.regime_threshold) == 1);
}

TEST_CASE("deep reverse bias drains the saturation current") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  const FieldSolution s = solve_bias_point(p, BiasPoint::driven(-3.0, -3.0, -3.0), cfg.solver);
  const double expected = -cfg.materials.saturation_current_density * p.total_area();
  CHECK(s.junction_current == doctest::Approx(expected).epsilon(1e-6));
  CHECK(s.i_a() < 0.0);
  CHECK(s.i_b() < 0.0);
  CHECK(s.i_c() < 0.0);
}

TEST_CASE("Kirchhoff balance holds at converged points") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  for (const BiasPoint& b :
       {BiasPoint::c_floating(-3.0, -1.0), BiasPoint::c_floating(3.0, -1.0), BiasPoint::c_floating(4.0, 4.8),
        BiasPoint::c_floating(5.0, 5.0), BiasPoint::driven(2.0, -1.0, 3.0), only_a(4.0)}) {
    const FieldSolution s = solve_bias_point(p, b, cfg.solver);
    CHECK(kirchhoff_error(s, cfg.solver.current_floor) <= 1e-8);
    const TerminalCurrents t = terminal_currents(p, s);
    CHECK(t.i_a == doctest::Approx(s.i_a()));
    CHECK(t.i_junction == doctest::Approx(s.junction_current));
    if (b.floating(Terminal::C)) CHECK(std::abs(s.i_c()) <= 1e-8 * std::max(cfg.solver.current_floor, std::abs(s.junction_current)));
  }
}

TEST_CASE("terminal current increases along a bias ladder") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  double prev = -INFINITY;
  for (int k = 0; k < 10; ++k) {
    const double va = -4.0 + k;
    const FieldSolution s = solve_bias_point(p, BiasPoint::c_floating(va, -1.0), cfg.solver);
    CAPTURE(va);
    CHECK(s.i_a() >= prev);
    prev = s.i_a();
  }
}

TEST_CASE("permuting the biases rotates the field by 120 degrees") {
  RunConfig cfg = testing::default_config();
  cfg.materials.series_resistance = {1.8e6, 1.8e6, 1.8e6};
  const SheetProblem p = make_problem(cfg);
  const FieldSolution s = solve_bias_point(p, BiasPoint::driven(2.5, -1.0, 0.5), cfg.solver);
  const FieldSolution r = solve_bias_point(p, BiasPoint::driven(0.5, 2.5, -1.0), cfg.solver);
  const Eigen::Vector2d rotated = Eigen::Rotation2Dd(2.0 * kPi / 3.0) * s.e_inplane;
  CHECK(r.e_inplane.norm() == doctest::Approx(s.e_inplane.norm()).epsilon(1e-6));
  CHECK((r.e_inplane - rotated).norm() <= 1e-6 * s.e_inplane.norm());
  CHECK(r.e_z == doctest::Approx(s.e_z).epsilon(1e-9));
}

TEST_CASE("warm and cold starts agree") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  const BiasPoint target = BiasPoint::c_floating(3.0, 1.0);
  const FieldSolution cold = solve_bias_point(p, target, cfg.solver);
  const FieldSolution near = solve_bias_point(p, BiasPoint::c_floating(2.8, 1.0), cfg.solver);
  const FieldSolution warm = solve_bias_point(p, target, cfg.solver, WarmStart{near.bias, near.unknowns});
  const double scale = std::max(1.0, cold.phi.lpNorm<Eigen::Infinity>());
  CHECK((cold.phi - warm.phi).lpNorm<Eigen::Infinity>() <= 10.0 * cfg.solver.newton_tol * scale);
}

TEST_CASE("accepted Newton steps reduce the residual") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  for (const BiasPoint& b : {BiasPoint::c_floating(4.0, 4.8), BiasPoint::c_floating(-3.0, -1.0)}) {
    const FieldSolution s = solve_bias_point(p, b, cfg.solver);
    REQUIRE(s.residual_history.size() >= 1);
    CHECK(s.residual_history.back() <= cfg.solver.newton_tol);
    for (std::size_t k = 1; k < s.residual_history.size(); ++k) {
      CAPTURE(k);
      CHECK(s.residual_history[k] < s.residual_history[k - 1]);
    }
  }
}

TEST_CASE("regimes follow which driven terminals conduct") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  auto region = [&](double va, double vb) {
    return classify_regime(solve_bias_point(p, BiasPoint::c_floating(va, vb), cfg.solver),
                           cfg.solver.regime_threshold);
  };
  CHECK(region(-3.0, -1.0) == 1);
  CHECK(region(4.0, 4.8) == 2);
  CHECK(region(3.0, -1.0) == 3);
  CHECK(region(-1.0, 5.0) == 4);
}

TEST_CASE("all-floating bias is rejected") {
  CHECK_THROWS_AS(BiasPoint({}).validate(), InputError);
  CHECK_THROWS_AS(BiasPoint::c_floating(NAN, 0.0).validate(), InputError);
}

TEST_CASE("an iteration budget too small reports the residual history") {
  RunConfig cfg = testing::default_config();
  cfg.solver.max_iters = 1;
  cfg.solver.continuation_steps = 1;
  cfg.solver.max_bisections = 0;
  try {
    solve_bias_point(testing::default_problem(), BiasPoint::c_floating(5.0, 5.0), cfg.solver);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual_history().size() == 2);
    CHECK(e.exit_code() == ExitCode::kSolver);
  }
}

}
