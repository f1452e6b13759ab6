#include <doctest.h>

#include <cmath>

#include "pillarfss/config.hpp"
#include "pillarfss/error.hpp"
#include "pillarfss/io.hpp"
#include "pillarfss/spectro.hpp"
#include "pillarfss/tuner.hpp"
#include "support.hpp"

using namespace pillarfss;

namespace {

SweepSpec small_sweep() {
  SweepSpec s;
  s.va = {-4.0, 5.0, 1.8};
  s.vb = {-4.0, 5.0, 1.8};
  return s;
}

}  // namespace

TEST_SUITE("tuner") {

TEST_CASE("affine chain: tuner finds the closed-form zero") {
  const RunConfig cfg = load_config(testing::config_path("affine_chain.yaml"));
  const SheetProblem p = make_problem(cfg);
  const double vc = cfg.sweep.vc.value();
  auto field = [&](double va, double vb) {
    return testing::field_of(solve_bias_point(p, BiasPoint::driven(va, vb, vc), cfg.solver));
  };
  // The linear sheet makes the field affine in the biases.
  const Eigen::Vector3d e0 = field(0.0, 0.0);
  const Eigen::Vector3d ea = field(1.0, 0.0) - e0;
  const Eigen::Vector3d eb = field(0.0, 1.0) - e0;
  const Eigen::Vector3d e11 = field(1.0, 1.0);
  CHECK((e11 - (e0 + ea + eb)).norm() <= 1e-9 * e11.norm());

  const ExcitonParams& x = cfg.exciton;
  Eigen::Matrix2d a;
  a.col(0) = x.m * ea.head<2>() + x.gamma_z * ea(2);
  a.col(1) = x.m * eb.head<2>() + x.gamma_z * eb(2);
  const Eigen::Vector2d b = x.delta0 + x.m * e0.head<2>() + x.gamma_z * e0(2);
  const Eigen::Vector2d zero = -a.inverse() * b;

  const TuneResult r = find_zero_fss(cfg.tuner, p, x, cfg.solver);
  const Eigen::Vector2d got(r.bias.value(Terminal::A), r.bias.value(Terminal::B));
  CAPTURE(zero.transpose());
  CAPTURE(got.transpose());
  CHECK(r.converged);
  CHECK(r.fss < 0.1);
  CHECK((got - zero).norm() <= 0.01 * zero.norm());
  CHECK(r.axis.verdict == AxisVerdict::kCrossing);
}

TEST_CASE("constructed zero is found") {
  const RunConfig cfg = load_config(testing::config_path("constructed_zero.yaml"));
  const SheetProblem p = make_problem(cfg);
  const TuneResult r = find_zero_fss(cfg.tuner, p, cfg.exciton, cfg.solver);
  CHECK(r.converged);
  CHECK(r.fss < cfg.tuner.tol);
  CHECK(r.bias.value(Terminal::A) == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(r.bias.value(Terminal::B) == doctest::Approx(4.8).epsilon(1e-3));
  CHECK(r.bias.floating(Terminal::C));
}

TEST_CASE("no zero in the window: not converged, best candidate reported") {
  RunConfig cfg = testing::default_config();
  cfg.exciton.delta0 = {1000.0, 0.0};
  const TuneResult r = find_zero_fss(cfg.tuner, testing::default_problem(), cfg.exciton, cfg.solver);
  CHECK_FALSE(r.converged);
  CHECK(r.fss > cfg.tuner.tol);
  CHECK(r.restarts == cfg.tuner.restart_grid * cfg.tuner.restart_grid);
  CHECK(r.bias.value(Terminal::A) >= cfg.tuner.window_a.min);
  CHECK(r.bias.value(Terminal::A) <= cfg.tuner.window_a.max);
}

TEST_CASE("converged flag is equivalent to fss within tolerance") {
  const auto& cfg = testing::default_config();
  for (double tol : {1.5, 1e-3}) {
    TuneSpec spec = cfg.tuner;
    spec.tol = tol;
    spec.restart_grid = 2;
    spec.max_evaluations = 60;
    const TuneResult r = find_zero_fss(spec, testing::default_problem(), cfg.exciton, cfg.solver);
    CHECK(r.converged == (r.fss <= tol));
  }
}

TEST_CASE("algebraic fss changes sign across the tuned zero") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  const TuneResult r = find_zero_fss(cfg.tuner, p, cfg.exciton, cfg.solver);
  REQUIRE(r.converged);
  const double ref = reference_axis(p, cfg.exciton, cfg.solver, cfg.sweep.vc);
  auto alg = [&](double va, double vb) {
    BiasPoint b = r.bias;
    b.v[0] = va;
    b.v[1] = vb;
    const FieldSolution s = solve_bias_point(p, b, cfg.solver);
    return algebraic_fss(exciton_state(cfg.exciton, testing::field_of(s)), ref);
  };
  const double va = r.bias.value(Terminal::A), vb = r.bias.value(Terminal::B);
  // Grid lines through the zero, bracketed by the neighbouring sweep nodes.
  const AxisRange& ga = cfg.sweep.va;
  const AxisRange& gb = cfg.sweep.vb;
  const double a_lo = ga.min + std::floor((va - ga.min) / ga.step) * ga.step;
  const double b_lo = gb.min + std::floor((vb - gb.min) / gb.step) * gb.step;
  CHECK(alg(a_lo, vb) * alg(a_lo + ga.step, vb) < 0.0);
  CHECK(alg(va, b_lo) * alg(va, b_lo + gb.step) < 0.0);
  // And along the approach direction.
  const double s = 0.2;
  CHECK(alg(va - s * r.approach(0), vb - s * r.approach(1)) *
            alg(va + s * r.approach(0), vb + s * r.approach(1)) < 0.0);
}

TEST_CASE("eigenaxes rotate by a quarter turn across the zero") {
  const auto& cfg = testing::default_config();
  const TuneResult r = find_zero_fss(cfg.tuner, testing::default_problem(), cfg.exciton, cfg.solver);
  CHECK(r.axis.verdict == AxisVerdict::kCrossing);
  CHECK(std::abs(r.axis.rotation - 0.5 * kPi) <= 0.1);
}

TEST_CASE("sweep output does not depend on the number of jobs") {
  const auto& cfg = testing::default_config();
  const SheetProblem& p = testing::default_problem();
  const SweepSpec spec = small_sweep();
  const std::string one = sweep_csv(run_bias_sweep(spec, p, cfg.exciton, cfg.solver, 1));
  const std::string again = sweep_csv(run_bias_sweep(spec, p, cfg.exciton, cfg.solver, 1));
  const std::string two = sweep_csv(run_bias_sweep(spec, p, cfg.exciton, cfg.solver, 2));
  const std::string five = sweep_csv(run_bias_sweep(spec, p, cfg.exciton, cfg.solver, 5));
  CHECK(one == again);
  CHECK(one == two);
  CHECK(one == five);
}

TEST_CASE("sweep records follow the grid layout") {
  const auto& cfg = testing::default_config();
  const SweepSpec spec = small_sweep();
  const SweepResult r = run_bias_sweep(spec, testing::default_problem(), cfg.exciton, cfg.solver, 2);
  CHECK(r.na == 6);
  CHECK(r.nb == 6);
  REQUIRE(r.records.size() == 36);
  for (int ia = 0; ia < r.na; ++ia) {
    for (int ib = 0; ib < r.nb; ++ib) {
      const SweepRecord& rec = r.at(ia, ib);
      CHECK(rec.ia == ia);
      CHECK(rec.ib == ib);
      CHECK(rec.bias.value(Terminal::A) == doctest::Approx(spec.va.value(ia)));
      CHECK(rec.bias.value(Terminal::B) == doctest::Approx(spec.vb.value(ib)));
      CHECK(rec.ok);
    }
  }
}

TEST_CASE("iso-fss pairs match an exhaustive search") {
  const auto& cfg = testing::default_config();
  const SweepResult r =
      run_bias_sweep(small_sweep(), testing::default_problem(), cfg.exciton, cfg.solver, 1);
  const double target = 5.0, sep = 30.0;
  const auto pairs = iso_fss_points(r, target, sep);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    for (std::size_t j = i + 1; j < r.records.size(); ++j) {
      const auto& a = r.records[i].exciton;
      const auto& b = r.records[j].exciton;
      if (std::abs(a.fss - target) <= 0.1 * target && std::abs(b.fss - target) <= 0.1 * target &&
          1e6 * std::abs(a.mean_energy - b.mean_energy) >= sep) {
        ++expected;
      }
    }
  }
  CHECK(pairs.size() == expected);
  for (const auto& pr : pairs) {
    CHECK(pr.first < pr.second);
    CHECK(pr.energy_separation >= sep);
  }
}

TEST_CASE("invalid specs are rejected") {
  TuneSpec t;
  t.tol = -1.0;
  CHECK_THROWS_AS(t.validate(), TunerError);
  TuneSpec u;
  u.free_terminals = {Terminal::A};
  u.restart_grid = 0;
  CHECK_THROWS_AS(u.validate(), TunerError);
  SweepSpec s;
  s.va.step = 0.0;
  CHECK_THROWS(s.validate());
}

}
