// Acceptance checks against the shipped calibration. One PASS/FAIL line per
// criterion; the exit status is nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pillarfss/config.hpp"
#include "pillarfss/io.hpp"
#include "pillarfss/spectro.hpp"
#include "pillarfss/tuner.hpp"

using namespace pillarfss;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %2d  %-28s %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

std::string config_path(const char* name) { return std::string(PILLARFSS_CONFIG_DIR) + "/" + name; }

Eigen::Vector3d field_of(const FieldSolution& s) { return {s.e_inplane.x(), s.e_inplane.y(), s.e_z}; }

// Smallest arc of the circle containing every direction.
double angular_coverage(std::vector<double> angles) {
  if (angles.size() < 2) return 0.0;
  for (double& a : angles) a = std::fmod(std::fmod(a, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi);
  std::sort(angles.begin(), angles.end());
  double gap = angles.front() + 2.0 * kPi - angles.back();
  for (std::size_t i = 1; i < angles.size(); ++i) gap = std::max(gap, angles[i] - angles[i - 1]);
  return 2.0 * kPi - gap;
}

PolarizationScan sine_scan(double delta, double theta0, int n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PolarizationScan s;
  for (int k = 0; k < n; ++k) {
    const double t = kPi * k / n;
    s.angles.push_back(t);
    s.peak_energies.push_back(0.5 * delta * (std::cos(2.0 * (t - theta0)) + 1.0) +
                              (noise > 0.0 ? noise * gauss(rng) : 0.0));
    s.sigma.push_back(noise);
  }
  return s;
}

}  // namespace

int main() {
  const RunConfig cfg = load_config(config_path("default.yaml"));
  const SheetProblem problem = make_problem(cfg);
  const int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  // 1. Regime map.
  const auto t0 = std::chrono::steady_clock::now();
  const SweepResult sweep = run_bias_sweep(cfg.sweep, problem, cfg.exciton, cfg.solver, jobs);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::array<int, 5> count{};
    bool reverse_ok = true, passing_ok = true;
    for (const SweepRecord& r : sweep.records) {
      if (!r.ok) continue;
      ++count[static_cast<std::size_t>(r.region)];
      const double va = r.bias.value(Terminal::A), vb = r.bias.value(Terminal::B);
      if (va <= 0.0 && vb <= 0.0 && r.region != 1) reverse_ok = false;
      if (r.region == 2 && !(r.current[0] >= cfg.solver.regime_threshold &&
                             r.current[1] >= cfg.solver.regime_threshold)) {
        passing_ok = false;
      }
    }
    const bool all = count[1] > 0 && count[2] > 0 && count[3] > 0 && count[4] > 0;
    const bool pass = all && reverse_ok && passing_ok && sweep.failed_count() == 0 &&
                      sweep.na == 41 && sweep.nb == 41 && seconds <= 300.0;
    report(1, "regime map", pass,
           fmt("41x41, regions 1/2/3/4 = %.0f/%.0f/%.0f/%.0f", count[1], count[2], count[3], count[4]) +
               fmt(", failed %.0f, %.1f s", sweep.failed_count(), seconds) +
               ", reverse quadrant all region 1: " + yes_no(reverse_ok) +
               ", region-2 pads above threshold: " + yes_no(passing_ok));
  }

  // 2. Region-1 field normal to ridge C, mutually reverse-biased points with
  //    V_A != V_B (equal biases give no in-plane field by mirror symmetry).
  {
    const double c = cfg.device.ridge_angles[2];
    const Eigen::Vector2d axis(std::cos(c), std::sin(c));
    int n = 0;
    double worst = 0.0;
    for (const SweepRecord& r : sweep.records) {
      const double va = r.bias.value(Terminal::A), vb = r.bias.value(Terminal::B);
      if (!r.ok || r.region != 1 || va > 0.0 || vb > 0.0 || std::abs(va - vb) < 1e-9) continue;
      const double m = r.e_inplane.norm();
      if (m == 0.0) continue;
      const double off = std::asin(std::min(1.0, std::abs(r.e_inplane.dot(axis)) / m));
      worst = std::max(worst, rad_to_deg(off));
      ++n;
    }
    report(2, "region-1 field direction", n >= 20 && worst <= 5.0,
           fmt("%.0f points, worst deviation from the ridge-C normal %.3f deg", n, worst));
  }

  // 3. Region-2 angular coverage.
  {
    std::vector<double> angles;
    for (const SweepRecord& r : sweep.records) {
      if (r.ok && r.region == 2) angles.push_back(std::atan2(r.e_inplane.y(), r.e_inplane.x()));
    }
    const double cover = angular_coverage(angles);
    report(3, "region-2 angular coverage", cover >= 0.8 * kPi,
           fmt("%.0f points span %.3f pi (target >= 0.8 pi)", angles.size(), cover / kPi));
  }

  // 4. Field-magnitude ratio.
  {
    double r1 = 0.0, pass_max = 0.0;
    for (const SweepRecord& r : sweep.records) {
      if (!r.ok) continue;
      const double m = r.e_inplane.norm();
      if (r.region == 1) r1 = std::max(r1, m);
      else pass_max = std::max(pass_max, m);
    }
    const double ratio = pass_max / r1;
    report(4, "field magnitude ratio", ratio >= 2.0 && ratio <= 8.0,
           fmt("max passing %.1f V/m / max region-1 %.1f V/m = %.2f", pass_max, r1, ratio));
  }

  // 5. Conservation and the Laplace strip.
  {
    double worst = 0.0;
    for (const SweepRecord& r : sweep.records) {
      if (!r.ok) continue;
      const double sum = r.current[0] + r.current[1] + r.current[2];
      const double scale = std::max({cfg.solver.current_floor, std::abs(r.current[0]), std::abs(r.current[1]),
                                     std::abs(r.current[2]), std::abs(r.junction_current)});
      worst = std::max(worst, std::abs(sum - r.junction_current) / scale);
    }
    MaterialParams m;
    m.sheet_conductance = 1e-3;
    m.saturation_current_density = 0.0;
    m.series_resistance = {1e-3, 1e-3, 1e-3};
    const SheetProblem strip(rectangle_mesh(50.0, 10.0, 1.0), m);
    const FieldSolution s = solve_bias_point(strip, BiasPoint{{1.0, 0.0, std::nullopt}}, cfg.solver);
    const double expected = 1.0 / 50e-6;
    const double strip_err = std::abs(s.e_inplane.x() - expected) / expected;
    report(5, "conservation", worst <= 1e-8 && strip_err <= 0.01,
           fmt("worst Kirchhoff defect %.2e over %.0f solves, strip field error %.2e", worst,
               sweep.records.size(), strip_err));
  }

  // 6. Exciton closed form versus eigensolver.
  {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_fss = 0.0, worst_axis = 0.0;
    for (int k = 0; k < 1000; ++k) {
      ExcitonParams p = cfg.exciton;
      p.delta0 = {20.0 * u(rng), 20.0 * u(rng)};
      p.m << u(rng), u(rng), u(rng), u(rng);
      p.gamma_z = {1e-6 * u(rng), 1e-6 * u(rng)};
      const Eigen::Vector3d f(200.0 * u(rng), 200.0 * u(rng), 1e7 * (1.0 + u(rng)));
      const ExcitonState s = exciton_state(p, f);
      const Eigen::Vector2d d = p.delta0 + p.m * f.head<2>() + p.gamma_z * f(2);
      Eigen::Matrix2d h;
      h << d(0), d(1), d(1), -d(0);
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * h);
      const double split = es.eigenvalues()(1) - es.eigenvalues()(0);
      worst_fss = std::max(worst_fss, std::abs(split - s.fss) / std::max(1.0, split));
      if (!s.degenerate) {
        const Eigen::Vector2d v = es.eigenvectors().col(1);
        worst_axis = std::max(worst_axis, axis_separation(s.theta0, std::atan2(v(1), v(0))) /
                                              std::max(1.0, 1.0 / split));
      }
    }
    report(6, "exciton oracle equivalence", worst_fss <= 1e-10 && worst_axis <= 1e-10,
           fmt("1000 draws, worst fss %.1e, worst axis %.1e rad", worst_fss, worst_axis));
  }

  // 7. Fit recovery and uncertainty calibration.
  {
    double worst = 0.0;
    for (double delta : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0}) {
      for (int j = 0; j < 6; ++j) {
        const double theta0 = kPi * j / 6.0 + 0.05;
        const FitResult f = fit_fss_sine(sine_scan(delta, theta0, 36, 0.0, 1));
        worst = std::max({worst, std::abs(f.delta_fss - delta) / delta, axis_separation(f.theta0, theta0)});
      }
    }
    constexpr int kTrials = 500;
    std::vector<double> est, sig;
    for (int t = 0; t < kTrials; ++t) {
      const FitResult f = fit_fss_sine(sine_scan(10.0, 0.7, cfg.spectro.angles, cfg.spectro.noise, cfg.seed + t));
      est.push_back(f.delta_fss);
      sig.push_back(f.uncertainty(0));
    }
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / kTrials;
    double var = 0.0;
    for (double e : est) var += (e - mean) * (e - mean);
    const double spread = std::sqrt(var / (kTrials - 1));
    const double reported = std::accumulate(sig.begin(), sig.end(), 0.0) / kTrials;
    const double mismatch = std::abs(reported - spread) / spread;
    report(7, "fit recovery", worst <= 1e-6 && mismatch <= 0.2,
           fmt("noiseless worst relative error %.1e; MC std %.4f vs reported %.4f ueV (%.1f%%)", worst, spread,
               reported, 100.0 * mismatch));
  }

  // 8. Cancellation.
  TuneResult tuned;
  {
    const RunConfig ac = load_config(config_path("affine_chain.yaml"));
    const SheetProblem ap = make_problem(ac);
    const double vc = ac.sweep.vc.value_or(0.0);
    auto field = [&](double va, double vb) {
      return field_of(solve_bias_point(ap, BiasPoint::driven(va, vb, vc), ac.solver));
    };
    const Eigen::Vector3d e0 = field(0.0, 0.0), ea = field(1.0, 0.0) - e0, eb = field(0.0, 1.0) - e0;
    const ExcitonParams& x = ac.exciton;
    Eigen::Matrix2d a;
    a.col(0) = x.m * ea.head<2>() + x.gamma_z * ea(2);
    a.col(1) = x.m * eb.head<2>() + x.gamma_z * eb(2);
    const Eigen::Vector2d zero = -a.inverse() * (x.delta0 + x.m * e0.head<2>() + x.gamma_z * e0(2));
    const TuneResult at = find_zero_fss(ac.tuner, ap, x, ac.solver);
    const Eigen::Vector2d got(at.bias.value(Terminal::A), at.bias.value(Terminal::B));
    const double miss = (got - zero).norm() / zero.norm();

    tuned = find_zero_fss(cfg.tuner, problem, cfg.exciton, cfg.solver);
    const double rot_err = std::abs(tuned.axis.rotation - 0.5 * kPi);
    const bool pass = at.fss < 0.1 && miss <= 0.01 && tuned.fss <= 1.5 && rot_err <= 0.1;
    report(8, "cancellation", pass,
           fmt("affine fss %.1e ueV (offset %.1e of |V*|); default fss %.2e ueV", at.fss, miss, tuned.fss) +
               fmt(" at (%.3f, %.3f) V, axis rotation %.4f rad", tuned.bias.value(Terminal::A),
                   tuned.bias.value(Terminal::B), tuned.axis.rotation));
  }

  // 9. Algebraic fss sign change along a line through the zero.
  {
    const double ref = sweep.theta_ref;
    auto alg = [&](double s) {
      BiasPoint b = tuned.bias;
      b.v[0] = tuned.bias.value(Terminal::A) + s * tuned.approach(0);
      b.v[1] = tuned.bias.value(Terminal::B) + s * tuned.approach(1);
      const FieldSolution sol = solve_bias_point(problem, b, cfg.solver);
      return algebraic_fss(exciton_state(cfg.exciton, field_of(sol)), ref);
    };
    const double before = alg(-0.2), after = alg(0.2);
    report(9, "algebraic fss sign change", tuned.converged && before * after < 0.0,
           fmt("%+.3f ueV -> %+.3f ueV across the zero (reference axis %.4f rad)", before, after, ref));
  }

  // 10. Stark band and fss tuning span.
  {
    double emin = INFINITY, emax = -INFINITY, fmin = INFINITY, fmax = -INFINITY;
    for (const SweepRecord& r : sweep.records) {
      if (!r.ok) continue;
      emin = std::min(emin, r.exciton.mean_energy);
      emax = std::max(emax, r.exciton.mean_energy);
      fmin = std::min(fmin, r.exciton.fss);
      fmax = std::max(fmax, r.exciton.fss);
    }
    const double stark = 1e6 * (emax - emin), span = fmax - fmin;
    report(10, "Stark band and fss span", stark >= 40.0 && stark <= 160.0 && span >= 10.0 && span <= 30.0,
           fmt("mean-energy excursion %.1f ueV, fss span %.1f ueV", stark, span));
  }

  // 11. Reproducibility across runs and concurrency.
  {
    const std::string first = sweep_csv(sweep);
    const std::string again = sweep_csv(run_bias_sweep(cfg.sweep, problem, cfg.exciton, cfg.solver, 1));
    const std::string threaded = sweep_csv(run_bias_sweep(cfg.sweep, problem, cfg.exciton, cfg.solver, 4));
    const bool same = first == again && first == threaded;
    report(11, "reproducibility", same,
           fmt("jobs %.0f, 1 and 4 give identical CSVs (%.0f bytes): ", jobs, first.size()) + yes_no(same));
  }

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
