#include "pillarfss/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "pillarfss/error.hpp"
#include "pillarfss/spectro.hpp"

namespace pillarfss {

int AxisRange::count() const {
  return static_cast<int>(std::floor((max - min) / step + 1e-9)) + 1;
}

namespace {

void validate_range(const AxisRange& r, const char* name) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || !std::isfinite(r.step)) {
    throw ConfigError(std::string("sweep: non-finite ") + name + " range");
  }
  if (!(r.step > 0.0)) throw ConfigError(std::string("sweep: ") + name + " step must be > 0");
  if (r.max < r.min) throw ConfigError(std::string("sweep: ") + name + " range is empty");
}

constexpr std::array<std::pair<SweepOutput, const char*>, 7> kOutputNames{{
    {SweepOutput::kFields, "fields"},
    {SweepOutput::kCurrents, "currents"},
    {SweepOutput::kRegime, "regime"},
    {SweepOutput::kFss, "fss"},
    {SweepOutput::kTheta0, "theta0"},
    {SweepOutput::kAlgebraicFss, "algebraic_fss"},
    {SweepOutput::kStark, "stark"},
}};

Eigen::Vector3d field_of(const FieldSolution& s) {
  return {s.e_inplane.x(), s.e_inplane.y(), s.e_z};
}

}  // namespace

const char* sweep_output_name(SweepOutput o) {
  for (const auto& [k, name] : kOutputNames) {
    if (k == o) return name;
  }
  return "?";
}

SweepOutput sweep_output_from_name(const std::string& name) {
  for (const auto& [k, n] : kOutputNames) {
    if (name == n) return k;
  }
  throw ConfigError("sweep: unknown output '" + name + "'");
}

BiasPoint SweepSpec::bias(int ia, int ib) const {
  BiasPoint b = BiasPoint::c_floating(va.value(ia), vb.value(ib));
  if (vc) b.v[2] = *vc;
  return b;
}

void SweepSpec::validate() const {
  validate_range(va, "va");
  validate_range(vb, "vb");
  if (vc && !std::isfinite(*vc)) throw ConfigError("sweep: non-finite vc");
}

int SweepResult::failed_count() const {
  return static_cast<int>(
      std::count_if(records.begin(), records.end(), [](const SweepRecord& r) { return !r.ok; }));
}

double reference_axis(const SheetProblem& problem, const ExcitonParams& exciton,
                      const SolverConfig& cfg, std::optional<double> vc) {
  BiasPoint zero = BiasPoint::c_floating(0.0, 0.0);
  if (vc) zero.v[2] = 0.0;
  const FieldSolution s = solve_bias_point(problem, zero, cfg);
  const ExcitonState st = exciton_state(exciton, field_of(s));
  if (!st.degenerate) return st.theta0;
  if (exciton.delta0.norm() > exciton.axis_tolerance) return eigenaxis_angle(exciton.delta0);
  return 0.0;
}

SweepResult run_bias_sweep(const SweepSpec& spec, const SheetProblem& problem,
                           const ExcitonParams& exciton, const SolverConfig& cfg, int jobs) {
  spec.validate();
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SweepResult out;
  out.spec = spec;
  out.na = spec.va.count();
  out.nb = spec.vb.count();
  out.mesh_nodes = problem.mesh().node_count();
  out.mesh_cells = problem.mesh().cell_count();
  out.mesh_max_edge = problem.mesh().max_edge_length();
  out.theta_ref = reference_axis(problem, exciton, cfg, spec.vc);
  out.records.resize(static_cast<std::size_t>(out.na) * static_cast<std::size_t>(out.nb));

  auto run_row = [&](int ia) {
    std::optional<WarmStart> warm;
    for (int k = 0; k < out.nb; ++k) {
      const int ib = ia % 2 == 0 ? k : out.nb - 1 - k;
      SweepRecord& r = out.records[static_cast<std::size_t>(ia * out.nb + ib)];
      r.ia = ia;
      r.ib = ib;
      r.bias = spec.bias(ia, ib);
      try {
        const FieldSolution s = solve_bias_point(problem, r.bias, cfg, warm);
        warm = WarmStart{s.bias, s.unknowns};
        r.ok = true;
        r.status = "ok";
        r.e_inplane = s.e_inplane;
        r.e_z = s.e_z;
        r.current = s.terminal_current;
        r.junction_current = s.junction_current;
        r.region = classify_regime(s, cfg.regime_threshold);
        r.iters = s.newton_iters;
        r.residual = s.residual;
        r.exciton = exciton_state(exciton, field_of(s));
        r.algebraic_fss = algebraic_fss(r.exciton, out.theta_ref);
        r.stark_shift = stark_shift(exciton, s.e_z);
      } catch (const Error& e) {
        r.ok = false;
        r.status = std::string(e.what());
        warm.reset();
      }
    }
  };

  const int workers = std::clamp(jobs, 1, std::max(1, out.na));
  if (workers == 1) {
    for (int ia = 0; ia < out.na; ++ia) run_row(ia);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int ia = next++; ia < out.na; ia = next++) run_row(ia);
      });
    }
    for (auto& t : pool) t.join();
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void TuneSpec::validate() const {
  start.validate();
  if (free_terminals.empty()) throw TunerError("tune: no free terminals");
  for (std::size_t i = 0; i < free_terminals.size(); ++i) {
    for (std::size_t j = i + 1; j < free_terminals.size(); ++j) {
      if (free_terminals[i] == free_terminals[j]) throw TunerError("tune: repeated free terminal");
    }
    if (start.floating(free_terminals[i])) {
      throw TunerError(std::string("tune: free terminal ") + terminal_name(free_terminals[i]) +
                       " is floating in the start point");
    }
  }
  if (!(tol > 0.0)) throw TunerError("tune: tol must be > 0");
  if (restart_grid < 1) throw TunerError("tune: restart grid must be >= 1");
  if (max_evaluations < 1) throw TunerError("tune: max_evaluations must be >= 1");
  if (!(probe_step > 0.0)) throw TunerError("tune: probe step must be > 0");
  if (window_a.max < window_a.min || window_b.max < window_b.min) {
    throw TunerError("tune: empty bias window");
  }
}

const char* axis_verdict_name(AxisVerdict v) {
  switch (v) {
    case AxisVerdict::kCrossing:
      return "crossing";
    case AxisVerdict::kNoCrossing:
      return "no_crossing";
    case AxisVerdict::kIndeterminate:
      return "indeterminate";
  }
  return "?";
}

AxisCheck eigenaxis_rotation_check(const BiasPoint& start, const BiasPoint& end,
                                   const SheetProblem& problem, const ExcitonParams& exciton,
                                   const SolverConfig& cfg) {
  const ExcitonState a = exciton_state(exciton, field_of(solve_bias_point(problem, start, cfg)));
  const ExcitonState b = exciton_state(exciton, field_of(solve_bias_point(problem, end, cfg)));
  AxisCheck c;
  c.theta_start = a.theta0;
  c.theta_end = b.theta0;
  c.fss_start = a.fss;
  c.fss_end = b.fss;
  if (a.degenerate || b.degenerate) return c;
  c.rotation = axis_separation(a.theta0, b.theta0);
  c.verdict = c.rotation >= 0.5 * kPi - 0.1 ? AxisVerdict::kCrossing : AxisVerdict::kNoCrossing;
  return c;
}

namespace {

// fss as a function of the free biases, with the window enforced by
// clamping plus a linear penalty on the distance outside it.
class FssObjective {
 public:
  FssObjective(const TuneSpec& spec, const SheetProblem& problem, const ExcitonParams& exciton,
               const SolverConfig& cfg)
      : spec_(spec), problem_(problem), exciton_(exciton), cfg_(cfg) {}

  int dims() const { return static_cast<int>(spec_.free_terminals.size()); }

  const AxisRange& window(int k) const {
    return spec_.free_terminals[static_cast<std::size_t>(k)] == Terminal::B ? spec_.window_b
                                                                           : spec_.window_a;
  }

  BiasPoint bias(const Eigen::VectorXd& x, double* outside = nullptr) const {
    BiasPoint b = spec_.start;
    double d = 0.0;
    for (int k = 0; k < dims(); ++k) {
      const AxisRange& w = window(k);
      const double v = std::clamp(x(k), w.min, w.max);
      d += std::abs(x(k) - v);
      b.v[static_cast<std::size_t>(spec_.free_terminals[static_cast<std::size_t>(k)])] = v;
    }
    if (outside) *outside = d;
    return b;
  }

  double operator()(const Eigen::VectorXd& x) {
    double outside = 0.0;
    const BiasPoint b = bias(x, &outside);
    ++evaluations;
    try {
      const FieldSolution s = solve_bias_point(problem_, b, cfg_, warm_);
      warm_ = WarmStart{s.bias, s.unknowns};
      return exciton_state(exciton_, field_of(s)).fss + kPenalty * outside;
    } catch (const Error&) {
      warm_.reset();
      return kFailure;
    }
  }

  ExcitonState state(const Eigen::VectorXd& x) {
    const FieldSolution s = solve_bias_point(problem_, bias(x), cfg_, warm_);
    return exciton_state(exciton_, field_of(s));
  }

  int evaluations = 0;
  static constexpr double kPenalty = 1e3;   // ueV per V outside the window
  static constexpr double kFailure = 1e12;  // ueV, for failed solves

 private:
  const TuneSpec& spec_;
  const SheetProblem& problem_;
  const ExcitonParams& exciton_;
  const SolverConfig& cfg_;
  std::optional<WarmStart> warm_;
};

struct SimplexRun {
  Eigen::VectorXd best;
  double value = 0.0;
  int iterations = 0;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
// shrink 1/2).
SimplexRun nelder_mead(FssObjective& f, const Eigen::VectorXd& x0, double size, int max_evals) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> val(static_cast<std::size_t>(n + 1));
  for (int k = 0; k < n; ++k) pts[static_cast<std::size_t>(k + 1)](k) += size;
  const int budget_end = f.evaluations + max_evals;
  for (std::size_t i = 0; i < pts.size(); ++i) val[i] = f(pts[i]);

  std::vector<int> order(static_cast<std::size_t>(n + 1));
  SimplexRun run;
  while (f.evaluations < budget_end) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return val[static_cast<std::size_t>(a)] < val[static_cast<std::size_t>(b)];
    });
    const auto& lo = pts[static_cast<std::size_t>(order.front())];
    const double f_lo = val[static_cast<std::size_t>(order.front())];
    const double f_hi = val[static_cast<std::size_t>(order.back())];
    double diameter = 0.0;
    for (const auto& p : pts) diameter = std::max(diameter, (p - lo).lpNorm<Eigen::Infinity>());
    if (diameter < 1e-9 || f_hi - f_lo < 1e-9 * std::max(1e-3, f_lo)) break;
    ++run.iterations;

    const int worst = order.back();
    const int second = order[static_cast<std::size_t>(n - 1)];
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i) {
      if (i != worst) centroid += pts[static_cast<std::size_t>(i)];
    }
    centroid /= n;
    auto& xw = pts[static_cast<std::size_t>(worst)];
    double& fw = val[static_cast<std::size_t>(worst)];
    const Eigen::VectorXd xr = centroid + (centroid - xw);
    const double fr = f(xr);
    if (fr < f_lo) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xw);
      const double fe = f(xe);
      if (fe < fr) {
        xw = xe;
        fw = fe;
      } else {
        xw = xr;
        fw = fr;
      }
      continue;
    }
    if (fr < val[static_cast<std::size_t>(second)]) {
      xw = xr;
      fw = fr;
      continue;
    }
    const bool outside = fr < fw;
    const Eigen::VectorXd xc =
        outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (xw - centroid));
    const double fc = f(xc);
    if (fc < (outside ? fr : fw)) {
      xw = xc;
      fw = fc;
      continue;
    }
    const Eigen::VectorXd keep = lo;
    for (int i = 0; i <= n; ++i) {
      if (i == order.front()) continue;
      auto& p = pts[static_cast<std::size_t>(i)];
      p = keep + 0.5 * (p - keep);
      val[static_cast<std::size_t>(i)] = f(p);
    }
  }
  const auto it = std::min_element(val.begin(), val.end());
  run.best = pts[static_cast<std::size_t>(it - val.begin())];
  run.value = *it;
  return run;
}

}  // namespace

TuneResult find_zero_fss(const TuneSpec& spec, const SheetProblem& problem,
                         const ExcitonParams& exciton, const SolverConfig& cfg) {
  spec.validate();
  cfg.validate();
  FssObjective f(spec, problem, exciton, cfg);
  const int d = f.dims();

  // Coarse grid of starts, ranked by fss.
  const int g = spec.restart_grid;
  int total = 1;
  for (int k = 0; k < d; ++k) total *= g;
  std::vector<std::pair<double, Eigen::VectorXd>> starts;
  starts.reserve(static_cast<std::size_t>(total));
  double cell = 0.0;
  for (int idx = 0; idx < total; ++idx) {
    Eigen::VectorXd x(d);
    int rem = idx;
    for (int k = 0; k < d; ++k) {
      const AxisRange& w = f.window(k);
      const int i = rem % g;
      rem /= g;
      x(k) = g == 1 ? 0.5 * (w.min + w.max) : w.min + (w.max - w.min) * i / (g - 1);
      cell = std::max(cell, (w.max - w.min) / std::max(1, g - 1));
    }
    starts.emplace_back(f(x), x);
  }
  std::stable_sort(starts.begin(), starts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  if (cell <= 0.0) cell = 0.5;

  TuneResult res;
  res.tol = spec.tol;
  Eigen::VectorXd best = starts.front().second;
  double best_val = starts.front().first;
  Eigen::VectorXd best_from = best;
  for (const auto& [v0, x0] : starts) {
    ++res.restarts;
    const SimplexRun run = nelder_mead(f, x0, 0.5 * cell, spec.max_evaluations);
    res.iterations += run.iterations;
    if (res.restarts == 1 || run.value < best_val) {
      best_val = run.value;
      best = run.best;
      best_from = x0;
    }
    if (best_val <= spec.tol) break;
  }

  res.bias = f.bias(best);
  const ExcitonState st = f.state(best);
  res.fss = st.fss;
  res.theta0 = st.theta0;
  res.mean_energy = st.mean_energy;
  res.converged = res.fss <= spec.tol;

  Eigen::VectorXd dir = best - best_from;
  if (dir.norm() < 1e-12) {
    dir = Eigen::VectorXd::Zero(d);
    dir(0) = 1.0;
  }
  res.approach = dir.normalized();
  const Eigen::VectorXd lo = best - spec.probe_step * res.approach;
  const Eigen::VectorXd hi = best + spec.probe_step * res.approach;
  res.axis = eigenaxis_rotation_check(f.bias(lo), f.bias(hi), problem, exciton, cfg);
  res.evaluations = f.evaluations + 3;
  return res;
}

std::vector<IsoFssPair> iso_fss_points(const SweepResult& sweep, double target_fss,
                                       double min_energy_separation) {
  std::vector<int> hits;
  for (std::size_t i = 0; i < sweep.records.size(); ++i) {
    const SweepRecord& r = sweep.records[i];
    if (r.ok && std::abs(r.exciton.fss - target_fss) <= 0.1 * target_fss) {
      hits.push_back(static_cast<int>(i));
    }
  }
  std::vector<IsoFssPair> out;
  for (std::size_t a = 0; a < hits.size(); ++a) {
    for (std::size_t b = a + 1; b < hits.size(); ++b) {
      const SweepRecord& ra = sweep.records[static_cast<std::size_t>(hits[a])];
      const SweepRecord& rb = sweep.records[static_cast<std::size_t>(hits[b])];
      const double sep = 1e6 * std::abs(ra.exciton.mean_energy - rb.exciton.mean_energy);
      if (sep >= min_energy_separation) {
        out.push_back({hits[a], hits[b], ra.exciton.fss, rb.exciton.fss, sep});
      }
    }
  }
  return out;
}

}  // namespace pillarfss
