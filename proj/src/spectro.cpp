#include "pillarfss/spectro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "pillarfss/error.hpp"

namespace pillarfss {

namespace {

double wrap_pi(double a) {
  a = std::fmod(a, kPi);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

double lorentzian(double x, double hwhm) { return hwhm / (kPi * (x * x + hwhm * hwhm)); }

double lorentzian_slope(double x, double hwhm) {
  const double d = x * x + hwhm * hwhm;
  return -2.0 * x * hwhm / (kPi * d * d);
}

}  // namespace

void PolarizationScan::validate() const {
  const std::size_t n = angles.size();
  if (peak_energies.size() != n) throw InputError("scan: angles and energies differ in length");
  if (!sigma.empty() && sigma.size() != n) throw InputError("scan: sigma length mismatch");
  if (n < 6) throw InputError("scan: at least 6 points required, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(angles[i]) || !std::isfinite(peak_energies[i])) {
      throw InputError("scan: non-finite value at point " + std::to_string(i));
    }
    if (!sigma.empty() && !(sigma[i] >= 0.0 && std::isfinite(sigma[i]))) {
      throw InputError("scan: invalid sigma at point " + std::to_string(i));
    }
  }
  // n samples with spacing pi/n cover a period; allow that instead of a
  // literal max - min >= pi.
  const auto [lo, hi] = std::minmax_element(angles.begin(), angles.end());
  const double covered = (*hi - *lo) * static_cast<double>(n) / static_cast<double>(n - 1);
  if (covered < kPi * (1.0 - 1e-9)) throw InputError("scan: angles do not cover a period of pi");
}

void SpectrumModel::validate() const {
  if (!(linewidth > 0.0) || !std::isfinite(linewidth)) throw InputError("spectrum: linewidth must be > 0");
  if (!std::isfinite(e_high) || !std::isfinite(e_low) || !std::isfinite(theta0)) {
    throw InputError("spectrum: non-finite line parameters");
  }
}

double SpectrumModel::weight_high(double theta) const {
  const double c = std::cos(theta - theta0);
  return c * c;
}

double SpectrumModel::weight_low(double theta) const {
  const double s = std::sin(theta - theta0);
  return s * s;
}

double SpectrumModel::intensity(double e, double theta) const {
  const double g = 0.5 * linewidth;
  return weight_high(theta) * lorentzian(e - e_high, g) + weight_low(theta) * lorentzian(e - e_low, g);
}

SpectrumModel spectrum_model(const ExcitonState& state, double linewidth, double reference_ev) {
  SpectrumModel m;
  const double mean = 1e6 * (state.mean_energy - reference_ev);
  m.e_high = mean + 0.5 * state.fss;
  m.e_low = mean - 0.5 * state.fss;
  m.linewidth = linewidth;
  m.theta0 = state.theta0;
  return m;
}

double peak_centroid(const SpectrumModel& model, double theta) {
  model.validate();
  const double wh = model.weight_high(theta);
  const double wl = model.weight_low(theta);
  if (wl == 0.0) return model.e_high;
  if (wh == 0.0) return model.e_low;
  const double lo = std::min(model.e_low, model.e_high);
  const double hi = std::max(model.e_low, model.e_high);
  if (hi == lo) return lo;

  // The maximum of two equal-width Lorentzians lies between the centres. A
  // grid isolates the global maximum, bisection on the slope polishes it.
  const double g = 0.5 * model.linewidth;
  auto slope = [&](double e) {
    return wh * lorentzian_slope(e - model.e_high, g) + wl * lorentzian_slope(e - model.e_low, g);
  };
  constexpr int kGrid = 400;
  const double dx = (hi - lo) / kGrid;
  int best = 0;
  double best_val = -1.0;
  for (int k = 0; k <= kGrid; ++k) {
    const double v = model.intensity(lo + k * dx, theta);
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = lo + std::max(best - 1, 0) * dx;
  double b = lo + std::min(best + 1, kGrid) * dx;
  if (best == 0 && slope(lo) <= 0.0) return lo;
  if (best == kGrid && slope(hi) >= 0.0) return hi;
  for (int it = 0; it < 200 && b - a > 4.0 * std::numeric_limits<double>::epsilon() * std::abs(b); ++it) {
    const double mid = 0.5 * (a + b);
    if (slope(mid) > 0.0) {
      a = mid;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

PolarizationScan synth_polarization_scan(const SpectrumModel& model, double noise_sigma,
                                         int n_angles, std::uint64_t seed) {
  if (n_angles < 6) throw InputError("synth: at least 6 angles required");
  if (!(noise_sigma >= 0.0)) throw InputError("synth: noise sigma must be >= 0");
  model.validate();
  PolarizationScan scan;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  for (int k = 0; k < n_angles; ++k) {
    const double theta = kPi * k / n_angles;
    double e = peak_centroid(model, theta);
    if (noise_sigma > 0.0) e += noise(rng);
    scan.angles.push_back(theta);
    scan.peak_energies.push_back(e);
    scan.sigma.push_back(noise_sigma);
  }
  return scan;
}

PolarizationScan synth_polarization_scan(const ExcitonParams& params, const Eigen::Vector3d& field,
                                         double linewidth, double noise_sigma, int n_angles,
                                         std::uint64_t seed) {
  const ExcitonState state = exciton_state(params, field);
  return synth_polarization_scan(spectrum_model(state, linewidth, params.e0_ev), noise_sigma,
                                 n_angles, seed);
}

double hwp_to_detection_angle(double theta_hwp) { return wrap_pi(2.0 * theta_hwp); }

double FitResult::model(double theta) const {
  return offset + 0.5 * delta_fss * (std::cos(2.0 * (theta - theta0)) + 1.0);
}

FitResult fit_fss_sine(const PolarizationScan& scan) {
  scan.validate();
  const int n = static_cast<int>(scan.angles.size());
  bool weighted = !scan.sigma.empty();
  for (double s : scan.sigma) weighted = weighted && s > 0.0;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);  // 1 / sigma
  if (weighted) {
    for (int i = 0; i < n; ++i) w(i) = 1.0 / scan.sigma[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd th = Eigen::Map<const Eigen::VectorXd>(scan.angles.data(), n);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(scan.peak_energies.data(), n);

  // Second harmonic: y = c + a cos 2t + b sin 2t, linear in (c, a, b).
  Eigen::MatrixXd basis(n, 3);
  basis.col(0).setOnes();
  basis.col(1) = (2.0 * th).array().cos().matrix();
  basis.col(2) = (2.0 * th).array().sin().matrix();
  const Eigen::Vector3d lin =
      (w.asDiagonal() * basis).colPivHouseholderQr().solve(w.asDiagonal() * y);
  FitResult fit;
  fit.delta_fss = 2.0 * std::hypot(lin(1), lin(2));
  fit.theta0 = 0.5 * std::atan2(lin(2), lin(1));
  fit.offset = lin(0) - 0.5 * fit.delta_fss;

  auto residual = [&](const FitResult& f) {
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = w(i) * (y(i) - f.model(th(i)));
    return r;
  };
  auto jacobian = [&](const FitResult& f) {
    Eigen::MatrixXd j(n, 3);
    for (int i = 0; i < n; ++i) {
      const double arg = 2.0 * (th(i) - f.theta0);
      j(i, 0) = w(i) * 0.5 * (std::cos(arg) + 1.0);
      j(i, 1) = w(i) * f.delta_fss * std::sin(arg);
      j(i, 2) = w(i);
    }
    return j;
  };

  // Gauss-Newton polish; the harmonic start is already the optimum for
  // exact data, so this mostly guards against round-off in the mapping.
  const double scale = std::max({1.0, y.cwiseAbs().maxCoeff(), fit.delta_fss});
  bool settled = false;
  for (int it = 0; it < 50; ++it) {
    fit.iterations = it;
    const Eigen::MatrixXd j = jacobian(fit);
    const Eigen::VectorXd r = residual(fit);
    Eigen::Matrix3d jtj = j.transpose() * j;
    if (std::abs(jtj(1, 1)) <= 1e-24 * jtj.trace()) {
      settled = true;  // no axis information; the linear solution stands
      break;
    }
    const Eigen::Vector3d step = jtj.ldlt().solve(j.transpose() * r);
    if (!step.allFinite()) throw FitError("fit: non-finite Gauss-Newton step");
    fit.delta_fss += step(0);
    fit.theta0 += step(1);
    fit.offset += step(2);
    if (std::abs(step(0)) <= 1e-12 * scale && std::abs(step(2)) <= 1e-12 * scale &&
        std::abs(step(1)) <= 1e-12) {
      settled = true;
      break;
    }
  }
  if (!settled) throw FitError("fit: Gauss-Newton did not settle within 50 iterations");

  if (fit.delta_fss < 0.0) {
    fit.offset += fit.delta_fss;
    fit.delta_fss = -fit.delta_fss;
    fit.theta0 += 0.5 * kPi;
  }
  fit.theta0 = wrap_pi(fit.theta0);

  const Eigen::VectorXd r = residual(fit);
  double plain = 0.0;
  for (int i = 0; i < n; ++i) plain += std::pow(r(i) / w(i), 2);
  fit.residual_rms = std::sqrt(plain / n);
  const double s2 = r.squaredNorm() / (n - 3);

  const Eigen::MatrixXd j = jacobian(fit);
  const Eigen::Matrix3d jtj = j.transpose() * j;
  const double inf = std::numeric_limits<double>::infinity();
  if (std::abs(jtj(1, 1)) <= 1e-24 * jtj.trace()) {
    // Axis unidentifiable: invert the (delta, offset) block only.
    Eigen::Matrix2d sub;
    sub << jtj(0, 0), jtj(0, 2), jtj(2, 0), jtj(2, 2);
    const Eigen::Matrix2d inv = sub.inverse() * s2;
    fit.covariance.setZero();
    fit.covariance(0, 0) = inv(0, 0);
    fit.covariance(0, 2) = fit.covariance(2, 0) = inv(0, 1);
    fit.covariance(2, 2) = inv(1, 1);
    fit.covariance(1, 1) = inf;
  } else {
    fit.covariance = jtj.inverse() * s2;
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  }
  for (int k = 0; k < 3; ++k) fit.uncertainty(k) = std::sqrt(std::max(0.0, fit.covariance(k, k)));
  if (!std::isfinite(fit.delta_fss) || !std::isfinite(fit.offset)) {
    throw FitError("fit: non-finite parameters");
  }
  return fit;
}

double algebraic_fss(const ExcitonState& state, double theta_ref) {
  return state.delta(0) * std::cos(2.0 * theta_ref) + state.delta(1) * std::sin(2.0 * theta_ref);
}

double algebraic_fss(const FitResult& fit, double theta_ref) {
  return fit.model(theta_ref) - fit.model(theta_ref + 0.5 * kPi);
}

}  // namespace pillarfss
