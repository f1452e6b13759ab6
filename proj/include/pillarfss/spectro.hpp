#pragma once

// Polarization-resolved photoluminescence of an unresolved doublet, and the
// sinusoidal peak-shift fit that recovers the splitting and its axis.
//
// Angles are detection-polarizer angles in radians; energies in ueV.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "pillarfss/exciton.hpp"

namespace pillarfss {

struct PolarizationScan {
  std::vector<double> angles;         // rad
  std::vector<double> peak_energies;  // ueV, relative to a reference energy
  std::vector<double> sigma;          // ueV per point; empty or zeros = unweighted

  /// Throws InputError: mismatched lengths, fewer than 6 points, non-finite
  /// values, or angles not covering a full period of the pi-periodic law.
  void validate() const;
};

struct SpectrumModel {
  double e_high = 0.0;      // ueV
  double e_low = 0.0;       // ueV
  double linewidth = 1.0;   // ueV, Lorentzian FWHM of both lines
  double theta0 = 0.0;      // rad, polarization of the high-energy line

  void validate() const;
  double weight_high(double theta) const;  // cos^2(theta - theta0)
  double weight_low(double theta) const;   // sin^2(theta - theta0)
  /// Two-Lorentzian spectrum at energy e, unit total intensity.
  double intensity(double e, double theta) const;
};

/// Spectrum model of a state; energies relative to reference_ev, in ueV.
SpectrumModel spectrum_model(const ExcitonState& state, double linewidth, double reference_ev);

/// Energy of the maximum of the spectrum at detection angle theta.
double peak_centroid(const SpectrumModel& model, double theta);

/// n_angles uniform angles over [0, pi); energies relative to params.e0_ev.
PolarizationScan synth_polarization_scan(const ExcitonParams& params, const Eigen::Vector3d& field,
                                         double linewidth, double noise_sigma, int n_angles,
                                         std::uint64_t seed);
PolarizationScan synth_polarization_scan(const SpectrumModel& model, double noise_sigma,
                                         int n_angles, std::uint64_t seed);

/// A half-wave plate at theta_hwp in front of a fixed polarizer selects the
/// detection angle 2 theta_hwp, mod pi.
double hwp_to_detection_angle(double theta_hwp);

struct FitResult {
  double delta_fss = 0.0;  // ueV, >= 0
  double theta0 = 0.0;     // rad in [0, pi)
  double offset = 0.0;     // ueV, energy of the low line
  double residual_rms = 0.0;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // (delta, theta0, offset)
  Eigen::Vector3d uncertainty = Eigen::Vector3d::Zero();  // 1 sigma
  int iterations = 0;

  /// offset + delta (cos 2(theta - theta0) + 1) / 2
  double model(double theta) const;
};

/// Least squares fit of offset + delta (cos 2(theta - theta0) + 1) / 2.
/// Throws InputError on an invalid scan and FitError when the iteration
/// does not settle.
FitResult fit_fss_sine(const PolarizationScan& scan);

/// Peak energy along theta_ref minus that along theta_ref + pi/2 in the
/// small-splitting limit: fss cos 2(theta0 - theta_ref), the projection of
/// the splitting vector on the reference axis pair.
double algebraic_fss(const ExcitonState& state, double theta_ref);
/// Same quantity read off a fitted scan.
double algebraic_fss(const FitResult& fit, double theta_ref);

}  // namespace pillarfss
