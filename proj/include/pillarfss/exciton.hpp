#pragma once

// Bright-exciton doublet under a local electric field.
//
// The exchange splitting is carried as a 2-vector delta = (dx, dy) in the
// linear-polarization basis, affine in the field:
//
//   delta = delta0 + M (E_x, E_y) + gamma_z E_z
//
// with H = 1/2 [[dx, dy], [dy, -dx]]. Energies of the doublet are
// mean +/- |delta| / 2. Energies in ueV unless the name says eV.

#include <cmath>

#include <Eigen/Dense>

#include "pillarfss/device.hpp"

namespace pillarfss {

template <typename Scalar>
struct BasicExcitonParams {
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
  using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;

  Scalar e0_ev = Scalar(1.33);            // zero-field mean energy
  Vector2 delta0 = Vector2::Zero();       // ueV
  Matrix2 m = Matrix2::Zero();            // ueV per V/m
  Vector2 gamma_z = Vector2::Zero();      // ueV per V/m
  Scalar p_z = Scalar(0);                 // ueV per V/m
  Scalar beta_z = Scalar(0);              // ueV per (V/m)^2
  Scalar axis_tolerance = Scalar(0.01);   // ueV, below this theta0 is undefined

  /// |det M| above 1e-12 (ueV per V/m)^2.
  bool m_invertible() const {
    using std::abs;
    return abs(m.determinant()) > Scalar(1e-12);
  }

  bool finite() const {
    using std::isfinite;
    return delta0.allFinite() && m.allFinite() && gamma_z.allFinite() && isfinite(e0_ev) &&
           isfinite(p_z) && isfinite(beta_z) && isfinite(axis_tolerance);
  }
};

using ExcitonParams = BasicExcitonParams<double>;

template <typename Scalar>
struct BasicExcitonState {
  Eigen::Matrix<Scalar, 2, 1> delta = Eigen::Matrix<Scalar, 2, 1>::Zero();  // ueV
  Scalar fss = Scalar(0);          // ueV
  Scalar theta0 = Scalar(0);       // rad in [0, pi), high-energy axis; 0 when degenerate
  bool degenerate = true;          // fss <= axis_tolerance
  Scalar mean_energy = Scalar(0);  // eV
  Scalar e_high = Scalar(0);       // eV
  Scalar e_low = Scalar(0);        // eV
};

using ExcitonState = BasicExcitonState<double>;

/// Field is (E_x, E_y, E_z) in V/m.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> fss_vector(const BasicExcitonParams<Scalar>& p,
                                       const Eigen::Matrix<Scalar, 3, 1>& field) {
  return p.delta0 + p.m * field.template head<2>() + p.gamma_z * field(2);
}

/// Mean-energy shift relative to e0, ueV.
template <typename Scalar>
Scalar stark_shift(const BasicExcitonParams<Scalar>& p, const Scalar& e_z) {
  return -p.p_z * e_z - p.beta_z * e_z * e_z;
}

/// Orientation of the high-energy axis of H for a splitting vector, in [0, pi).
template <typename Scalar>
Scalar eigenaxis_angle(const Eigen::Matrix<Scalar, 2, 1>& delta) {
  using std::atan2;
  Scalar theta = Scalar(0.5) * atan2(delta(1), delta(0));
  if (theta < Scalar(0)) theta += Scalar(kPi);
  if (theta >= Scalar(kPi)) theta -= Scalar(kPi);
  return theta;
}

template <typename Scalar>
BasicExcitonState<Scalar> exciton_state(const BasicExcitonParams<Scalar>& p,
                                        const Eigen::Matrix<Scalar, 3, 1>& field) {
  using std::hypot;
  BasicExcitonState<Scalar> s;
  s.delta = fss_vector(p, field);
  s.fss = hypot(s.delta(0), s.delta(1));
  s.degenerate = !(s.fss > p.axis_tolerance);
  s.theta0 = s.degenerate ? Scalar(0) : eigenaxis_angle(s.delta);
  s.mean_energy = p.e0_ev + Scalar(1e-6) * stark_shift(p, field(2));
  s.e_high = s.mean_energy + Scalar(0.5e-6) * s.fss;
  s.e_low = s.mean_energy - Scalar(0.5e-6) * s.fss;
  return s;
}

/// Folds |a - b| modulo pi into [0, pi/2].
inline double axis_separation(double a, double b) {
  double d = std::fmod(std::abs(a - b), kPi);
  return d > 0.5 * kPi ? kPi - d : d;
}

}  // namespace pillarfss
