#pragma once

// Notch-type resonator transmission model and the closed-form quantities
// derived from it. Everything here is a pure function; the templated forms
// are used with long double by the finite-difference checks.

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>

namespace resfit {

inline constexpr double kPlanck = 6.62607015e-34;  // J s, exact SI

template <typename Scalar>
struct BasicResonatorParams {
  Scalar f_r;      // Hz
  Scalar q_i;
  Scalar q_c_mag;  // |Q_c|
  Scalar phi;      // impedance-mismatch phase, rad

  // 1/Q_l = 1/Q_i + cos(phi)/|Q_c|
  Scalar q_l() const {
    using std::cos;
    return Scalar(1) / (Scalar(1) / q_i + cos(phi) / q_c_mag);
  }
  Scalar linewidth() const { return f_r / q_l(); }
  // Circle diameter Q_l/|Q_c| for a calibrated background.
  Scalar diameter() const { return q_l() / q_c_mag; }

  template <typename Other>
  BasicResonatorParams<Other> cast() const {
    return {Other(f_r), Other(q_i), Other(q_c_mag), Other(phi)};
  }
};

using ResonatorParams = BasicResonatorParams<double>;

template <typename Scalar>
struct BasicBackground {
  Scalar a = 1;
  Scalar alpha = 0;  // rad
  Scalar tau = 0;    // s, may be negative

  static BasicBackground identity() { return {}; }

  // a exp(i(alpha - 2 pi f tau))
  std::complex<Scalar> factor(Scalar f) const {
    const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    return std::polar(a, alpha - two_pi * f * tau);
  }
};

using Background = BasicBackground<double>;

struct ComplexSample {
  double f;  // Hz
  std::complex<double> s21;
};

// Throws InvalidParameter unless f_r, q_i, |Q_c| > 0 and phi in (-pi/2, pi/2).
void validate(const ResonatorParams& params);
void validate(const Background& bg);

// Normalized detuning x = 2 Q_l (f/f_r - 1). The difference is formed first
// so that f close to f_r keeps its significant digits.
template <typename Scalar>
Scalar detuning(Scalar f, Scalar q_l, Scalar f_r) {
  return Scalar(2) * q_l * (f - f_r) / f_r;
}

// Calibrated notch response in the (Q_l, |Q_c|, f_r, phi) parametrization
// used by the fit: 1 - (Q_l/|Q_c|) e^{i phi} / (1 + 2i Q_l (f/f_r - 1)).
template <typename Scalar>
std::complex<Scalar> s21_notch(Scalar f, Scalar q_l, Scalar q_c_mag, Scalar f_r,
                               Scalar phi) {
  const std::complex<Scalar> denom(Scalar(1), detuning(f, q_l, f_r));
  return Scalar(1) - std::polar(q_l / q_c_mag, phi) / denom;
}

// Partial derivatives of s21_notch with respect to (Q_l, |Q_c|, f_r, phi),
// in that order.
template <typename Scalar>
struct NotchGradient {
  std::complex<Scalar> d_q_l, d_q_c_mag, d_f_r, d_phi;
};

template <typename Scalar>
NotchGradient<Scalar> s21_notch_gradient(Scalar f, Scalar q_l, Scalar q_c_mag,
                                         Scalar f_r, Scalar phi) {
  const std::complex<Scalar> i(0, 1);
  const std::complex<Scalar> u(Scalar(1), detuning(f, q_l, f_r));
  const std::complex<Scalar> rot = std::polar(Scalar(1), phi);
  const std::complex<Scalar> u2 = u * u;
  NotchGradient<Scalar> g;
  g.d_q_l = -rot / (q_c_mag * u2);
  g.d_q_c_mag = rot * (q_l / (q_c_mag * q_c_mag)) / u;
  g.d_f_r = -i * rot * (Scalar(2) * q_l * q_l * f / (q_c_mag * f_r * f_r)) / u2;
  g.d_phi = -i * rot * (q_l / q_c_mag) / u;
  return g;
}

// d s21_notch / d f, the direction the model moves along the circle.
template <typename Scalar>
std::complex<Scalar> s21_notch_tangent(Scalar f, Scalar q_l, Scalar q_c_mag,
                                       Scalar f_r, Scalar phi) {
  const std::complex<Scalar> i(0, 1);
  const std::complex<Scalar> u(Scalar(1), detuning(f, q_l, f_r));
  return i * std::polar(q_l / q_c_mag, phi) * (Scalar(2) * q_l / f_r) / (u * u);
}

// Full transmission including the measurement background.
template <typename Scalar>
std::complex<Scalar> s21_model(const BasicResonatorParams<Scalar>& params,
                               const BasicBackground<Scalar>& bg, Scalar f) {
  return bg.factor(f) *
         s21_notch(f, params.q_l(), params.q_c_mag, params.f_r, params.phi);
}

// Validating double-precision entry point.
std::complex<double> s21_ideal(const ResonatorParams& params,
                               const Background& bg, double f);

// Frequency-phase relation of the centered circle,
// theta(f) = theta0 + 2 arctan(2 Q_l (1 - f/f_r)), and its inverse.
template <typename Scalar>
Scalar phase_of_frequency(Scalar f, Scalar theta0, Scalar q_l, Scalar f_r) {
  using std::atan;
  return theta0 - Scalar(2) * atan(detuning(f, q_l, f_r));
}

template <typename Scalar>
Scalar frequency_of_phase(Scalar theta, Scalar theta0, Scalar q_l, Scalar f_r) {
  using std::tan;
  return f_r * (Scalar(1) - tan((theta - theta0) / Scalar(2)) / (Scalar(2) * q_l));
}

// df/dtheta = linewidth [((f_r - f)/linewidth)^2 + 1/4]
double df_dtheta(const ResonatorParams& params, double f);

// Phasal point density of a linear sweep of n_points over span, in points
// per radian around the circle.
double phasal_density(const ResonatorParams& params, double span,
                      long n_points, double f);

// Mean resonator photon number for on-chip power p_chip (W).
double photon_number(const ResonatorParams& params, double p_chip);

struct PowerCoefficients {
  double s21_sq;  // |S21|^2 at f_r
  double s11_sq;  // |S11|^2 at f_r
};

PowerCoefficients on_resonance_power_coefficients(const ResonatorParams& params);

double dbm_to_watts(double dbm);

// Attenuation is a signed gain in dB, e.g. -73 for a -73 dB input line.
double chip_power_watts(double p_vna_dbm, double attenuation_db);

}  // namespace resfit
