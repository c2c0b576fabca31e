#pragma once

// Diameter-correcting circle fit: delay removal, algebraic circle fit,
// phase fit, background calibration, diameter correction and the
// Jacobian-based covariance of (Q_l, |Q_c|, f_r, phi).

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "resfit/model.hpp"
#include "resfit/synth.hpp"

namespace resfit {

struct CircleGeometry {
  double xc = 0.0;
  double yc = 0.0;
  double r = 0.0;
  double rms_radial_residual = 0.0;

  std::complex<double> center() const { return {xc, yc}; }
};

// Taubin algebraic circle fit. Throws DegenerateGeometry for fewer than
// three points or (near-)collinear input.
CircleGeometry fit_circle_algebraic(const Eigen::Ref<const Eigen::VectorXcd>& points);

// Root-mean-square distance of the points from the circle.
double rms_radial_residual(const Eigen::Ref<const Eigen::VectorXcd>& points, double xc,
                           double yc, double r);

struct DelayOptions {
  bool refine = true;
};

struct DelayResult {
  Sweep sweep;  // input multiplied by exp(+2 pi i f tau)
  double tau = 0.0;
  double tau_linear = 0.0;  // slope-only estimate before refinement
};

// Cumulative 2 pi correction of adjacent jumps larger than pi.
Eigen::VectorXd unwrap_phase(const Eigen::Ref<const Eigen::VectorXcd>& values);

// Estimates the electrical delay from the unwrapped phase slope, optionally
// refined by minimizing the algebraic circle residual over tau.
DelayResult remove_delay(const Sweep& sweep, const DelayOptions& options = {});

struct PhaseFitOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-10;  // relative parameter step
};

struct PhaseFit {
  double theta0 = 0.0;
  double q_l = 0.0;
  double f_r = 0.0;
  int iterations = 0;
  double rms_residual = 0.0;  // rad
};

// Fits theta(f) = theta0 + 2 arctan(2 Q_l (1 - f/f_r)) to the phase of the
// sweep about the circle center. Throws FitFailure on non-convergence.
PhaseFit fit_phase(const Sweep& sweep, const CircleGeometry& circle,
                   const PhaseFitOptions& options = {});

struct DiameterCorrection {
  double q_c_mag = 0.0;
  double phi = 0.0;
  double q_i = 0.0;
};

// |Q_c| from the diameter, phi from the direction of the circle center as
// seen from the off-resonant point, Q_i from the loaded-Q relation. Throws
// NonphysicalQi when 1/Q_l - cos(phi)/|Q_c| <= 0.
DiameterCorrection diameter_correct(const CircleGeometry& circle, double q_l,
                                    std::complex<double> off_resonant_point);

struct Calibration {
  Sweep sweep;  // off-resonant point moved to 1 + 0i
  Background background;
  std::complex<double> off_resonant_point;
  bool unreliable = false;  // |P_off| below ten noise standard deviations
};

// Divides a delay-corrected sweep by a e^{i alpha}, where a e^{i alpha} is
// the off-resonant point center + r e^{i(theta0 + pi)} of the circle.
Calibration calibrate_background(const Sweep& delay_removed, double tau,
                                 const CircleGeometry& circle, double theta0);

struct PolishOptions {
  bool enabled = true;
  int max_iterations = 50;
  double step_tolerance = 1e-13;
};

struct PolishResult {
  Background background;
  double q_l = 0.0;
  double q_c_mag = 0.0;
  double f_r = 0.0;
  double phi = 0.0;
  int iterations = 0;
  double cost_before = 0.0;  // sum |data - model|^2
  double cost_after = 0.0;
};

// Joint damped least squares of the complex residual over all seven model
// parameters (a, alpha, tau, Q_l, |Q_c|, f_r, phi), started from the
// geometric estimate. The circle criterion for the delay is only quadratic
// in the delay error when the circle is symmetric about the off-resonant
// axis; the complex residual is linear in it. Steps that would make Q_i
// nonphysical are rejected.
PolishResult polish_fit(const Sweep& sweep, const Background& background, double q_l,
                        double q_c_mag, double f_r, double phi,
                        const PolishOptions& options = {});

enum class DofMode { n_minus_4, n_minus_6 };

struct FitOptions {
  DelayOptions delay;
  PhaseFitOptions phase;
  PolishOptions polish;
  DofMode dof = DofMode::n_minus_4;
};

struct ParameterSigmas {
  double q_l = 0.0;
  double q_c_mag = 0.0;
  double f_r = 0.0;
  double phi = 0.0;
  double q_i = 0.0;
};

struct FitResult {
  double q_l = 0.0;
  double q_c_mag = 0.0;
  double q_i = 0.0;
  double f_r = 0.0;
  double phi = 0.0;
  double theta0 = 0.0;
  Background background;
  ParameterSigmas sigma;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  // (Q_l, |Q_c|, f_r, phi)
  double chi2 = 0.0;
  Eigen::Index n_points = 0;
  std::vector<std::string> warnings;

  ResonatorParams params() const { return {f_r, q_i, q_c_mag, phi}; }
};

// Intermediates of fit_full, for diagnostics.
struct FitDiagnostics {
  DelayResult delay;
  CircleGeometry circle_raw;
  PhaseFit phase_raw;
  Calibration calibration;
  CircleGeometry circle_calibrated;
  PhaseFit phase_calibrated;
  DiameterCorrection correction;
  PolishResult polish;
};

// Whole pipeline. Errors from any stage are rethrown as StageError with the
// original exception nested.
FitResult fit_full(const Sweep& sweep, const FitOptions& options = {},
                   FitDiagnostics* diagnostics = nullptr);

struct Uncertainties {
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  ParameterSigmas sigma;
  double chi2 = 0.0;
};

// Jacobian rows for the covariance estimate, one per sample. Exposed for the
// finite-difference check.
Eigen::MatrixX4d uncertainty_jacobian(const Eigen::VectorXd& f,
                                      const Eigen::VectorXcd& residuals, double q_l,
                                      double q_c_mag, double f_r, double phi);

// chi^2/(N - dof) (J^T J)^{-1} with residuals taken against the calibrated
// model of `result`. Throws DegreesOfFreedomError for N <= 4 (N <= 6 in
// n_minus_6 mode) and RankDeficiency for a singular normal matrix.
Uncertainties estimate_uncertainties(const Sweep& sweep, const FitResult& result,
                                     DofMode dof = DofMode::n_minus_4);

// First-order propagation through 1/Q_i = 1/Q_l - cos(phi)/|Q_c| with the
// full covariance.
double propagate_qi_error(double q_l, double q_c_mag, double phi,
                          const Eigen::Matrix4d& covariance);
double propagate_qi_error(const FitResult& result);

}  // namespace resfit
