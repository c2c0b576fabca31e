#include "resfit/fit.hpp"

#include <cmath>
#include <exception>
#include <numbers>
#include <sstream>

#include "resfit/errors.hpp"

namespace resfit {

DiameterCorrection diameter_correct(const CircleGeometry& circle, double q_l,
                                    std::complex<double> off_resonant_point) {
  if (!(circle.r > 0.0)) throw InvalidParameter("circle radius must be > 0");
  if (!(q_l > 0.0)) throw InvalidParameter("q_l must be > 0");
  DiameterCorrection out;
  const double diameter = 2.0 * circle.r;
  out.q_c_mag = q_l / diameter;
  // With a calibrated background the center sits at 1 - (d/2) e^{i phi}.
  out.phi = std::arg(off_resonant_point - circle.center());
  const double inv_qi = 1.0 / q_l - std::cos(out.phi) / out.q_c_mag;
  if (!(inv_qi > 0.0)) {
    std::ostringstream os;
    os << "nonphysical Q_i: 1/Q_l - cos(phi)/|Q_c| = " << inv_qi << " (d = " << diameter
       << ", phi = " << out.phi << ")";
    throw NonphysicalQi(os.str());
  }
  out.q_i = 1.0 / inv_qi;
  return out;
}

Calibration calibrate_background(const Sweep& delay_removed, double tau,
                                 const CircleGeometry& circle, double theta0) {
  Calibration out;
  out.off_resonant_point = circle.center() + std::polar(circle.r, theta0 + std::numbers::pi);
  const double a = std::abs(out.off_resonant_point);
  if (!(a > 0.0) || !std::isfinite(a))
    throw InvalidParameter("off-resonant point at the origin; cannot calibrate");
  out.background = {a, std::arg(out.off_resonant_point), tau};
  out.unreliable = a < 10.0 * circle.rms_radial_residual;
  out.sweep = delay_removed.with_values(delay_removed.s21 / out.off_resonant_point);
  return out;
}

namespace {

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    std::throw_with_nested(StageError(stage, e.what()));
  }
}

}  // namespace

FitResult fit_full(const Sweep& sweep, const FitOptions& options, FitDiagnostics* diagnostics) {
  const Eigen::Index min_points = options.dof == DofMode::n_minus_4 ? 5 : 7;
  if (sweep.size() < min_points) {
    std::ostringstream os;
    os << "sweep has " << sweep.size() << " points; the covariance needs N - "
       << (min_points - 1) << " > 0 degrees of freedom";
    throw DegreesOfFreedomError(os.str());
  }
  run_stage("input", [&] { validate(sweep, min_points); });

  FitDiagnostics d;
  d.delay = run_stage("delay", [&] { return remove_delay(sweep, options.delay); });
  d.circle_raw = run_stage("circle", [&] { return fit_circle_algebraic(d.delay.sweep.s21); });
  d.phase_raw = run_stage("phase", [&] { return fit_phase(d.delay.sweep, d.circle_raw, options.phase); });
  d.calibration = run_stage("calibration", [&] {
    return calibrate_background(d.delay.sweep, d.delay.tau, d.circle_raw, d.phase_raw.theta0);
  });
  d.circle_calibrated =
      run_stage("circle", [&] { return fit_circle_algebraic(d.calibration.sweep.s21); });
  d.phase_calibrated = run_stage(
      "phase", [&] { return fit_phase(d.calibration.sweep, d.circle_calibrated, options.phase); });
  d.correction = run_stage("diameter", [&] {
    return diameter_correct(d.circle_calibrated, d.phase_calibrated.q_l, {1.0, 0.0});
  });

  FitResult result;
  result.q_l = d.phase_calibrated.q_l;
  result.f_r = d.phase_calibrated.f_r;
  result.theta0 = d.phase_calibrated.theta0;
  result.q_c_mag = d.correction.q_c_mag;
  result.phi = d.correction.phi;
  result.q_i = d.correction.q_i;
  result.background = d.calibration.background;
  if (options.polish.enabled) {
    d.polish = run_stage("polish", [&] {
      return polish_fit(sweep, result.background, result.q_l, result.q_c_mag, result.f_r,
                        result.phi, options.polish);
    });
    result.q_l = d.polish.q_l;
    result.q_c_mag = d.polish.q_c_mag;
    result.f_r = d.polish.f_r;
    result.phi = d.polish.phi;
    result.q_i = 1.0 / (1.0 / result.q_l - std::cos(result.phi) / result.q_c_mag);
    result.background = d.polish.background;
    // On resonance the calibrated response sits opposite the off-resonant
    // point as seen from the center.
    result.theta0 = std::remainder(result.phi + std::numbers::pi, 2.0 * std::numbers::pi);
  }
  result.n_points = sweep.size();
  if (d.calibration.unreliable)
    result.warnings.emplace_back("off-resonant point within ten noise deviations of the origin");
  if (std::abs(result.phi) >= std::numbers::pi / 2)
    result.warnings.emplace_back("fitted phi outside (-pi/2, pi/2)");

  const Uncertainties u =
      run_stage("uncertainty", [&] { return estimate_uncertainties(sweep, result, options.dof); });
  result.covariance = u.covariance;
  result.sigma = u.sigma;
  result.chi2 = u.chi2;

  if (diagnostics) *diagnostics = std::move(d);
  return result;
}

}  // namespace resfit
