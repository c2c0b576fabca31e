#include "resfit/model.hpp"

#include <sstream>

#include "resfit/errors.hpp"

namespace resfit {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void validate(const ResonatorParams& params) {
  std::ostringstream why;
  if (!positive_finite(params.f_r)) why << "f_r must be > 0 (got " << params.f_r << "); ";
  if (!positive_finite(params.q_i)) why << "q_i must be > 0 (got " << params.q_i << "); ";
  if (!positive_finite(params.q_c_mag))
    why << "q_c_mag must be > 0 (got " << params.q_c_mag << "); ";
  if (!std::isfinite(params.phi) || std::abs(params.phi) >= std::numbers::pi / 2)
    why << "phi must lie in (-pi/2, pi/2) (got " << params.phi << "); ";
  if (!why.str().empty()) throw InvalidParameter("invalid resonator parameters: " + why.str());
}

void validate(const Background& bg) {
  if (!positive_finite(bg.a) || !std::isfinite(bg.alpha) || !std::isfinite(bg.tau)) {
    std::ostringstream why;
    why << "invalid background (a=" << bg.a << ", alpha=" << bg.alpha << ", tau=" << bg.tau
        << "); a must be > 0 and all fields finite";
    throw InvalidParameter(why.str());
  }
}

std::complex<double> s21_ideal(const ResonatorParams& params, const Background& bg,
                               double f) {
  validate(params);
  validate(bg);
  if (!positive_finite(f)) throw InvalidParameter("frequency must be finite and > 0");
  const auto s = s21_model(params, bg, f);
  if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
    throw InvalidParameter("non-finite transmission");
  return s;
}

double df_dtheta(const ResonatorParams& params, double f) {
  const double lw = params.linewidth();
  const double u = (params.f_r - f) / lw;
  return lw * (u * u + 0.25);
}

double phasal_density(const ResonatorParams& params, double span, long n_points, double f) {
  if (!(span > 0.0)) throw InvalidParameter("span must be > 0");
  if (n_points < 2) throw InvalidParameter("n_points must be >= 2");
  const double lw = params.linewidth();
  const double u = (params.f_r - f) / lw;
  return static_cast<double>(n_points) / (span / lw) * (u * u + 0.25);
}

double photon_number(const ResonatorParams& params, double p_chip) {
  if (!(p_chip >= 0.0)) throw InvalidParameter("chip power must be >= 0");
  if (std::abs(params.phi) > std::numbers::pi / 2)
    throw InvalidParameter("phi outside [-pi/2, pi/2]");
  // cos(pi/2) evaluates to ~6e-17 in double; the boundary is exactly zero.
  const double c = std::abs(params.phi) == std::numbers::pi / 2 ? 0.0 : std::cos(params.phi);
  const double q_l = 1.0 / (1.0 / params.q_i + c / params.q_c_mag);
  return p_chip / (2.0 * std::numbers::pi * kPlanck * params.f_r * params.f_r) *
         (2.0 * q_l * q_l * c / params.q_c_mag);
}

PowerCoefficients on_resonance_power_coefficients(const ResonatorParams& params) {
  const double q_l = params.q_l();
  const double qc = params.q_c_mag;
  return {(qc * qc + q_l * q_l - 2.0 * q_l * qc * std::cos(params.phi)) / (qc * qc),
          q_l * q_l / (qc * qc)};
}

double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

double chip_power_watts(double p_vna_dbm, double attenuation_db) {
  return dbm_to_watts(p_vna_dbm + attenuation_db);
}

}  // namespace resfit
