#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "resfit/errors.hpp"
#include "resfit/fit.hpp"

namespace resfit {

Eigen::MatrixX4d uncertainty_jacobian(const Eigen::VectorXd& f, const Eigen::VectorXcd& residuals,
                                      double q_l, double q_c_mag, double f_r, double phi) {
  const Eigen::Index n = f.size();
  const double chi_max = residuals.cwiseAbs().maxCoeff();
  Eigen::MatrixX4d jac(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double chi = std::abs(residuals[i]);
    std::complex<double> dir;
    if (chi_max > 0.0 && chi >= 1e-3 * chi_max) {
      dir = residuals[i] / chi;
    } else {
      // chi/|chi| is undefined at a vanishing residual; use the direction in
      // which the model moves along the circle instead.
      const auto t = s21_notch_tangent(f[i], q_l, q_c_mag, f_r, phi);
      dir = std::abs(t) > 0.0 ? t / std::abs(t) : std::complex<double>(1.0, 0.0);
    }
    const auto g = s21_notch_gradient(f[i], q_l, q_c_mag, f_r, phi);
    // Projection of each model derivative onto the residual direction.
    jac(i, 0) = (std::conj(g.d_q_l) * dir).real();
    jac(i, 1) = (std::conj(g.d_q_c_mag) * dir).real();
    jac(i, 2) = (std::conj(g.d_f_r) * dir).real();
    jac(i, 3) = (std::conj(g.d_phi) * dir).real();
  }
  return jac;
}

Uncertainties estimate_uncertainties(const Sweep& sweep, const FitResult& result, DofMode dof) {
  const Eigen::Index n = sweep.size();
  const Eigen::Index k = dof == DofMode::n_minus_4 ? 4 : 6;
  if (n - k <= 0) {
    std::ostringstream os;
    os << "N - " << k << " = " << n - k << " degrees of freedom; covariance undefined";
    throw DegreesOfFreedomError(os.str());
  }

  Eigen::VectorXcd chi(n);
  double data_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto model = s21_notch(sweep.f[i], result.q_l, result.q_c_mag, result.f_r, result.phi);
    const auto calibrated = sweep.s21[i] / result.background.factor(sweep.f[i]);
    chi[i] = calibrated - model;
    data_max = std::max(data_max, std::abs(calibrated));
  }

  Uncertainties out;
  out.chi2 = chi.squaredNorm();
  // Residuals at the rounding floor carry no direction; the fit is exact.
  constexpr double kRoundingFloor = 1e3 * std::numeric_limits<double>::epsilon();
  if (chi.cwiseAbs().maxCoeff() <= kRoundingFloor * data_max) return out;

  const Eigen::MatrixX4d jac =
      uncertainty_jacobian(sweep.f, chi, result.q_l, result.q_c_mag, result.f_r, result.phi);
  const Eigen::Matrix4d jtj = jac.transpose() * jac;

  // The columns differ by many orders of magnitude (f_r in Hz against phi in
  // rad); equilibrate before inverting.
  const Eigen::Vector4d scale = jtj.diagonal().cwiseSqrt();
  if (!(scale.minCoeff() > 0.0))
    throw RankDeficiency("Jacobian has an all-zero column; a parameter does not affect the model");
  const Eigen::Matrix4d d = scale.cwiseInverse().asDiagonal();
  const Eigen::Matrix4d normalized = d * jtj * d;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(normalized);
  const Eigen::Vector4d ev = eig.eigenvalues();
  if (!(ev[0] > 1e-14 * ev[3])) {
    const Eigen::Vector4d null = (d * eig.eigenvectors().col(0)).normalized();
    std::ostringstream os;
    os << "J^T J is singular; null direction (Q_l, |Q_c|, f_r, phi) ~ (" << null[0] << ", "
       << null[1] << ", " << null[2] << ", " << null[3] << ")";
    throw RankDeficiency(os.str());
  }
  const Eigen::Matrix4d inv_normalized =
      eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  Eigen::Matrix4d cov = out.chi2 / static_cast<double>(n - k) * (d * inv_normalized * d);
  cov = 0.5 * (cov + cov.transpose()).eval();
  out.covariance = cov;
  out.sigma.q_l = std::sqrt(cov(0, 0));
  out.sigma.q_c_mag = std::sqrt(cov(1, 1));
  out.sigma.f_r = std::sqrt(cov(2, 2));
  out.sigma.phi = std::sqrt(cov(3, 3));
  out.sigma.q_i = propagate_qi_error(result.q_l, result.q_c_mag, result.phi, cov);
  return out;
}

double propagate_qi_error(double q_l, double q_c_mag, double phi, const Eigen::Matrix4d& covariance) {
  const double q_i = 1.0 / (1.0 / q_l - std::cos(phi) / q_c_mag);
  const double q_i2 = q_i * q_i;
  const Eigen::Vector4d grad(q_i2 / (q_l * q_l), -q_i2 * std::cos(phi) / (q_c_mag * q_c_mag), 0.0,
                             -q_i2 * std::sin(phi) / q_c_mag);
  const double var = grad.dot(covariance * grad);
  return std::sqrt(std::max(var, 0.0));
}

double propagate_qi_error(const FitResult& result) {
  return propagate_qi_error(result.q_l, result.q_c_mag, result.phi, result.covariance);
}

}  // namespace resfit
