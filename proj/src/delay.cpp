#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "resfit/errors.hpp"
#include "resfit/fit.hpp"

namespace resfit {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Sum of squared radial residuals of the algebraic circle through
// z_k exp(2 pi i df_k t / span), with t the delay in units of 1/span.
class CircleResidual {
 public:
  CircleResidual(const Eigen::VectorXd& df, const Eigen::VectorXcd& z, double span)
      : df_(df), z_(z), span_(span), rotated_(z.size()) {}

  void rotate(double t) {
    const double w = kTwoPi * t / span_;
    for (Eigen::Index i = 0; i < z_.size(); ++i) rotated_[i] = z_[i] * std::polar(1.0, w * df_[i]);
  }

  double cost(double t) {
    rotate(t);
    try {
      const CircleGeometry g = fit_circle_algebraic(rotated_);
      return g.rms_radial_residual * g.rms_radial_residual;
    } catch (const DegenerateGeometry&) {
      return std::numeric_limits<double>::max();
    }
  }

  Eigen::VectorXd residuals(double t) {
    rotate(t);
    const CircleGeometry g = fit_circle_algebraic(rotated_);
    Eigen::VectorXd r(z_.size());
    for (Eigen::Index i = 0; i < z_.size(); ++i) r[i] = std::abs(rotated_[i] - g.center()) - g.r;
    return r;
  }

 private:
  const Eigen::VectorXd& df_;
  const Eigen::VectorXcd& z_;
  double span_;
  Eigen::VectorXcd rotated_;
};

// Ordinary least-squares slope of y against x.
double slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double mx = x.mean();
  const double my = y.mean();
  const Eigen::ArrayXd dx = x.array() - mx;
  return (dx * (y.array() - my)).sum() / (dx * dx).sum();
}

// Flags jumps that are ambiguous (close to pi) between two points that both
// sit near the off-resonant magnitude, where the resonance cannot explain
// them. That pattern means the delay is undersampled.
void check_unwrap(const Eigen::VectorXcd& z) {
  std::vector<double> mags(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(z[i]);
  auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  const double floor = 0.5 * *mid;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    const double jump = std::abs(std::arg(z[i] * std::conj(z[i - 1])));
    if (jump > 0.9 * kPi && std::abs(z[i]) > floor && std::abs(z[i - 1]) > floor) {
      std::ostringstream os;
      os << "phase unwrap ambiguous between samples " << i - 1 << " and " << i
         << " (jump " << jump << " rad away from resonance); delay undersampled";
      throw PhaseUnwrapError(os.str(), static_cast<std::size_t>(i));
    }
  }
}

}  // namespace

Eigen::VectorXd unwrap_phase(const Eigen::Ref<const Eigen::VectorXcd>& values) {
  Eigen::VectorXd out(values.size());
  if (values.size() == 0) return out;
  out[0] = std::arg(values[0]);
  for (Eigen::Index i = 1; i < values.size(); ++i)
    out[i] = out[i - 1] + std::arg(values[i] * std::conj(values[i - 1]));
  return out;
}

DelayResult remove_delay(const Sweep& sweep, const DelayOptions& options) {
  validate(sweep, 5);
  check_unwrap(sweep.s21);

  const Eigen::Index n = sweep.size();
  const double span = sweep.f[n - 1] - sweep.f[0];
  const double f_mid = 0.5 * (sweep.f[0] + sweep.f[n - 1]);
  const Eigen::VectorXd df = sweep.f.array() - f_mid;

  DelayResult out;
  out.tau_linear = -slope(df, unwrap_phase(sweep.s21)) / kTwoPi;
  double tau = out.tau_linear;

  if (options.refine) {
    // Work in t = tau * span: one unit twists the sweep by a full turn.
    const double t_lin = tau * span;

    // Coarse scan on a decimated copy to find the basin of the true delay.
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / 1000);
    const Eigen::Index m = (n + stride - 1) / stride;
    Eigen::VectorXd df_coarse(m);
    Eigen::VectorXcd z_coarse(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      df_coarse[k] = df[k * stride];
      z_coarse[k] = sweep.s21[k * stride];
    }
    CircleResidual coarse(df_coarse, z_coarse, span);
    constexpr int kSteps = 160;
    constexpr double kHalfWidth = 2.0;
    const double step = 2.0 * kHalfWidth / kSteps;
    double best_t = t_lin;
    double best_cost = coarse.cost(t_lin);
    for (int k = 0; k <= kSteps; ++k) {
      const double t = t_lin - kHalfWidth + step * k;
      const double c = coarse.cost(t);
      if (c < best_cost) {
        best_cost = c;
        best_t = t;
      }
    }

    CircleResidual full(df, sweep.s21, span);
    auto [t_min, c_min] = boost::math::tools::brent_find_minima(
        [&](double t) { return full.cost(t); }, best_t - step, best_t + step, 52);
    (void)c_min;

    // Gauss-Newton polish on the radial residual vector.
    double t = t_min;
    for (int iter = 0; iter < 20; ++iter) {
      const double h = 1e-7;
      const Eigen::VectorXd r0 = full.residuals(t);
      const Eigen::VectorXd jac = (full.residuals(t + h) - full.residuals(t - h)) / (2.0 * h);
      const double jj = jac.squaredNorm();
      if (!(jj > 0.0)) break;
      const double dt = -jac.dot(r0) / jj;
      const double before = r0.squaredNorm();
      const double after = full.residuals(t + dt).squaredNorm();
      if (!(after <= before)) break;
      t += dt;
      if (std::abs(dt) < 1e-14 * std::max(1.0, std::abs(t))) break;
    }
    tau = t / span;
  }

  Eigen::VectorXcd corrected(n);
  for (Eigen::Index i = 0; i < n; ++i)
    corrected[i] = sweep.s21[i] * std::polar(1.0, kTwoPi * sweep.f[i] * tau);
  out.sweep = sweep.with_values(std::move(corrected));
  out.tau = tau;
  return out;
}

}  // namespace resfit
