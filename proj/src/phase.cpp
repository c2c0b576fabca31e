#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "resfit/errors.hpp"
#include "resfit/fit.hpp"

namespace resfit {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap(double a) { return std::remainder(a, 2.0 * kPi); }

// Index k that best splits a (noisy) decreasing sequence at `level`: the
// number of samples on the wrong side of the split is minimal. Returns -1
// when the level is outside the data range.
Eigen::Index crossing_index(const Eigen::VectorXd& theta, double level) {
  const Eigen::Index n = theta.size();
  if (level > theta.maxCoeff() || level < theta.minCoeff()) return -1;
  // wrong(k) = #{i < k : theta_i < level} + #{i >= k : theta_i > level}
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < n; ++i) wrong += theta[i] > level ? 1 : 0;
  Eigen::Index best = wrong;
  Eigen::Index best_k = 0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    wrong += theta[k - 1] < level ? 1 : 0;
    wrong -= theta[k - 1] > level ? 1 : 0;
    if (wrong < best) {
      best = wrong;
      best_k = k;
    }
  }
  if (best_k == 0 || best_k == n) return -1;
  return best_k;
}

double crossing_frequency(const Eigen::VectorXd& f, const Eigen::VectorXd& theta, double level) {
  const Eigen::Index k = crossing_index(theta, level);
  if (k < 0) return std::numeric_limits<double>::quiet_NaN();
  return 0.5 * (f[k - 1] + f[k]);
}

struct PhaseModel {
  const Eigen::VectorXd& f;
  const Eigen::VectorXd& theta;

  // Wrapped residuals (data - model) and their Jacobian w.r.t. the model
  // parameters (theta0, Q_l, f_r), sign flipped to d(residual)/dp.
  double evaluate(const Eigen::Vector3d& p, Eigen::VectorXd* r, Eigen::MatrixX3d* jac) const {
    const double theta0 = p[0], q_l = p[1], f_r = p[2];
    double cost = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double x = detuning(f[i], q_l, f_r);
      const double res = wrap(theta[i] - (theta0 - 2.0 * std::atan(x)));
      cost += res * res;
      if (r) (*r)[i] = res;
      if (jac) {
        const double g = 2.0 / (1.0 + x * x);
        (*jac)(i, 0) = -1.0;
        (*jac)(i, 1) = g * x / q_l;
        (*jac)(i, 2) = g * (-2.0 * q_l * f[i] / (f_r * f_r));
      }
    }
    return cost;
  }
};

}  // namespace

PhaseFit fit_phase(const Sweep& sweep, const CircleGeometry& circle,
                   const PhaseFitOptions& options) {
  validate(sweep, 5);
  const Eigen::Index n = sweep.size();
  const Eigen::VectorXcd centered = sweep.s21.array() - circle.center();
  const Eigen::VectorXd theta = unwrap_phase(centered);
  const Eigen::VectorXd& f = sweep.f;

  // Starting point. The unwrapped phase falls by up to 2 pi across the
  // resonance; its mid level marks f_r and the +-pi/2 levels mark the
  // half-linewidth points. Narrow sweeps fall back to the slope at f_r.
  const double mid = 0.5 * (theta[0] + theta[n - 1]);
  double f_r = crossing_frequency(f, theta, mid);
  if (!std::isfinite(f_r)) f_r = 0.5 * (f[0] + f[n - 1]);
  double q_l = std::numeric_limits<double>::quiet_NaN();
  const double f_lo = crossing_frequency(f, theta, mid + 0.5 * kPi);
  const double f_hi = crossing_frequency(f, theta, mid - 0.5 * kPi);
  if (std::isfinite(f_lo) && std::isfinite(f_hi) && f_hi > f_lo) q_l = f_r / (f_hi - f_lo);
  if (!std::isfinite(q_l)) {
    // dtheta/df = -4 Q_l / f_r at resonance; regress over the middle fifth.
    const Eigen::Index k0 = 2 * n / 5, k1 = std::max(3 * n / 5, k0 + 2);
    const Eigen::Index m = k1 - k0;
    const Eigen::VectorXd fx = f.segment(k0, m).array() - f.segment(k0, m).mean();
    const Eigen::VectorXd ty = theta.segment(k0, m).array() - theta.segment(k0, m).mean();
    const double s = fx.dot(ty) / fx.squaredNorm();
    q_l = std::abs(s) * f_r / 4.0;
    if (!(q_l > 0.0) || !std::isfinite(q_l)) q_l = f_r / (f[n - 1] - f[0]);
  }
  double theta0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    theta0 += theta[i] + 2.0 * std::atan(detuning(f[i], q_l, f_r));
  theta0 /= static_cast<double>(n);

  // Levenberg-Marquardt with diagonal scaling.
  const PhaseModel model{f, theta};
  Eigen::Vector3d p(theta0, q_l, f_r);
  Eigen::VectorXd r(n);
  Eigen::MatrixX3d jac(n, 3);
  double cost = model.evaluate(p, &r, &jac);
  double lambda = 1e-3;
  int iter = 0;
  bool converged = false;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d g = jac.transpose() * r;
    bool accepted = false;
    Eigen::Vector3d step = Eigen::Vector3d::Zero();
    while (!accepted) {
      Eigen::Matrix3d a = jtj;
      a.diagonal() += lambda * jtj.diagonal();
      step = a.ldlt().solve(-g);
      const Eigen::Vector3d trial = p + step;
      if (trial[1] > 0.0 && trial[2] > 0.0 && step.allFinite()) {
        const double trial_cost = model.evaluate(trial, nullptr, nullptr);
        if (trial_cost <= cost) {
          p = trial;
          cost = model.evaluate(p, &r, &jac);
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    const double rel = std::max({std::abs(step[0]), std::abs(step[1]) / std::abs(p[1]),
                                 std::abs(step[2]) / std::abs(p[2]) *
                                     p[1]});  // f_r step relative to the linewidth
    if (!accepted || rel < options.step_tolerance) {
      // A rejected step at maximal damping means no descent direction is
      // left: the current point is a minimum to working precision.
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "phase fit did not converge in " << options.max_iterations << " iterations";
    throw FitFailure(os.str(), p[0], p[1], p[2]);
  }

  PhaseFit out;
  out.theta0 = wrap(p[0]);
  out.q_l = p[1];
  out.f_r = p[2];
  out.iterations = iter;
  out.rms_residual = std::sqrt(cost / static_cast<double>(n));
  return out;
}

}  // namespace resfit
