#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "resfit/errors.hpp"
#include "resfit/fit.hpp"

namespace resfit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kParams = 7;
using Vector7d = Eigen::Matrix<double, kParams, 1>;
using Matrix7d = Eigen::Matrix<double, kParams, kParams>;

// Internal coordinates, all of order one near the start point:
//   0 log a, 1 alpha at the sweep center, 2 tau * span, 3 log Q_l,
//   4 log |Q_c|, 5 f_r offset in start linewidths, 6 phi.
struct Problem {
  const Eigen::VectorXd& f;
  const Eigen::VectorXcd& data;
  double f_mid;
  double span;
  double f_r0;
  double width0;

  struct Physical {
    double a, alpha_mid, tau, q_l, q_c_mag, f_r, phi;
  };

  Physical physical(const Vector7d& p) const {
    return {std::exp(p[0]), p[1], p[2] / span,        std::exp(p[3]),
            std::exp(p[4]), f_r0 + p[5] * width0, p[6]};
  }

  std::complex<double> background(const Physical& q, double fi) const {
    return std::polar(q.a, q.alpha_mid - kTwoPi * (fi - f_mid) * q.tau);
  }

  double cost(const Vector7d& p, Eigen::VectorXd* r, Eigen::MatrixXd* jac) const {
    const Physical q = physical(p);
    const Eigen::Index n = f.size();
    double c = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> b = background(q, f[i]);
      const std::complex<double> notch = s21_notch(f[i], q.q_l, q.q_c_mag, q.f_r, q.phi);
      const std::complex<double> model = b * notch;
      const std::complex<double> res = data[i] - model;
      c += std::norm(res);
      if (r) {
        (*r)[2 * i] = res.real();
        (*r)[2 * i + 1] = res.imag();
      }
      if (jac) {
        const auto g = s21_notch_gradient(f[i], q.q_l, q.q_c_mag, q.f_r, q.phi);
        const std::complex<double> iu(0.0, 1.0);
        const std::complex<double> cols[kParams] = {
            model,
            iu * model,
            -iu * kTwoPi * (f[i] - f_mid) / span * model,
            b * g.d_q_l * q.q_l,
            b * g.d_q_c_mag * q.q_c_mag,
            b * g.d_f_r * width0,
            b * g.d_phi,
        };
        // Residual is data - model.
        for (int k = 0; k < kParams; ++k) {
          (*jac)(2 * i, k) = -cols[k].real();
          (*jac)(2 * i + 1, k) = -cols[k].imag();
        }
      }
    }
    return c;
  }
};

bool physical_qi(double q_l, double q_c_mag, double phi) {
  return 1.0 / q_l - std::cos(phi) / q_c_mag > 0.0;
}

}  // namespace

PolishResult polish_fit(const Sweep& sweep, const Background& background, double q_l,
                        double q_c_mag, double f_r, double phi, const PolishOptions& options) {
  validate(sweep, 5);
  if (!(q_l > 0.0) || !(q_c_mag > 0.0) || !(f_r > 0.0) || !(background.a > 0.0))
    throw InvalidParameter("polish start point must have positive Q_l, |Q_c|, f_r and a");

  const Eigen::Index n = sweep.size();
  const double f_mid = 0.5 * (sweep.f[0] + sweep.f[n - 1]);
  const double span = sweep.f[n - 1] - sweep.f[0];
  const Problem problem{sweep.f, sweep.s21, f_mid, span, f_r, f_r / q_l};

  Vector7d p;
  p << std::log(background.a), background.alpha - kTwoPi * f_mid * background.tau,
      background.tau * span, std::log(q_l), std::log(q_c_mag), 0.0, phi;

  PolishResult out;
  Eigen::VectorXd r(2 * n);
  Eigen::MatrixXd jac(2 * n, kParams);
  double cost = problem.cost(p, &r, &jac);
  out.cost_before = cost;

  double lambda = 1e-3;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Matrix7d jtj = jac.transpose() * jac;
    const Vector7d grad = jac.transpose() * r;
    bool accepted = false;
    Vector7d step = Vector7d::Zero();
    while (lambda <= 1e16) {
      Matrix7d a = jtj;
      a.diagonal() += lambda * jtj.diagonal();
      step = a.ldlt().solve(-grad);
      const Vector7d trial = p + step;
      const auto q = problem.physical(trial);
      if (step.allFinite() && physical_qi(q.q_l, q.q_c_mag, q.phi)) {
        const double trial_cost = problem.cost(trial, nullptr, nullptr);
        if (trial_cost <= cost) {
          p = trial;
          cost = problem.cost(p, &r, &jac);
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted || step.cwiseAbs().maxCoeff() < options.step_tolerance) {
      ++iter;
      break;
    }
  }

  const auto q = problem.physical(p);
  out.background.a = q.a;
  out.background.tau = q.tau;
  out.background.alpha = std::remainder(q.alpha_mid + kTwoPi * f_mid * q.tau, kTwoPi);
  out.q_l = q.q_l;
  out.q_c_mag = q.q_c_mag;
  out.f_r = q.f_r;
  out.phi = std::remainder(q.phi, kTwoPi);
  out.iterations = iter;
  out.cost_after = cost;
  return out;
}

}  // namespace resfit
