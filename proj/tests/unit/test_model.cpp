#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "resfit/errors.hpp"
#include "resfit/model.hpp"

using namespace resfit;

namespace {

constexpr double kPi = std::numbers::pi;

// Relative difference with a floor so that exact zeros compare sensibly.
double rel(std::complex<long double> a, std::complex<long double> b) {
  const long double scale = std::max(std::abs(b), 1e-300L);
  return static_cast<double>(std::abs(a - b) / scale);
}

}  // namespace

TEST(Model, CriticalCouplingAtResonance) {
  const ResonatorParams p{5e9, 2e4, 2e4, 0.0};
  const auto s = s21_ideal(p, Background::identity(), p.f_r);
  EXPECT_NEAR(s.real(), 0.5, 1e-15);
  EXPECT_NEAR(s.imag(), 0.0, 1e-15);
}

TEST(Model, HalfLinewidthDetuning) {
  const ResonatorParams p{5e9, 2e4, 2e4, 0.0};
  ASSERT_DOUBLE_EQ(p.q_l(), 1e4);
  // Denominator 1 + i: 1 - 0.5 / (1 + i) = 0.75 + 0.25i.
  const auto s = s21_ideal(p, Background::identity(), p.f_r * (1.0 + 1.0 / (2.0 * p.q_l())));
  EXPECT_NEAR(s.real(), 0.75, 1e-12);
  EXPECT_NEAR(s.imag(), 0.25, 1e-12);
}

TEST(Model, OffResonantLimitIsMonotone) {
  const ResonatorParams p{5e9, 3e4, 1e4, 0.4};
  const double lw = p.linewidth();
  for (double side : {-1.0, 1.0}) {
    double prev = std::abs(s21_ideal(p, Background::identity(), p.f_r) - 1.0);
    for (double k = 1.0; k <= 2048.0; k *= 2.0) {
      const double d = std::abs(s21_ideal(p, Background::identity(), p.f_r + side * k * lw) - 1.0);
      EXPECT_LT(d, prev);
      prev = d;
    }
    EXPECT_LT(prev, 1e-3);
  }
}

TEST(Model, BackgroundFactor) {
  const ResonatorParams p{4.364e9, 5.181e6, 6.73e4, 0.668};
  const Background bg{1.149, 1.597, -8.825e-11};
  const double f = 4.3641e9;
  const auto expected = std::polar(1.149, 1.597 - 2.0 * kPi * f * -8.825e-11) *
                        s21_ideal(p, Background::identity(), f);
  EXPECT_LT(std::abs(s21_ideal(p, bg, f) - expected), 1e-12);
}

TEST(Model, ValidationRejectsBadParameters) {
  EXPECT_THROW(validate(ResonatorParams{-1.0, 1e4, 1e4, 0.0}), InvalidParameter);
  EXPECT_THROW(validate(ResonatorParams{5e9, 0.0, 1e4, 0.0}), InvalidParameter);
  EXPECT_THROW(validate(ResonatorParams{5e9, 1e4, 1e4, kPi / 2}), InvalidParameter);
  EXPECT_THROW(validate(Background{0.0, 0.0, 0.0}), InvalidParameter);
  EXPECT_THROW(s21_ideal(ResonatorParams{5e9, 1e4, 1e4, 0.0}, Background::identity(), NAN),
               InvalidParameter);
}

TEST(Model, GradientMatchesCentralDifferences) {
  // Long double central differences. The f_r and f steps scale with the
  // linewidth, the others with the value.
  using L = long double;
  const double phis[] = {0.0, kPi / 6, -0.668};
  double worst = 0.0;
  for (double phi : phis) {
    const L q_l = 8.3e3L, q_c = 1.2e4L, f_r = 5e9L, ph = phi;
    for (double x : {-7.0, -1.0, -0.5, -0.1, 0.0, 0.3, 1.0, 4.0}) {
      const L f = f_r * (1 + static_cast<L>(x) / (2 * q_l));
      const auto g = s21_notch_gradient<L>(f, q_l, q_c, f_r, ph);
      const auto fd = [&](int k) {
        L p[4] = {q_l, q_c, f_r, ph};
        const L h = k == 3 ? 1e-6L : k == 2 ? 1e-5L * f_r / q_l : 1e-6L * p[k];
        L up[4] = {p[0], p[1], p[2], p[3]}, dn[4] = {p[0], p[1], p[2], p[3]};
        up[k] += h;
        dn[k] -= h;
        return (s21_notch<L>(f, up[0], up[1], up[2], up[3]) -
                s21_notch<L>(f, dn[0], dn[1], dn[2], dn[3])) /
               (2 * h);
      };
      worst = std::max({worst, rel(fd(0), g.d_q_l), rel(fd(1), g.d_q_c_mag),
                        rel(fd(2), g.d_f_r), rel(fd(3), g.d_phi)});
      const L h = 1e-5L * f_r / q_l;
      const auto t_fd = (s21_notch<L>(f + h, q_l, q_c, f_r, ph) -
                         s21_notch<L>(f - h, q_l, q_c, f_r, ph)) /
                        (2 * h);
      worst = std::max(worst, rel(t_fd, s21_notch_tangent<L>(f, q_l, q_c, f_r, ph)));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Model, PhaseRelationAndInverse) {
  const double theta0 = 0.7, q_l = 1e4, f_r = 5e9;
  EXPECT_DOUBLE_EQ(phase_of_frequency(f_r, theta0, q_l, f_r), theta0);
  EXPECT_NEAR(frequency_of_phase(theta0 + kPi / 2, theta0, q_l, f_r), f_r * (1 - 1 / (2 * q_l)),
              1e-6);
  EXPECT_NEAR(frequency_of_phase(theta0 - kPi / 2, theta0, q_l, f_r), f_r * (1 + 1 / (2 * q_l)),
              1e-6);
  for (double x : {-3.0, -0.2, 0.9}) {
    const double f = f_r * (1 + x / (2 * q_l));
    EXPECT_NEAR(frequency_of_phase(phase_of_frequency(f, theta0, q_l, f_r), theta0, q_l, f_r), f,
                1e-5);
  }
}

TEST(Model, DfDthetaExamples) {
  const ResonatorParams p{5e9, 5e4, 1e4, 0.0};
  const double lw = p.linewidth();
  EXPECT_NEAR(df_dtheta(p, p.f_r), lw / 4, 1e-12 * lw);
  EXPECT_NEAR(df_dtheta(p, p.f_r + lw), 1.25 * lw, 1e-9 * lw);
}

TEST(Model, PhasalDensityExamples) {
  const ResonatorParams p{5e9, 5e4, 1e4, 0.0};
  const double lw = p.linewidth();
  EXPECT_NEAR(phasal_density(p, 10 * lw, 10001, p.f_r), 250.025, 1e-9);
  EXPECT_NEAR(phasal_density(p, 10 * lw, 10001, p.f_r + lw), 1250.125, 1e-6);
  EXPECT_NEAR(phasal_density(p, 10 * lw, 10001, p.f_r - lw), 1250.125, 1e-6);
}

TEST(Model, PhasalDensityMatchesNumericalSpacing) {
  // 1/dtheta between adjacent points of a linear sweep, with theta measured
  // as the angle about the circle center of the generated data.
  const ResonatorParams p{5e9, 5e4, 1e4, 0.0};
  const double lw = p.linewidth();
  const long n = 2001;
  const double span = 10 * lw;
  const std::complex<double> center(1.0 - p.diameter() / 2, 0.0);
  double worst = 0.0;
  for (long i = 0; i + 1 < n; ++i) {
    const double f0 = p.f_r - span / 2 + span * i / (n - 1);
    const double f1 = p.f_r - span / 2 + span * (i + 1) / (n - 1);
    const double t0 = std::arg(s21_ideal(p, Background::identity(), f0) - center);
    const double t1 = std::arg(s21_ideal(p, Background::identity(), f1) - center);
    double dt = std::abs(t1 - t0);
    if (dt > kPi) dt = 2 * kPi - dt;
    const double numeric = 1.0 / dt;
    // Density in points per radian of a sweep with n - 1 intervals.
    const double analytic = phasal_density(p, span, n - 1, 0.5 * (f0 + f1));
    worst = std::max(worst, std::abs(numeric / analytic - 1.0));
  }
  EXPECT_LT(worst, 0.01);
}

TEST(Model, PhotonNumberHandEvaluation) {
  // f_r = 5 GHz, Q_l = 8333.33 (Q_i = 5e4), |Q_c| = 1e4, phi = 0, 1 fW:
  // 1e-15 / (2 pi 6.62607015e-34 (5e9)^2) * 2 (8333.33)^2 / 1e4
  const ResonatorParams p{5e9, 5e4, 1e4, 0.0};
  const double hand = 1e-15 / (2 * 3.141592653589793 * 6.62607015e-34 * 2.5e19) *
                      (2 * 8333.333333333334 * 8333.333333333334 / 1e4);
  EXPECT_NEAR(hand, 133.4, 0.005 * 133.4);
  EXPECT_NEAR(photon_number(p, 1e-15), hand, 1e-9 * hand);
}

TEST(Model, PhotonNumberEnergyBalance) {
  // At phi = 0 the loss fraction 1 - |S21|^2 - |S11|^2 with |S11| = Q_l/|Q_c|
  // gives <n> h f_r = P_loss Q_i / (2 pi f_r).
  const ResonatorParams p{6e9, 2e5, 3e4, 0.0};
  const double d = p.q_l() / p.q_c_mag;
  const double s21 = std::abs(s21_ideal(p, Background::identity(), p.f_r));
  const double loss = 1.0 - s21 * s21 - d * d;
  const double p_chip = 3e-16;
  const double expected = p_chip * loss * p.q_i / (2 * kPi * p.f_r) / (kPlanck * p.f_r);
  EXPECT_NEAR(photon_number(p, p_chip), expected, 1e-9 * expected);
}

TEST(Model, PhotonNumberLimits) {
  const ResonatorParams p{5e9, 5e4, 1e4, kPi / 2};
  EXPECT_EQ(photon_number(p, 1e-12), 0.0);
  const ResonatorParams q{5e9, 5e4, 1e4, 0.3};
  EXPECT_EQ(photon_number(q, 0.0), 0.0);
  EXPECT_NEAR(photon_number(q, 2e-15), 2 * photon_number(q, 1e-15), 1e-12 * photon_number(q, 2e-15));
  const ResonatorParams q_neg{5e9, 5e4, 1e4, -0.3};
  EXPECT_DOUBLE_EQ(photon_number(q, 1e-15), photon_number(q_neg, 1e-15));
  EXPECT_THROW(photon_number(q, -1.0), InvalidParameter);
}

TEST(Model, OnResonancePowerCoefficients) {
  // Q_l = |Q_c|: Q_i infinite is not representable, so take Q_i huge.
  const ResonatorParams full{5e9, 1e300, 1e4, 0.0};
  EXPECT_NEAR(on_resonance_power_coefficients(full).s21_sq, 0.0, 1e-12);
  // Q_l = |Q_c|/2 means Q_i = |Q_c|.
  const auto half = on_resonance_power_coefficients({5e9, 1e4, 1e4, 0.0});
  EXPECT_NEAR(half.s21_sq, 0.25, 1e-15);
  EXPECT_NEAR(half.s11_sq, 0.25, 1e-15);
  // |S21|^2 agrees with the model at f_r for a rotated coupling.
  const ResonatorParams rot{5e9, 4e4, 1e4, 0.5};
  EXPECT_NEAR(on_resonance_power_coefficients(rot).s21_sq,
              std::norm(s21_ideal(rot, Background::identity(), rot.f_r)), 1e-14);
}

TEST(Model, PowerConversion) {
  EXPECT_DOUBLE_EQ(dbm_to_watts(0.0), 1e-3);
  EXPECT_DOUBLE_EQ(chip_power_watts(0.0, 0.0), 1e-3);
  EXPECT_NEAR(chip_power_watts(-35.0, -73.0), std::pow(10.0, -10.8) * 1e-3, 1e-30);
}
