#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "resfit/errors.hpp"
#include "resfit/info.hpp"

using namespace resfit;

namespace {

// Overcoupled resonator used for the entropy examples.
const ResonatorParams kEntropyDemo{5e9, 5e4, 1e4, 0.0};

}  // namespace

TEST(Info, AbsorptionProbability) {
  EXPECT_EQ(absorption_prob({1.0, 0.0}).p, 0.0);
  EXPECT_DOUBLE_EQ(absorption_prob({0.5, 0.0}).p, 0.25);
  const auto clamped = absorption_prob({-0.2, 0.0});
  EXPECT_EQ(clamped.p, 1.0);
  EXPECT_TRUE(clamped.clamped);
  EXPECT_FALSE(absorption_prob({0.5, 0.0}).clamped);
}

TEST(Info, PointEntropy) {
  EXPECT_EQ(entropy_point(0.0), 0.0);
  EXPECT_EQ(entropy_point(1.0), 0.0);
  EXPECT_DOUBLE_EQ(entropy_point(0.5), 0.5);
  const double peak = entropy_point(1.0 / std::numbers::e);
  EXPECT_NEAR(peak, std::numbers::log2e / std::numbers::e, 1e-15);
  EXPECT_NEAR(peak, 0.5307, 1e-4);
  for (double p : {0.2, 0.3, 0.36, 0.37, 0.4, 0.5}) EXPECT_LE(entropy_point(p), peak);
}

TEST(Info, SetEntropyTotals) {
  const Eigen::VectorXd f = grid_spd(kEntropyDemo.f_r, 10 * kEntropyDemo.linewidth(), 201);
  const EntropyReport r = entropy_of_model(kEntropyDemo, f);
  double sum = 0.0;
  for (const auto& pt : r.per_point) {
    EXPECT_GE(pt.h, 0.0);
    EXPECT_GE(pt.p_r, 0.0);
    EXPECT_LE(pt.p_r, 1.0);
    sum += pt.h;
  }
  EXPECT_NEAR(r.h_set, sum, 1e-12 * sum);
  EXPECT_DOUBLE_EQ(r.h_density, r.h_set / 201.0);
  EXPECT_EQ(r.clamp_count, 0);
}

TEST(Info, OffResonantPointCarriesNoEntropy) {
  Eigen::VectorXd f(1);
  f << kEntropyDemo.f_r + 1e6 * kEntropyDemo.linewidth();
  EXPECT_LT(entropy_of_model(kEntropyDemo, f).h_set, 1e-9);
}

TEST(Info, EmptySweepIsRejected) {
  EXPECT_THROW(entropy_set(Sweep{}), InvalidParameter);
}

TEST(Info, TwoSymmetricPeaksWithDipAtResonance) {
  const Eigen::Index n = 201;
  const Eigen::VectorXd f = grid_spd(kEntropyDemo.f_r, 10 * kEntropyDemo.linewidth(), n);
  const EntropyReport r = entropy_of_model(kEntropyDemo, f);
  for (Eigen::Index i = 0; i < n; ++i)
    EXPECT_NEAR(r.per_point[i].h, r.per_point[n - 1 - i].h, 1e-10);
  // Local maxima on each side and a local minimum at f_r.
  Eigen::Index left = 0;
  for (Eigen::Index i = 1; i < n / 2; ++i)
    if (r.per_point[i].h > r.per_point[left].h) left = i;
  EXPECT_LT(r.per_point[n / 2].h, r.per_point[left].h);
  EXPECT_LT(r.per_point[n / 2].h, r.per_point[n / 2 - 1].h);
}

TEST(Info, PeaksSitWhereAbsorptionIsOneOverE) {
  // p_r(f) = d^2 / (1 + x^2), x = 2 Q_l (f/f_r - 1). The maximum of -p log p
  // is at p = 1/e, i.e. x^2 = e d^2 - 1.
  const double d = kEntropyDemo.diameter();
  const double x_peak = std::sqrt(std::numbers::e * d * d - 1.0);
  const double lw = kEntropyDemo.linewidth();
  const double detuning = x_peak * lw / 2.0;
  EXPECT_NEAR(detuning / (0.5 * lw), 1.0, 0.10);
  // The pointwise entropy along a dense grid peaks at that detuning.
  const Eigen::VectorXd f = grid_spd(kEntropyDemo.f_r, 4 * lw, 40001);
  const EntropyReport r = entropy_of_model(kEntropyDemo, f);
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i < 20000; ++i)
    if (r.per_point[i].h > r.per_point[best].h) best = i;
  EXPECT_NEAR(kEntropyDemo.f_r - r.per_point[best].f, detuning, 2 * (f[1] - f[0]));
  EXPECT_NEAR(r.per_point[best].p_r, 1.0 / std::numbers::e, 1e-4);
}

TEST(Info, RotatedCouplingClamps) {
  // Large phi with Q_l close to |Q_c| pushes |1 - S21| above one.
  const ResonatorParams p{5e9, 1e9, 1.05e4, 1.2};
  const Eigen::VectorXd f = grid_spd(p.f_r, 10 * p.linewidth(), 2001);
  const EntropyReport r = entropy_of_model(p, f);
  EXPECT_GT(r.clamp_count, 0);
}

TEST(Info, SpanDensityPeakOfLinearGrid) {
  // Grid scan of H_set/N over span / linewidth for N = 10001.
  double best_span = 0.0, best = 0.0;
  for (double s = 0.5; s <= 4.0; s += 0.05) {
    const Eigen::VectorXd f = grid_spd(kEntropyDemo.f_r, s * kEntropyDemo.linewidth(), 10001);
    const double h = entropy_of_model(kEntropyDemo, f).h_density;
    if (h > best) best = h, best_span = s;
  }
  EXPECT_GE(best_span, 1.2);
  EXPECT_LE(best_span, 1.8);
}

TEST(Info, HomophasalDensityMatchesArcAverage) {
  // A homophasal grid samples the phase uniformly, so H_set/N is the mean of
  // H over theta on the covered arc. Along the circle p = d^2 cos^2(psi/2)
  // with psi the angle from the resonance point.
  const double d = kEntropyDemo.diameter();
  const auto arc_mean = [d](double half_arc) {
    const int m = 200000;
    double acc = 0.0;
    for (int k = 0; k < m; ++k) {
      const double psi = -half_arc + (k + 0.5) * 2 * half_arc / m;
      acc += entropy_point(d * d * std::pow(std::cos(psi / 2), 2));
    }
    return acc / m;
  };
  for (double s : {2.0, 100.0}) {
    const Eigen::VectorXd f =
        grid_hpd_span(kEntropyDemo.f_r, kEntropyDemo.q_l(), 10001, s * kEntropyDemo.linewidth());
    const double half_arc = 2 * std::atan(s);
    EXPECT_NEAR(entropy_of_model(kEntropyDemo, f).h_density, arc_mean(half_arc), 2e-4) << "span " << s;
  }
}
