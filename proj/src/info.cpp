#include "resfit/info.hpp"

#include <cmath>

#include "resfit/errors.hpp"

namespace resfit {

AbsorptionProbability absorption_prob(std::complex<double> s21) {
  const double p = std::norm(1.0 - s21);
  if (p > 1.0) return {1.0, true};
  return {p, false};
}

double entropy_point(double p) {
  if (p <= 0.0) return 0.0;
  return -p * std::log2(p);
}

EntropyReport entropy_set(const Sweep& sweep) {
  if (sweep.size() == 0) throw InvalidParameter("entropy of an empty sweep");
  EntropyReport report;
  report.per_point.reserve(static_cast<std::size_t>(sweep.size()));
  for (Eigen::Index i = 0; i < sweep.size(); ++i) {
    const auto p = absorption_prob(sweep.s21[i]);
    const double h = entropy_point(p.p);
    report.per_point.push_back({sweep.f[i], p.p, h});
    report.h_set += h;
    if (p.clamped) ++report.clamp_count;
  }
  report.h_density = report.h_set / static_cast<double>(sweep.size());
  return report;
}

EntropyReport entropy_of_model(const ResonatorParams& params, const Eigen::VectorXd& freqs) {
  return entropy_set(inject_noise(params, Background::identity(), freqs, NoiseSpec{}));
}

}  // namespace resfit
