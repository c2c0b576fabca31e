#pragma once

// Shannon-entropy view of a sweep: each point is treated as a binary
// absorption event with probability p_r = |1 - S21|^2.

#include <complex>
#include <vector>

#include <Eigen/Core>

#include "resfit/model.hpp"
#include "resfit/synth.hpp"

namespace resfit {

struct AbsorptionProbability {
  double p = 0.0;
  bool clamped = false;  // |1 - S21|^2 fell outside [0, 1]
};

AbsorptionProbability absorption_prob(std::complex<double> s21);

// -p log2(p), with H(0) = 0.
double entropy_point(double p);

struct EntropyPoint {
  double f;    // Hz
  double p_r;
  double h;    // bits
};

struct EntropyReport {
  std::vector<EntropyPoint> per_point;
  double h_set = 0.0;      // bits
  double h_density = 0.0;  // bits per point
  long clamp_count = 0;
};

// Entropy of a background-calibrated sweep. Throws InvalidParameter when the
// sweep is empty.
EntropyReport entropy_set(const Sweep& sweep);

// Entropy of the noiseless calibrated model on the given grid.
EntropyReport entropy_of_model(const ResonatorParams& params, const Eigen::VectorXd& freqs);

}  // namespace resfit
