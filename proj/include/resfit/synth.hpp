#pragma once

// Frequency grids (linear and homophasal), noise injection and synthetic
// sweep generation.

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "resfit/model.hpp"

namespace resfit {

enum class GridKind { spd, hpd };
enum class FrSpectrum { white, one_over_sqrt_f };

const char* to_string(GridKind kind);
const char* to_string(FrSpectrum spectrum);

struct NoiseSpec {
  double sigma_n_re = 0.0;
  double sigma_n_im = 0.0;
  double sigma_fr = 0.0;  // Hz
  FrSpectrum fr_spectrum = FrSpectrum::white;
  std::uint64_t seed = 0;

  static NoiseSpec isotropic(double sigma_n, double sigma_fr, std::uint64_t seed) {
    return {sigma_n, sigma_n, sigma_fr, FrSpectrum::white, seed};
  }
  bool noiseless() const { return sigma_n_re == 0.0 && sigma_n_im == 0.0 && sigma_fr == 0.0; }
};

void validate(const NoiseSpec& noise);

// A measured or synthetic frequency sweep. Frequencies are strictly
// increasing; span and center describe the requested grid, which may be
// wider than the sampled extent.
struct Sweep {
  Eigen::VectorXd f;
  Eigen::VectorXcd s21;
  GridKind grid_kind = GridKind::spd;
  double span = 0.0;
  double center = 0.0;
  std::string provenance;

  Eigen::Index size() const { return f.size(); }
  ComplexSample sample(Eigen::Index i) const { return {f[i], s21[i]}; }

  // Same metadata, new transmission values.
  Sweep with_values(Eigen::VectorXcd values) const;
};

// Checks ordering, finiteness and a minimum length. Throws InvalidParameter
// naming the first offending index.
void validate(const Sweep& sweep, Eigen::Index min_points);

// Builds a Sweep from raw vectors, filling span/center from the extent.
Sweep make_sweep(Eigen::VectorXd f, Eigen::VectorXcd s21, GridKind kind = GridKind::spd,
                 std::string provenance = {});

// n_points uniformly spaced over [center - span/2, center + span/2].
Eigen::VectorXd grid_spd(double center, double span, Eigen::Index n_points);

// Homophasal grid over the full circle: theta_k - theta0 = -pi + (2k+1) pi / N,
// mapped through the inverse phase relation and returned in ascending
// frequency. Odd N places the middle point exactly on f_r.
Eigen::VectorXd grid_hpd(double f_r, double q_l, Eigen::Index n_points);

// Homophasal grid restricted to [f_r - span/2, f_r + span/2]: N points
// equally spaced in phase over the arc that the span covers, endpoints
// inclusive, so the extent matches a linear sweep of the same span.
Eigen::VectorXd grid_hpd_span(double f_r, double q_l, Eigen::Index n_points, double span);

// Evaluates the model on freqs with resonance-frequency jitter and additive
// complex Gaussian noise. Noise components come from independent streams
// derived from noise.seed and are indexed by point rank, so two grids of
// equal length see identical draws.
Sweep inject_noise(const ResonatorParams& params, const Background& bg,
                   const Eigen::VectorXd& freqs, const NoiseSpec& noise);

// Standard-normal jitter sequence of length n shaped to the requested
// spectrum and normalized to unit sample variance for the 1/sqrt(f) case.
Eigen::VectorXd frequency_jitter(Eigen::Index n, FrSpectrum spectrum, std::uint64_t seed);

struct TraceAveragePlan {
  double p_vna = 0.0;  // dBm
  long n_tr = 1;
};

TraceAveragePlan trace_average_plan(double p_vna_dbm);

enum class AveragingMode { scaled, literal };

// Emulates averaging n_tr traces. `scaled` divides the Gaussian noise by
// sqrt(n_tr); `literal` generates n_tr independent sweeps (each with its own
// jitter) and averages them.
Sweep inject_noise_averaged(const ResonatorParams& params, const Background& bg,
                            const Eigen::VectorXd& freqs, const NoiseSpec& noise,
                            const TraceAveragePlan& plan,
                            AveragingMode mode = AveragingMode::scaled);

struct HpdPlan {
  Eigen::VectorXd frequencies;
  double theta0 = 0.0;
  double q_l = 0.0;
  double f_r = 0.0;
  double coverage_linewidths = 0.0;  // coarse span / estimated linewidth
  bool coverage_warning = false;     // coarse scan spans less than one linewidth
};

// Two-pass protocol: phase-fit a coarse sweep (after delay removal and circle
// centering) and lay out an HPD grid from the estimates. span <= 0 selects
// the full-circle grid, otherwise grid_hpd_span.
HpdPlan plan_hpd_from_scan(const Sweep& coarse, Eigen::Index n_points, double span = 0.0);

}  // namespace resfit
