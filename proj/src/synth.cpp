#include "resfit/synth.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "resfit/errors.hpp"
#include "resfit/fit.hpp"
#include "resfit/rng.hpp"

namespace resfit {

namespace {

constexpr double kPi = std::numbers::pi;

// Stream indices under NoiseSpec::seed.
constexpr std::uint64_t kStreamRe = 0;
constexpr std::uint64_t kStreamIm = 1;
constexpr std::uint64_t kStreamFr = 2;
constexpr std::uint64_t kStreamTraceBase = 1000;

std::string describe(const ResonatorParams& p, const Background& bg, const NoiseSpec& n) {
  std::ostringstream os;
  os.precision(17);
  os << "synthetic f_r_hz=" << p.f_r << " q_i=" << p.q_i << " q_c_mag=" << p.q_c_mag
     << " phi_rad=" << p.phi << " a=" << bg.a << " alpha_rad=" << bg.alpha
     << " tau_s=" << bg.tau << " sigma_n_re=" << n.sigma_n_re << " sigma_n_im=" << n.sigma_n_im
     << " sigma_fr_hz=" << n.sigma_fr << " fr_spectrum=" << to_string(n.fr_spectrum)
     << " seed=" << n.seed;
  return os.str();
}

Eigen::VectorXd reversed(const Eigen::VectorXd& v) { return v.reverse(); }

}  // namespace

const char* to_string(GridKind kind) { return kind == GridKind::spd ? "spd" : "hpd"; }

const char* to_string(FrSpectrum spectrum) {
  return spectrum == FrSpectrum::white ? "white" : "one_over_sqrt_f";
}

void validate(const NoiseSpec& noise) {
  if (!(noise.sigma_n_re >= 0.0) || !(noise.sigma_n_im >= 0.0) || !(noise.sigma_fr >= 0.0) ||
      !std::isfinite(noise.sigma_n_re) || !std::isfinite(noise.sigma_n_im) ||
      !std::isfinite(noise.sigma_fr))
    throw InvalidParameter("noise standard deviations must be finite and >= 0");
}

Sweep Sweep::with_values(Eigen::VectorXcd values) const {
  Sweep out = *this;
  out.s21 = std::move(values);
  return out;
}

void validate(const Sweep& sweep, Eigen::Index min_points) {
  if (sweep.f.size() != sweep.s21.size())
    throw InvalidParameter("sweep frequency and value lengths differ");
  if (sweep.size() < min_points) {
    std::ostringstream os;
    os << "sweep has " << sweep.size() << " points, need at least " << min_points;
    throw InvalidParameter(os.str());
  }
  for (Eigen::Index i = 0; i < sweep.size(); ++i) {
    const double f = sweep.f[i];
    if (!std::isfinite(f) || f <= 0.0 || !std::isfinite(sweep.s21[i].real()) ||
        !std::isfinite(sweep.s21[i].imag())) {
      std::ostringstream os;
      os << "non-finite or non-positive sample at index " << i;
      throw InvalidParameter(os.str());
    }
    if (i > 0 && !(f > sweep.f[i - 1])) {
      std::ostringstream os;
      os << "frequencies not strictly increasing at index " << i;
      throw InvalidParameter(os.str());
    }
  }
}

Sweep make_sweep(Eigen::VectorXd f, Eigen::VectorXcd s21, GridKind kind,
                 std::string provenance) {
  Sweep s;
  if (f.size() > 0) {
    s.span = f[f.size() - 1] - f[0];
    s.center = 0.5 * (f[0] + f[f.size() - 1]);
  }
  s.f = std::move(f);
  s.s21 = std::move(s21);
  s.grid_kind = kind;
  s.provenance = std::move(provenance);
  return s;
}

Eigen::VectorXd grid_spd(double center, double span, Eigen::Index n_points) {
  if (!(span > 0.0) || !std::isfinite(span)) throw InvalidParameter("span must be > 0");
  if (n_points < 2) throw InvalidParameter("n_points must be >= 2");
  const double lo = center - 0.5 * span;
  const double hi = center + 0.5 * span;
  Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(n_points, lo, hi);
  f[0] = lo;
  f[n_points - 1] = hi;
  return f;
}

Eigen::VectorXd grid_hpd(double f_r, double q_l, Eigen::Index n_points) {
  if (!(q_l > 0.0) || !(f_r > 0.0)) throw InvalidParameter("f_r and q_l must be > 0");
  if (n_points < 5) throw InvalidParameter("HPD grid needs at least 5 points");
  const double n = static_cast<double>(n_points);
  Eigen::VectorXd f(n_points);
  for (Eigen::Index k = 0; k < n_points; ++k) {
    // theta - theta0 = -pi + (2k+1) pi / N, written so the middle of an
    // odd grid is exactly zero.
    const double half = 0.5 * kPi * (2.0 * static_cast<double>(k) + 1.0 - n) / n;
    if (std::abs(half) > 0.5 * kPi - 1e-6)
      throw InvalidParameter("HPD phase too close to +-pi; reduce n_points");
    f[k] = frequency_of_phase(2.0 * half, 0.0, q_l, f_r);
  }
  return reversed(f);
}

Eigen::VectorXd grid_hpd_span(double f_r, double q_l, Eigen::Index n_points, double span) {
  if (!(q_l > 0.0) || !(f_r > 0.0)) throw InvalidParameter("f_r and q_l must be > 0");
  if (!(span > 0.0)) throw InvalidParameter("span must be > 0");
  if (n_points < 5) throw InvalidParameter("HPD grid needs at least 5 points");
  const double half_arc = std::atan(q_l * span / f_r);  // half of the covered phase / 2
  const double m = static_cast<double>(n_points - 1);
  Eigen::VectorXd f(n_points);
  for (Eigen::Index k = 0; k < n_points; ++k) {
    const double half = half_arc * (2.0 * static_cast<double>(k) - m) / m;
    f[k] = frequency_of_phase(2.0 * half, 0.0, q_l, f_r);
  }
  f[0] = f_r + 0.5 * span;
  f[n_points - 1] = f_r - 0.5 * span;
  return reversed(f);
}

Eigen::VectorXd frequency_jitter(Eigen::Index n, FrSpectrum spectrum, std::uint64_t seed) {
  NormalStream normal(seed);
  Eigen::VectorXd white(n);
  for (Eigen::Index i = 0; i < n; ++i) white[i] = normal();
  if (spectrum == FrSpectrum::white || n < 2) return white;

  // Amplitude ~ k^(-1/4) so that the power spectral density goes as 1/sqrt(f).
  Eigen::FFT<double> fft;
  std::vector<double> time(white.data(), white.data() + n);
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, time);
  const auto nn = static_cast<std::size_t>(n);
  freq[0] = 0.0;
  for (std::size_t k = 1; k < nn; ++k) {
    const std::size_t bin = std::min(k, nn - k);
    freq[k] *= std::pow(static_cast<double>(bin), -0.25);
  }
  fft.inv(time, freq);
  Eigen::Map<Eigen::VectorXd> shaped(time.data(), n);
  const double rms = std::sqrt(shaped.squaredNorm() / static_cast<double>(n));
  return shaped / rms;
}

Sweep inject_noise(const ResonatorParams& params, const Background& bg,
                   const Eigen::VectorXd& freqs, const NoiseSpec& noise) {
  validate(params);
  validate(bg);
  validate(noise);
  if (freqs.size() == 0) throw InvalidParameter("frequency list is empty");

  const Eigen::Index n = freqs.size();
  Eigen::VectorXd jitter = Eigen::VectorXd::Zero(n);
  if (noise.sigma_fr > 0.0)
    jitter = noise.sigma_fr *
             frequency_jitter(n, noise.fr_spectrum, derive_seed(noise.seed, kStreamFr));

  const double q_l = params.q_l();
  Eigen::VectorXcd s21(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s21[i] = bg.factor(freqs[i]) *
             s21_notch(freqs[i], q_l, params.q_c_mag, params.f_r + jitter[i], params.phi);

  if (noise.sigma_n_re > 0.0) {
    NormalStream re(derive_seed(noise.seed, kStreamRe));
    for (Eigen::Index i = 0; i < n; ++i) s21[i] += noise.sigma_n_re * re();
  }
  if (noise.sigma_n_im > 0.0) {
    NormalStream im(derive_seed(noise.seed, kStreamIm));
    for (Eigen::Index i = 0; i < n; ++i) s21[i] += std::complex<double>(0.0, noise.sigma_n_im * im());
  }

  Sweep sweep = make_sweep(freqs, std::move(s21), GridKind::spd, describe(params, bg, noise));
  return sweep;
}

TraceAveragePlan trace_average_plan(double p_vna_dbm) {
  if (!std::isfinite(p_vna_dbm)) throw InvalidParameter("p_vna must be finite");
  TraceAveragePlan plan;
  plan.p_vna = p_vna_dbm;
  if (p_vna_dbm < -50.0) {
    const double d = p_vna_dbm + 50.0;
    plan.n_tr = std::lround(d * d + 20.0);
  } else {
    plan.n_tr = 20;
  }
  return plan;
}

Sweep inject_noise_averaged(const ResonatorParams& params, const Background& bg,
                            const Eigen::VectorXd& freqs, const NoiseSpec& noise,
                            const TraceAveragePlan& plan, AveragingMode mode) {
  if (plan.n_tr < 1) throw InvalidParameter("trace count must be >= 1");
  if (mode == AveragingMode::scaled) {
    NoiseSpec scaled = noise;
    const double k = 1.0 / std::sqrt(static_cast<double>(plan.n_tr));
    scaled.sigma_n_re *= k;
    scaled.sigma_n_im *= k;
    return inject_noise(params, bg, freqs, scaled);
  }
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(freqs.size());
  for (long t = 0; t < plan.n_tr; ++t) {
    NoiseSpec trace = noise;
    trace.seed = derive_seed(noise.seed, kStreamTraceBase + static_cast<std::uint64_t>(t));
    acc += inject_noise(params, bg, freqs, trace).s21;
  }
  acc /= static_cast<double>(plan.n_tr);
  Sweep sweep = inject_noise(params, bg, freqs, NoiseSpec{});
  sweep.s21 = std::move(acc);
  sweep.provenance += " n_tr=" + std::to_string(plan.n_tr) + " literal";
  return sweep;
}

HpdPlan plan_hpd_from_scan(const Sweep& coarse, Eigen::Index n_points, double span) {
  validate(coarse, 5);
  if (n_points < 5) throw InvalidParameter("HPD grid needs at least 5 points");
  const DelayResult delay = remove_delay(coarse);
  const CircleGeometry circle = fit_circle_algebraic(delay.sweep.s21);
  const PhaseFit phase = fit_phase(delay.sweep, circle);

  HpdPlan plan;
  plan.theta0 = phase.theta0;
  plan.q_l = phase.q_l;
  plan.f_r = phase.f_r;
  const double extent = coarse.f[coarse.size() - 1] - coarse.f[0];
  plan.coverage_linewidths = extent / (phase.f_r / phase.q_l);
  plan.coverage_warning = plan.coverage_linewidths < 1.0;
  plan.frequencies = span > 0.0 ? grid_hpd_span(phase.f_r, phase.q_l, n_points, span)
                                : grid_hpd(phase.f_r, phase.q_l, n_points);
  return plan;
}

}  // namespace resfit
