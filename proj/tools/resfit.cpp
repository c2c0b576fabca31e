// resfit: simulate, fit and benchmark notch-type resonator sweeps.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "resfit/bench.hpp"
#include "resfit/errors.hpp"
#include "resfit/fit.hpp"
#include "resfit/info.hpp"
#include "resfit/io.hpp"
#include "resfit/model.hpp"
#include "resfit/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kValidation = 2, kFitFailure = 3, kDegraded = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format = "json";
  bool dry_run = false;
};

fs::path out_path(const Globals& g, const std::string& file) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / file;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void print_nested(const std::exception& e, int depth = 0) {
  std::cerr << (depth == 0 ? "error: " : "  caused by: ") << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_nested(inner, depth + 1);
  }
}

int exit_code(const std::exception& e) {
  if (const auto* stage = dynamic_cast<const resfit::StageError*>(&e))
    return stage->stage() == "input" ? kValidation : kFitFailure;
  if (dynamic_cast<const resfit::DegreesOfFreedomError*>(&e) ||
      dynamic_cast<const resfit::FitFailure*>(&e) ||
      dynamic_cast<const resfit::NonphysicalQi*>(&e) ||
      dynamic_cast<const resfit::RankDeficiency*>(&e) ||
      dynamic_cast<const resfit::DegenerateGeometry*>(&e) ||
      dynamic_cast<const resfit::PhaseUnwrapError*>(&e))
    return kFitFailure;
  if (dynamic_cast<const resfit::ParseError*>(&e) ||
      dynamic_cast<const resfit::InvalidParameter*>(&e) ||
      dynamic_cast<const json::exception*>(&e))
    return kValidation;
  return kFailure;
}

resfit::ResonatorParams params_from(resfit::StrictObject& o) {
  resfit::ResonatorParams p;
  p.f_r = o.number("f_r_hz");
  p.q_i = o.number("q_i");
  p.q_c_mag = o.number("q_c_mag");
  p.phi = o.number("phi_rad");
  resfit::validate(p);
  return p;
}

resfit::Background background_from(resfit::StrictObject& o) {
  resfit::StrictObject b = o.object("background");
  resfit::Background bg{b.number("a"), b.number("alpha_rad"), b.number("tau_s")};
  b.finish();
  resfit::validate(bg);
  return bg;
}

// Grid keys shared by simulate and entropy: grid, n_points and either
// span_hz or span_linewidths.
Eigen::VectorXd grid_from(resfit::StrictObject& o, const resfit::ResonatorParams& p,
                          resfit::GridKind& kind, double& span_hz) {
  const std::string grid = o.string("grid");
  if (grid != "spd" && grid != "hpd") throw resfit::InvalidParameter("grid must be 'spd' or 'hpd'");
  kind = grid == "spd" ? resfit::GridKind::spd : resfit::GridKind::hpd;
  const long n = o.integer("n_points");
  if (n < 1) throw resfit::InvalidParameter("n_points must be >= 1");
  if (o.has("span_hz") == o.has("span_linewidths"))
    throw resfit::InvalidParameter("give exactly one of span_hz and span_linewidths");
  span_hz = o.has("span_hz") ? o.number("span_hz") : o.number("span_linewidths") * p.linewidth();
  if (!(span_hz > 0.0)) throw resfit::InvalidParameter("span must be > 0");
  return kind == resfit::GridKind::spd ? resfit::grid_spd(p.f_r, span_hz, n)
                                       : resfit::grid_hpd_span(p.f_r, p.q_l(), n, span_hz);
}

int cmd_simulate(const Globals& g, const std::string& config_path) {
  const json j = resfit::read_json_file(config_path);
  resfit::StrictObject o(j);
  const std::string name = o.string_or("name", stem_of(config_path));
  resfit::Truth truth;
  truth.params = params_from(o);
  truth.background = background_from(o);
  const Eigen::VectorXd freqs = grid_from(o, truth.params, truth.grid, truth.span_hz);
  truth.n_points = freqs.size();
  {
    resfit::StrictObject n = o.object("noise");
    const double sigma_n = n.number_or("sigma_n", -1.0);
    truth.noise.sigma_n_re = n.has("sigma_n_re") ? n.number("sigma_n_re") : sigma_n;
    truth.noise.sigma_n_im = n.has("sigma_n_im") ? n.number("sigma_n_im") : sigma_n;
    if (truth.noise.sigma_n_re < 0.0 || truth.noise.sigma_n_im < 0.0)
      throw resfit::InvalidParameter("noise needs sigma_n (or sigma_n_re and sigma_n_im) >= 0");
    truth.noise.sigma_fr = n.number("sigma_fr_hz");
    const std::string spectrum = n.string_or("fr_spectrum", "white");
    if (spectrum == "white") truth.noise.fr_spectrum = resfit::FrSpectrum::white;
    else if (spectrum == resfit::to_string(resfit::FrSpectrum::one_over_sqrt_f))
      truth.noise.fr_spectrum = resfit::FrSpectrum::one_over_sqrt_f;
    else throw resfit::InvalidParameter("noise.fr_spectrum: unknown value '" + spectrum + "'");
    truth.noise.seed = n.has("seed") ? n.raw("seed").get<std::uint64_t>() : 0;
    n.finish();
  }
  if (g.seed) truth.noise.seed = *g.seed;
  std::optional<double> p_vna;
  if (o.has("p_vna_dbm")) p_vna = o.number("p_vna_dbm");
  const std::string averaging = o.string_or("averaging", "scaled");
  if (averaging != "scaled" && averaging != "literal")
    throw resfit::InvalidParameter("averaging must be 'scaled' or 'literal'");
  o.finish();
  resfit::validate(truth.noise);

  if (g.dry_run) {
    std::cout << "simulate: would write " << truth.n_points << " points to "
              << (fs::path(g.out_dir) / (name + ".csv")).string() << '\n';
    return kOk;
  }
  resfit::Sweep sweep;
  json sidecar = resfit::to_json(truth);
  if (p_vna) {
    const auto plan = resfit::trace_average_plan(*p_vna);
    sweep = resfit::inject_noise_averaged(
        truth.params, truth.background, freqs, truth.noise, plan,
        averaging == "literal" ? resfit::AveragingMode::literal : resfit::AveragingMode::scaled);
    sidecar["p_vna_dbm"] = *p_vna;
    sidecar["n_traces"] = plan.n_tr;
    sidecar["averaging"] = averaging;
  } else {
    sweep = resfit::inject_noise(truth.params, truth.background, freqs, truth.noise);
  }
  const fs::path csv = out_path(g, name + ".csv");
  resfit::write_sweep_file(csv, sweep);
  resfit::write_json_file(out_path(g, name + "_truth.json"), sidecar);
  std::cout << "simulate: wrote " << sweep.size() << " points to " << csv.string() << '\n';
  return kOk;
}

struct FitFlags {
  bool no_refine = false;
  bool no_polish = false;
  bool dof6 = false;
  std::string output;
};

int cmd_fit(const Globals& g, const std::string& input, const FitFlags& flags) {
  const resfit::Sweep sweep = resfit::read_sweep_file(input);
  resfit::FitOptions options;
  options.delay.refine = !flags.no_refine;
  options.polish.enabled = !flags.no_polish;
  options.dof = flags.dof6 ? resfit::DofMode::n_minus_6 : resfit::DofMode::n_minus_4;
  if (g.dry_run) {
    std::cout << "fit: read " << sweep.size() << " points from " << input << '\n';
    return kOk;
  }
  const resfit::FitResult result = resfit::fit_full(sweep, options);
  const json j = resfit::to_json(result);
  const std::string ext = g.format == "csv" ? ".csv" : ".json";
  const fs::path out = flags.output.empty() ? out_path(g, stem_of(input) + "_fit" + ext)
                                            : fs::path(flags.output);
  if (g.format == "csv") {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw resfit::InvalidParameter("cannot write '" + out.string() + "'");
    os << "key,value\n";
    for (const char* key : {"q_l", "q_c_mag", "q_i", "f_r_hz", "phi_rad", "theta0_rad", "a",
                            "alpha_rad", "tau_s", "sigma_q_l", "sigma_q_c_mag", "sigma_q_i",
                            "sigma_f_r_hz", "sigma_phi_rad", "chi2"})
      os << key << ',' << resfit::format_double(j.at(key).get<double>()) << '\n';
    os << "n_points," << result.n_points << '\n';
  } else {
    resfit::write_json_file(out, j);
  }
  std::cout << "fit: Q_i = " << result.q_i << " +- " << result.sigma.q_i << ", |Q_c| = "
            << result.q_c_mag << ", f_r = " << resfit::format_double(result.f_r) << " Hz -> "
            << out.string() << '\n';
  for (const auto& w : result.warnings) std::cout << "warning: " << w << '\n';
  return kOk;
}

int cmd_hpd_plan(const Globals& g, const std::string& input, long n_points, double span_hz) {
  if (n_points < 5) throw resfit::InvalidParameter("n_points must be >= 5 (got " + std::to_string(n_points) + ")");
  const resfit::Sweep coarse = resfit::read_sweep_file(input);
  const resfit::HpdPlan plan = resfit::plan_hpd_from_scan(coarse, n_points, span_hz);
  if (g.dry_run) {
    std::cout << "hpd-plan: " << plan.frequencies.size() << " frequencies around f_r = "
              << resfit::format_double(plan.f_r) << " Hz\n";
    return kOk;
  }
  const fs::path txt = out_path(g, stem_of(input) + "_plan.txt");
  {
    std::ofstream os(txt, std::ios::binary);
    if (!os) throw resfit::InvalidParameter("cannot write '" + txt.string() + "'");
    resfit::write_frequency_plan(os, plan.frequencies);
  }
  json j;
  j["theta0_rad"] = plan.theta0;
  j["q_l"] = plan.q_l;
  j["f_r_hz"] = plan.f_r;
  j["n_points"] = plan.frequencies.size();
  j["span_hz"] = span_hz > 0.0 ? span_hz : 0.0;
  j["coverage_linewidths"] = plan.coverage_linewidths;
  j["coverage_warning"] = plan.coverage_warning;
  resfit::write_json_file(out_path(g, stem_of(input) + "_plan.json"), j);
  std::cout << "hpd-plan: " << plan.frequencies.size() << " frequencies -> " << txt.string() << '\n';
  if (plan.coverage_warning)
    std::cout << "warning: coarse scan covers less than one linewidth\n";
  return kOk;
}

int cmd_bench(const Globals& g, const std::string& config_path) {
  resfit::BenchConfig cfg = resfit::bench_config_from_json(resfit::read_json_file(config_path));
  if (g.seed) cfg.master_seed = *g.seed;
  const unsigned threads = resfit::default_threads();
  std::cout << "bench " << cfg.name << " (" << resfit::to_string(cfg.kind) << "): "
            << cfg.cell_count() << " cells x " << cfg.trials_per_cell << " trials = "
            << cfg.trial_count() << " fits on " << threads << " worker(s)\n";
  if (g.dry_run) return kOk;
  {
    // Preflight: time one fit at the largest N to estimate the run time.
    resfit::BenchConfig probe = cfg;
    probe.q_i = {cfg.q_i.front()};
    probe.sigma_n = {cfg.sigma_n.front()};
    probe.sigma_fr = {cfg.sigma_fr.front()};
    probe.n_points = {*std::max_element(cfg.n_points.begin(), cfg.n_points.end())};
    probe.span_linewidths = {cfg.span_linewidths.front()};
    probe.trials_per_cell = 1;
    probe.kind = resfit::BenchKind::coupling;
    const auto t0 = std::chrono::steady_clock::now();
    (void)resfit::run_cells(probe, 1);
    const double per_fit = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "estimated time: " << std::lround(per_fit * static_cast<double>(cfg.trial_count()) / threads)
              << " s\n";
  }
  const resfit::BenchSummary s = resfit::run_bench(cfg, threads, g.out_dir);
  std::cout << "bench: " << s.trials << " trials, " << s.failures << " failures ("
            << 100.0 * s.converged_fraction << "% converged) in " << s.seconds << " s -> "
            << g.out_dir << '\n';
  if (s.converged_fraction < 0.99) {
    std::cout << "bench degraded: fewer than 99% of trials converged\n";
    return kDegraded;
  }
  return kOk;
}

int cmd_photons(const Globals& g, const std::string& fit_path, double p_vna_dbm,
                double attenuation_db) {
  const resfit::FitResult fit = resfit::fit_result_from_json(resfit::read_json_file(fit_path));
  const resfit::ResonatorParams params{fit.f_r, fit.q_i, fit.q_c_mag, fit.phi};
  if (!(params.f_r > 0.0) || !(params.q_i > 0.0) || !(params.q_c_mag > 0.0))
    throw resfit::InvalidParameter("fit result needs positive f_r_hz, q_i and q_c_mag");
  const double p_chip = resfit::chip_power_watts(p_vna_dbm, attenuation_db);
  const double n = resfit::photon_number(params, p_chip);
  std::cout << "photons: P_vna = " << p_vna_dbm << " dBm, attenuation = " << attenuation_db
            << " dB, P_chip = " << p_chip << " W, <n> = " << n << '\n';
  if (std::abs(fit.phi) == std::numbers::pi / 2)
    std::cout << "warning: phi = pi/2, the resonator does not load; photon number is zero\n";
  if (g.dry_run) return kOk;
  json j;
  j["p_vna_dbm"] = p_vna_dbm;
  j["attenuation_db"] = attenuation_db;
  j["p_chip_w"] = p_chip;
  j["photon_number"] = n;
  j["f_r_hz"] = fit.f_r;
  j["q_i"] = fit.q_i;
  j["q_c_mag"] = fit.q_c_mag;
  j["phi_rad"] = fit.phi;
  resfit::write_json_file(out_path(g, stem_of(fit_path) + "_photons.json"), j);
  return kOk;
}

int cmd_entropy(const Globals& g, const std::string& input, const std::string& params_path,
                bool calibrate) {
  if (input.empty() == params_path.empty())
    throw resfit::InvalidParameter("entropy needs either a sweep file or --params");
  resfit::EntropyReport report;
  std::string stem;
  if (!input.empty()) {
    resfit::Sweep sweep = resfit::read_sweep_file(input);
    if (sweep.size() == 0) throw resfit::InvalidParameter("entropy of an empty sweep");
    if (calibrate) {
      const resfit::FitResult fit = resfit::fit_full(sweep);
      for (Eigen::Index i = 0; i < sweep.size(); ++i)
        sweep.s21[i] /= fit.background.factor(sweep.f[i]);
    }
    report = resfit::entropy_set(sweep);
    stem = stem_of(input);
  } else {
    const json j = resfit::read_json_file(params_path);
    resfit::StrictObject o(j);
    const resfit::ResonatorParams p = params_from(o);
    resfit::GridKind kind;
    double span = 0.0;
    const Eigen::VectorXd freqs = grid_from(o, p, kind, span);
    o.finish();
    report = resfit::entropy_of_model(p, freqs);
    stem = stem_of(params_path);
  }
  std::cout << "entropy: H_set = " << report.h_set << " bits over " << report.per_point.size()
            << " points (" << report.h_density << " bits/point), " << report.clamp_count
            << " clamped\n";
  if (g.dry_run) return kOk;
  const fs::path csv = out_path(g, stem + "_entropy.csv");
  {
    std::ofstream os(csv, std::ios::binary);
    if (!os) throw resfit::InvalidParameter("cannot write '" + csv.string() + "'");
    resfit::write_entropy_csv(os, report);
  }
  resfit::write_json_file(out_path(g, stem + "_entropy.json"), resfit::entropy_summary_json(report));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate, fit and benchmark notch-type resonator sweeps"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Override the random seed");
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
  app.add_option("--format", g.format, "Fit result format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  app.add_flag("--dry-run", g.dry_run, "Validate inputs and report; write nothing");

  std::string sim_config;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic sweep from a JSON config");
  sim->add_option("config", sim_config, "Simulation config (JSON)")->required()->check(CLI::ExistingFile);

  std::string fit_input;
  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Fit a sweep file (CSV or .s2p)");
  fit->add_option("sweep", fit_input, "Sweep file")->required()->check(CLI::ExistingFile);
  fit->add_option("-o,--output", fit_flags.output, "Output path (default <out-dir>/<stem>_fit.json)");
  fit->add_flag("--no-refine", fit_flags.no_refine, "Skip delay refinement");
  fit->add_flag("--no-polish", fit_flags.no_polish, "Skip the joint complex refinement");
  fit->add_flag("--dof-n-minus-6", fit_flags.dof6, "Use N-6 degrees of freedom");

  std::string plan_input;
  long plan_n = 0;
  double plan_span = 0.0;
  auto* plan = app.add_subcommand("hpd-plan", "Lay out a homophasal frequency plan from a coarse sweep");
  plan->add_option("sweep", plan_input, "Coarse sweep file")->required()->check(CLI::ExistingFile);
  plan->add_option("-n,--n-points", plan_n, "Number of frequencies")->required();
  plan->add_option("--span-hz", plan_span, "Restrict the plan to this span (default: full circle)");

  std::string bench_config;
  auto* bench = app.add_subcommand("bench", "Run a Monte Carlo benchmark from a JSON config");
  bench->add_option("config", bench_config, "Benchmark config (JSON)")->required()->check(CLI::ExistingFile);

  std::string photons_fit;
  double p_vna = 0.0, attenuation = 0.0;
  auto* photons = app.add_subcommand("photons", "Mean photon number from a fit result");
  photons->add_option("fit", photons_fit, "Fit result (JSON)")->required()->check(CLI::ExistingFile);
  photons->add_option("--p-vna-dbm", p_vna, "VNA output power [dBm]")->required();
  photons->add_option("--attenuation-db", attenuation, "Line gain [dB], negative for attenuation")
      ->required();

  std::string entropy_input, entropy_params;
  bool entropy_calibrate = false;
  auto* entropy = app.add_subcommand("entropy", "Shannon entropy of a sweep or of the model");
  entropy->add_option("sweep", entropy_input, "Calibrated sweep file")->check(CLI::ExistingFile);
  entropy->add_option("--params", entropy_params, "Model parameters and grid (JSON)")
      ->check(CLI::ExistingFile);
  entropy->add_flag("--calibrate", entropy_calibrate, "Fit and divide out the background first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*sim) return cmd_simulate(g, sim_config);
    if (*fit) return cmd_fit(g, fit_input, fit_flags);
    if (*plan) return cmd_hpd_plan(g, plan_input, plan_n, plan_span);
    if (*bench) return cmd_bench(g, bench_config);
    if (*photons) return cmd_photons(g, photons_fit, p_vna, attenuation);
    if (*entropy) return cmd_entropy(g, entropy_input, entropy_params, entropy_calibrate);
  } catch (const std::exception& e) {
    print_nested(e);
    return exit_code(e);
  }
  return kOk;
}
