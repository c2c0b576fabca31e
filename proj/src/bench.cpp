#include "resfit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include <boost/random/uniform_int_distribution.hpp>

#include "resfit/errors.hpp"
#include "resfit/info.hpp"
#include "resfit/io.hpp"
#include "resfit/rng.hpp"
#include "resfit/svg.hpp"

namespace resfit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kBootstrapStream = 0xb0075a4dULL;

GridKind parse_grid(const std::string& s) {
  if (s == "spd") return GridKind::spd;
  if (s == "hpd") return GridKind::hpd;
  throw InvalidParameter("grid: unknown value '" + s + "' (expected spd or hpd)");
}

BenchKind parse_kind(const std::string& s) {
  for (BenchKind k : {BenchKind::coupling, BenchKind::span, BenchKind::ratio_map,
                      BenchKind::collapse, BenchKind::entropy})
    if (s == to_string(k)) return k;
  throw InvalidParameter("kind: unknown value '" + s + "'");
}

std::vector<double> parse_axis(StrictObject& o, const std::string& key) {
  if (o.has(key) && o.raw(key).is_object()) {
    StrictObject a = o.object(key);
    const double lo = a.number("min");
    const double hi = a.number("max");
    const long count = a.integer("count");
    const std::string scale = a.string_or("scale", "log");
    a.finish();
    if (count < 1) throw InvalidParameter(key + ".count must be >= 1");
    if (scale != "log" && scale != "linear")
      throw InvalidParameter(key + ".scale must be 'log' or 'linear'");
    if (scale == "log" && !(lo > 0.0 && hi > 0.0))
      throw InvalidParameter(key + ": log axis needs positive bounds");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (long k = 0; k < count; ++k) {
      const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
      out[static_cast<std::size_t>(k)] =
          scale == "log" ? std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)))
                         : lo + t * (hi - lo);
    }
    return out;
  }
  return o.numbers(key);
}

std::vector<GridKind> grids_for(const BenchConfig& cfg) {
  switch (cfg.kind) {
    case BenchKind::coupling:
      return {GridKind::spd};
    case BenchKind::span:
    case BenchKind::ratio_map:
    case BenchKind::entropy:
      return {GridKind::spd, GridKind::hpd};
    case BenchKind::collapse:
      return cfg.grids.empty() ? std::vector<GridKind>{GridKind::spd} : cfg.grids;
  }
  return {GridKind::spd};
}

BenchConfig with_grids(BenchConfig cfg) {
  cfg.grids = grids_for(cfg);
  return cfg;
}

struct CellPlan {
  CellKey key;
  std::size_t base_index = 0;  // index ignoring the grid axis
  ResonatorParams params;
  Eigen::VectorXd freqs;
};

std::vector<CellPlan> plan_cells(const BenchConfig& cfg) {
  std::vector<CellPlan> cells;
  std::size_t base = 0;
  for (double q_i : cfg.q_i)
    for (double sigma_n : cfg.sigma_n)
      for (double sigma_fr : cfg.sigma_fr)
        for (long n : cfg.n_points)
          for (double span_lw : cfg.span_linewidths) {
            for (GridKind grid : cfg.grids) {
              CellPlan c;
              c.key = {q_i, sigma_n, sigma_fr, n, span_lw, grid};
              c.base_index = base;
              c.params = {cfg.f_r, q_i, cfg.q_c_mag, cfg.phi};
              const double q_l = c.params.q_l();
              const double span = span_lw * cfg.f_r / q_l;
              c.freqs = grid == GridKind::spd ? grid_spd(cfg.f_r, span, n)
                                              : grid_hpd_span(cfg.f_r, q_l, n, span);
              cells.push_back(std::move(c));
            }
            ++base;
          }
  return cells;
}

TrialRecord run_trial(const BenchConfig& cfg, const CellPlan& cell, std::uint64_t seed) {
  TrialRecord t;
  t.seed = seed;
  NoiseSpec noise{cell.key.sigma_n, cell.key.sigma_n, cell.key.sigma_fr, cfg.fr_spectrum, seed};
  try {
    Sweep sweep = inject_noise(cell.params, cfg.background, cell.freqs, noise);
    sweep.grid_kind = cell.key.grid;
    const FitResult fit = fit_full(sweep, cfg.fit);
    t.q_i = fit.q_i;
    t.sigma_q_i = fit.sigma.q_i;
    t.chi2 = fit.chi2;
    t.converged = std::isfinite(fit.q_i) && std::isfinite(fit.sigma.q_i);
  } catch (const std::exception&) {
    t.converged = false;
  }
  if (!t.converged) t.q_i = t.sigma_q_i = t.chi2 = kNaN;
  return t;
}

template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) body(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

std::uint64_t cell_seed(const BenchConfig& cfg, std::size_t base_index) {
  return derive_seed(cfg.master_seed, base_index);
}

void aggregate(const BenchConfig& cfg, const CellPlan& plan, BenchRecord& r) {
  std::vector<double> true_err, sigma_rel, q;
  long covered = 0;
  for (const auto& t : r.trials) {
    if (!t.converged) {
      ++r.n_failed;
      continue;
    }
    ++r.n_converged;
    const double err = std::abs(t.q_i - plan.key.q_i);
    true_err.push_back(err / plan.key.q_i);
    sigma_rel.push_back(t.sigma_q_i / t.q_i);
    q.push_back(t.q_i);
    if (err <= 2.0 * t.sigma_q_i) ++covered;
  }
  if (r.n_converged == 0) {
    r.median_true_error = r.median_sigma_rel = r.mean_q_i = r.sem_q_i = r.coverage_2sigma = kNaN;
    r.true_error_ci = r.sigma_rel_ci = {kNaN, kNaN};
    return;
  }
  const std::uint64_t boot =
      derive_seed(derive_seed(cell_seed(cfg, plan.base_index), kBootstrapStream),
                  static_cast<std::uint64_t>(plan.key.grid));
  r.median_true_error = median(true_err);
  r.true_error_ci = bootstrap_median_ci(true_err, cfg.bootstrap_resamples, boot);
  r.median_sigma_rel = median(sigma_rel);
  r.sigma_rel_ci = bootstrap_median_ci(sigma_rel, cfg.bootstrap_resamples, derive_seed(boot, 1));
  double sum = 0.0;
  for (double v : q) sum += v;
  r.mean_q_i = sum / static_cast<double>(q.size());
  double ss = 0.0;
  for (double v : q) ss += (v - r.mean_q_i) * (v - r.mean_q_i);
  r.sem_q_i = q.size() > 1 ? std::sqrt(ss / static_cast<double>(q.size() - 1) /
                                       static_cast<double>(q.size()))
                           : kNaN;
  r.coverage_2sigma = static_cast<double>(covered) / static_cast<double>(r.n_converged);
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return kNaN;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

const BenchRecord* find(const std::vector<BenchRecord>& records, const CellKey& key) {
  for (const auto& r : records) {
    const auto& c = r.cell;
    if (c.q_i == key.q_i && c.sigma_n == key.sigma_n && c.sigma_fr == key.sigma_fr &&
        c.n_points == key.n_points && c.span_linewidths == key.span_linewidths &&
        c.grid == key.grid)
      return &r;
  }
  return nullptr;
}

void require_single(const BenchConfig& cfg, bool q_i, bool sigma_n, bool n_points) {
  if (q_i && cfg.q_i.size() != 1)
    throw InvalidParameter(std::string(to_string(cfg.kind)) + " benchmark takes a single q_i");
  if (sigma_n && cfg.sigma_n.size() != 1)
    throw InvalidParameter(std::string(to_string(cfg.kind)) + " benchmark takes a single sigma_n");
  if (n_points && cfg.n_points.size() != 1)
    throw InvalidParameter(std::string(to_string(cfg.kind)) + " benchmark takes a single n_points");
}

}  // namespace

const char* to_string(BenchKind kind) {
  switch (kind) {
    case BenchKind::coupling: return "coupling";
    case BenchKind::span: return "span";
    case BenchKind::ratio_map: return "ratio_map";
    case BenchKind::collapse: return "collapse";
    case BenchKind::entropy: return "entropy";
  }
  return "?";
}

std::size_t BenchConfig::cell_count() const {
  const std::size_t g = grids_for(*this).size();
  return q_i.size() * sigma_n.size() * sigma_fr.size() * n_points.size() *
         span_linewidths.size() * g;
}

void validate(const BenchConfig& cfg) {
  const auto nonempty = [](const auto& axis, const char* name) {
    if (axis.empty()) throw InvalidParameter(std::string("axis '") + name + "' is empty");
  };
  nonempty(cfg.q_i, "q_i");
  nonempty(cfg.sigma_n, "sigma_n");
  nonempty(cfg.sigma_fr, "sigma_fr_hz");
  nonempty(cfg.n_points, "n_points");
  nonempty(cfg.span_linewidths, "span_linewidths");
  for (double v : cfg.q_i)
    if (!(v > 0.0)) throw InvalidParameter("q_i values must be > 0");
  for (double v : cfg.sigma_n)
    if (!(v >= 0.0)) throw InvalidParameter("sigma_n values must be >= 0");
  for (double v : cfg.sigma_fr)
    if (!(v >= 0.0)) throw InvalidParameter("sigma_fr_hz values must be >= 0");
  for (long v : cfg.n_points)
    if (v < 5) throw InvalidParameter("n_points values must be >= 5");
  for (double v : cfg.span_linewidths)
    if (!(v > 0.0)) throw InvalidParameter("span_linewidths values must be > 0");
  if (cfg.trials_per_cell < 1) throw InvalidParameter("trials_per_cell must be >= 1");
  if (cfg.bootstrap_resamples < 1) throw InvalidParameter("bootstrap_resamples must be >= 1");
  if (!(cfg.q_c_mag > 0.0)) throw InvalidParameter("q_c_mag must be > 0");
  if (!(cfg.f_r > 0.0)) throw InvalidParameter("f_r_hz must be > 0");
  validate(cfg.background);
  for (double q_i : cfg.q_i) validate(ResonatorParams{cfg.f_r, q_i, cfg.q_c_mag, cfg.phi});
  switch (cfg.kind) {
    case BenchKind::span:
    case BenchKind::entropy:
      require_single(cfg, true, true, true);
      if (cfg.sigma_fr.size() != 1)
        throw InvalidParameter(std::string(to_string(cfg.kind)) + " benchmark takes a single sigma_fr_hz");
      break;
    case BenchKind::ratio_map:
      require_single(cfg, true, true, true);
      break;
    case BenchKind::collapse:
      if (cfg.sigma_fr.size() != 1 || cfg.span_linewidths.size() != 1)
        throw InvalidParameter("collapse benchmark takes a single sigma_fr_hz and span_linewidths");
      for (double s : cfg.sigma_n)
        if (!(s > 0.0)) throw InvalidParameter("collapse benchmark needs sigma_n > 0");
      break;
    case BenchKind::coupling:
      break;
  }
}

BenchConfig bench_config_from_json(const nlohmann::json& j) {
  StrictObject o(j);
  BenchConfig cfg;
  cfg.name = o.string("name");
  cfg.kind = parse_kind(o.string("kind"));
  cfg.q_i = parse_axis(o, "q_i");
  cfg.q_c_mag = o.number("q_c_mag");
  cfg.phi = o.number("phi_rad");
  cfg.f_r = o.number("f_r_hz");
  {
    StrictObject bg = o.object("background");
    cfg.background.a = bg.number("a");
    cfg.background.alpha = bg.number("alpha_rad");
    cfg.background.tau = bg.number("tau_s");
    bg.finish();
  }
  cfg.sigma_n = parse_axis(o, "sigma_n");
  cfg.sigma_fr = parse_axis(o, "sigma_fr_hz");
  const std::string spectrum = o.string_or("fr_spectrum", "white");
  if (spectrum == "white") cfg.fr_spectrum = FrSpectrum::white;
  else if (spectrum == to_string(FrSpectrum::one_over_sqrt_f)) cfg.fr_spectrum = FrSpectrum::one_over_sqrt_f;
  else throw InvalidParameter("fr_spectrum: unknown value '" + spectrum + "'");
  for (double v : o.numbers("n_points")) {
    if (v != std::floor(v)) throw InvalidParameter("n_points values must be integers");
    cfg.n_points.push_back(static_cast<long>(v));
  }
  cfg.span_linewidths = parse_axis(o, "span_linewidths");
  if (o.has("grids"))
    for (const auto& g : o.strings("grids")) cfg.grids.push_back(parse_grid(g));
  cfg.trials_per_cell = static_cast<int>(o.integer("trials_per_cell"));
  {
    const auto& seed = o.raw("master_seed");
    if (!seed.is_number_integer() || (seed.is_number_integer() && !seed.is_number_unsigned() && seed.get<long long>() < 0))
      throw InvalidParameter("key 'master_seed' must be a nonnegative integer");
    cfg.master_seed = seed.get<std::uint64_t>();
  }
  cfg.bootstrap_resamples = static_cast<int>(o.integer_or("bootstrap_resamples", 1000));
  cfg.regression_min_span = o.number_or("regression_min_span", 2.0);
  cfg.svg = o.boolean_or("svg", true);
  cfg.fit.delay.refine = o.boolean_or("refine_delay", true);
  cfg.fit.polish.enabled = o.boolean_or("polish", true);
  const std::string dof = o.string_or("dof", "n_minus_4");
  if (dof == "n_minus_4") cfg.fit.dof = DofMode::n_minus_4;
  else if (dof == "n_minus_6") cfg.fit.dof = DofMode::n_minus_6;
  else throw InvalidParameter("dof: unknown value '" + dof + "'");
  o.finish();
  validate(cfg);
  return cfg;
}

nlohmann::json to_json(const BenchConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["kind"] = to_string(cfg.kind);
  j["q_i"] = cfg.q_i;
  j["q_c_mag"] = cfg.q_c_mag;
  j["phi_rad"] = cfg.phi;
  j["f_r_hz"] = cfg.f_r;
  j["background"] = {{"a", cfg.background.a},
                     {"alpha_rad", cfg.background.alpha},
                     {"tau_s", cfg.background.tau}};
  j["sigma_n"] = cfg.sigma_n;
  j["sigma_fr_hz"] = cfg.sigma_fr;
  j["fr_spectrum"] = to_string(cfg.fr_spectrum);
  j["n_points"] = cfg.n_points;
  j["span_linewidths"] = cfg.span_linewidths;
  std::vector<std::string> grids;
  for (GridKind g : grids_for(cfg)) grids.emplace_back(to_string(g));
  j["grids"] = grids;
  j["trials_per_cell"] = cfg.trials_per_cell;
  j["master_seed"] = cfg.master_seed;
  j["bootstrap_resamples"] = cfg.bootstrap_resamples;
  j["regression_min_span"] = cfg.regression_min_span;
  j["svg"] = cfg.svg;
  j["refine_delay"] = cfg.fit.delay.refine;
  j["polish"] = cfg.fit.polish.enabled;
  j["dof"] = cfg.fit.dof == DofMode::n_minus_4 ? "n_minus_4" : "n_minus_6";
  return j;
}

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Interval bootstrap_median_ci(const std::vector<double>& values, int resamples, std::uint64_t seed,
                             double level) {
  if (values.empty()) return {kNaN, kNaN};
  std::mt19937_64 engine(seed);
  boost::random::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> medians(static_cast<std::size_t>(resamples));
  std::vector<double> sample(values.size());
  for (auto& m : medians) {
    for (auto& s : sample) s = values[pick(engine)];
    m = median(sample);
  }
  std::sort(medians.begin(), medians.end());
  const double tail = 0.5 * (1.0 - level);
  return {percentile_sorted(medians, tail), percentile_sorted(medians, 1.0 - tail)};
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidParameter("line fit needs at least two (x, y) pairs");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidParameter("line fit needs distinct x values");
  LineFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  if (x.size() > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - out.intercept - out.slope * x[i];
      ss += r * r;
    }
    out.slope_stderr = std::sqrt(ss / (n - 2.0) / sxx);
  }
  return out;
}

std::vector<BenchRecord> run_cells(const BenchConfig& cfg_in, unsigned threads) {
  validate(cfg_in);
  const BenchConfig cfg = with_grids(cfg_in);
  const std::vector<CellPlan> cells = plan_cells(cfg);
  const auto trials = static_cast<std::size_t>(cfg.trials_per_cell);

  std::vector<BenchRecord> records(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    records[c].cell = cells[c].key;
    records[c].trials.resize(trials);
  }
  parallel_for(cells.size() * trials, threads, [&](std::size_t w) {
    const std::size_t c = w / trials;
    const std::size_t k = w % trials;
    const std::uint64_t seed = derive_seed(cell_seed(cfg, cells[c].base_index), k);
    records[c].trials[k] = run_trial(cfg, cells[c], seed);
  });
  parallel_for(cells.size(), threads, [&](std::size_t c) {
    aggregate(cfg, cells[c], records[c]);
    records[c].h_density = entropy_of_model(cells[c].params, cells[c].freqs).h_density;
  });
  return records;
}

std::vector<BenchRecord> sweep_coupling(const BenchConfig& cfg, unsigned threads) {
  BenchConfig c = cfg;
  c.kind = BenchKind::coupling;
  auto records = run_cells(c, threads);
  std::stable_sort(records.begin(), records.end(),
                   [](const BenchRecord& a, const BenchRecord& b) { return a.cell.q_i < b.cell.q_i; });
  return records;
}

std::vector<BenchRecord> sweep_span(const BenchConfig& cfg, unsigned threads) {
  BenchConfig c = cfg;
  c.kind = BenchKind::span;
  return run_cells(c, threads);
}

RatioMap error_ratio_map(const BenchConfig& cfg, unsigned threads) {
  BenchConfig c = cfg;
  c.kind = BenchKind::ratio_map;
  RatioMap map;
  map.records = run_cells(c, threads);
  for (double sigma_fr : c.sigma_fr) {
    for (double span : c.span_linewidths) {
      CellKey key{c.q_i[0], c.sigma_n[0], sigma_fr, c.n_points[0], span, GridKind::spd};
      const BenchRecord* spd = find(map.records, key);
      key.grid = GridKind::hpd;
      const BenchRecord* hpd = find(map.records, key);
      RatioCell cell;
      cell.span_linewidths = span;
      cell.sigma_fr = sigma_fr;
      cell.ratio = cell.true_error_ratio = kNaN;
      cell.ci = {kNaN, kNaN};
      cell.flagged = hpd->n_failed > 0;
      std::vector<double> a, b, ta, tb;
      for (std::size_t k = 0; k < spd->trials.size(); ++k) {
        const auto& s = spd->trials[k];
        const auto& h = hpd->trials[k];
        if (!s.converged || !h.converged) continue;
        a.push_back(s.sigma_q_i / s.q_i);
        b.push_back(h.sigma_q_i / h.q_i);
        ta.push_back(std::abs(s.q_i - key.q_i));
        tb.push_back(std::abs(h.q_i - key.q_i));
      }
      cell.n_pairs = static_cast<long>(a.size());
      if (!cell.flagged && !a.empty()) {
        cell.ratio = median(a) / median(b);
        cell.true_error_ratio = median(ta) / median(tb);
        std::mt19937_64 engine(
            derive_seed(derive_seed(c.master_seed, kBootstrapStream), map.cells.size()));
        boost::random::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
        std::vector<double> ratios(static_cast<std::size_t>(c.bootstrap_resamples));
        std::vector<double> ra(a.size()), rb(b.size());
        for (auto& r : ratios) {
          for (std::size_t i = 0; i < a.size(); ++i) {
            const std::size_t j = pick(engine);
            ra[i] = a[j];
            rb[i] = b[j];
          }
          r = median(ra) / median(rb);
        }
        std::sort(ratios.begin(), ratios.end());
        cell.ci = {percentile_sorted(ratios, 0.025), percentile_sorted(ratios, 0.975)};
      }
      map.cells.push_back(cell);
    }
  }
  return map;
}

double collapse_deviation(const std::vector<CollapseCurve>& curves) {
  if (curves.size() < 2) return 0.0;
  double worst = 0.0;
  const std::size_t m = curves.front().normalized.size();
  for (std::size_t i = 0; i < m; ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : curves) {
      if (i >= c.normalized.size() || !std::isfinite(c.normalized[i])) return kNaN;
      lo = std::min(lo, c.normalized[i]);
      hi = std::max(hi, c.normalized[i]);
    }
    worst = std::max(worst, hi / lo - 1.0);
  }
  return worst;
}

CollapseReport scaling_collapse(const BenchConfig& cfg, unsigned threads) {
  BenchConfig c = cfg;
  c.kind = BenchKind::collapse;
  CollapseReport report;
  report.records = run_cells(c, threads);
  const std::vector<GridKind> grids = grids_for(c);
  for (double sigma_n : c.sigma_n) {
    for (long n : c.n_points) {
      CollapseCurve curve;
      curve.sigma_n = sigma_n;
      curve.n_points = n;
      for (double q_i : c.q_i) {
        const CellKey key{q_i, sigma_n, c.sigma_fr[0], n, c.span_linewidths[0], grids[0]};
        const BenchRecord* r = find(report.records, key);
        curve.coupling_ratio.push_back(q_i / c.q_c_mag);
        curve.normalized.push_back(r->median_sigma_rel * std::sqrt(static_cast<double>(n)) / sigma_n);
      }
      report.curves.push_back(std::move(curve));
    }
  }
  report.max_deviation = collapse_deviation(report.curves);
  return report;
}

EntropyTable entropy_vs_span(const BenchConfig& cfg, unsigned threads) {
  BenchConfig c = cfg;
  c.kind = BenchKind::entropy;
  EntropyTable table;
  table.records = run_cells(c, threads);
  std::vector<double> lx, ly;
  double best = -1.0;
  for (double span : c.span_linewidths) {
    CellKey key{c.q_i[0], c.sigma_n[0], c.sigma_fr[0], c.n_points[0], span, GridKind::spd};
    const BenchRecord* spd = find(table.records, key);
    key.grid = GridKind::hpd;
    const BenchRecord* hpd = find(table.records, key);
    EntropyRow row{span, spd->h_density, hpd->h_density, spd->median_sigma_rel,
                   hpd->median_sigma_rel};
    if (row.h_density_spd > best) {
      best = row.h_density_spd;
      table.peak_span = span;
    }
    if (span >= c.regression_min_span && row.sigma_rel_spd > 0.0 && row.h_density_spd > 0.0) {
      lx.push_back(std::log(row.h_density_spd));
      ly.push_back(std::log(row.sigma_rel_spd));
    }
    table.rows.push_back(row);
  }
  if (lx.size() >= 2) table.entropy_error_fit = fit_line(lx, ly);
  else table.entropy_error_fit = {kNaN, kNaN, kNaN};
  return table;
}

unsigned default_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RESFIT_THREADS"); env && *env) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (*end != '\0' || cap < 1)
      throw InvalidParameter(std::string("RESFIT_THREADS must be a positive integer, got '") + env + "'");
    n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidParameter("cannot write '" + path.string() + "'");
  out << text;
}

std::string records_csv(const std::vector<BenchRecord>& records, double q_c_mag) {
  std::ostringstream os;
  os << "q_i_true,coupling_ratio,sigma_n,sigma_fr_hz,n_points,span_linewidths,grid,trials,failures,"
        "median_true_error,true_error_ci_lo,true_error_ci_hi,median_sigma_rel,sigma_rel_ci_lo,"
        "sigma_rel_ci_hi,mean_q_i,sem_q_i,coverage_2sigma,h_density\n";
  for (const auto& r : records) {
    const auto& c = r.cell;
    os << format_double(c.q_i) << ',' << format_double(c.q_i / q_c_mag) << ','
       << format_double(c.sigma_n) << ',' << format_double(c.sigma_fr) << ',' << c.n_points << ','
       << format_double(c.span_linewidths) << ',' << to_string(c.grid) << ','
       << r.trials.size() << ',' << r.n_failed << ',' << format_double(r.median_true_error) << ','
       << format_double(r.true_error_ci.lo) << ',' << format_double(r.true_error_ci.hi) << ','
       << format_double(r.median_sigma_rel) << ',' << format_double(r.sigma_rel_ci.lo) << ','
       << format_double(r.sigma_rel_ci.hi) << ',' << format_double(r.mean_q_i) << ','
       << format_double(r.sem_q_i) << ',' << format_double(r.coverage_2sigma) << ','
       << format_double(r.h_density) << '\n';
  }
  return os.str();
}

std::string trials_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream os;
  os << "cell,trial,seed,grid,q_i,sigma_q_i,chi2,converged\n";
  for (std::size_t c = 0; c < records.size(); ++c) {
    for (std::size_t k = 0; k < records[c].trials.size(); ++k) {
      const auto& t = records[c].trials[k];
      os << c << ',' << k << ',' << t.seed << ',' << to_string(records[c].cell.grid) << ','
         << format_double(t.q_i) << ',' << format_double(t.sigma_q_i) << ','
         << format_double(t.chi2) << ',' << (t.converged ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

std::string series_label(const CellKey& c, bool sigma_n, bool sigma_fr, bool n, bool grid) {
  std::ostringstream os;
  const char* sep = "";
  if (grid) os << sep << to_string(c.grid), sep = " ";
  if (sigma_n) os << sep << "sn=" << c.sigma_n, sep = " ";
  if (sigma_fr) os << sep << "sfr=" << c.sigma_fr << "Hz", sep = " ";
  if (n) os << sep << "N=" << c.n_points;
  return os.str();
}

}  // namespace

BenchSummary run_bench(const BenchConfig& cfg, unsigned threads, const std::filesystem::path& out_dir) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();
  const std::string& name = cfg.name;

  nlohmann::json manifest;
  manifest["config"] = to_json(cfg);
  manifest["cells"] = cfg.cell_count();
  std::vector<BenchRecord> records;
  std::vector<std::string> svgs;

  switch (cfg.kind) {
    case BenchKind::coupling: {
      records = sweep_coupling(cfg, threads);
      if (cfg.svg) {
        std::map<std::tuple<double, double, long, double>, std::pair<svg::Series, svg::Series>> groups;
        for (const auto& r : records) {
          auto& [sig, tru] = groups[{r.cell.sigma_n, r.cell.sigma_fr, r.cell.n_points, r.cell.span_linewidths}];
          const std::string label = series_label(r.cell, cfg.sigma_n.size() > 1, cfg.sigma_fr.size() > 1,
                                                 cfg.n_points.size() > 1, false);
          sig.label = "fit " + label;
          tru.label = "true " + label;
          sig.x.push_back(r.cell.q_i / cfg.q_c_mag);
          sig.y.push_back(r.median_sigma_rel);
          tru.x.push_back(r.cell.q_i / cfg.q_c_mag);
          tru.y.push_back(r.median_true_error);
        }
        std::vector<svg::Series> series;
        for (auto& [k, v] : groups) {
          series.push_back(v.first);
          series.push_back(v.second);
        }
        write_text(out_dir / (name + ".svg"),
                   svg::line_plot({"Q_i error vs coupling", "Q_i / |Q_c|", "relative error", true, true},
                                  series));
      }
      break;
    }
    case BenchKind::span: {
      records = sweep_span(cfg, threads);
      if (cfg.svg) {
        std::vector<svg::Series> series(4);
        series[0].label = "spd fit";
        series[1].label = "hpd fit";
        series[2].label = "spd true";
        series[3].label = "hpd true";
        for (const auto& r : records) {
          const std::size_t g = r.cell.grid == GridKind::spd ? 0 : 1;
          series[g].x.push_back(r.cell.span_linewidths);
          series[g].y.push_back(r.median_sigma_rel);
          series[g + 2].x.push_back(r.cell.span_linewidths);
          series[g + 2].y.push_back(r.median_true_error);
        }
        write_text(out_dir / (name + ".svg"),
                   svg::line_plot({"Q_i error vs span", "span / linewidth", "relative error", true, true},
                                  series));
        svg::Series spd{"spd", {}, {}}, hpd{"hpd", {}, {}};
        for (const auto& r : records) {
          auto& s = r.cell.grid == GridKind::spd ? spd : hpd;
          s.x.push_back(r.cell.span_linewidths);
          s.y.push_back(r.mean_q_i);
        }
        write_text(out_dir / (name + "_qi.svg"),
                   svg::line_plot({"fitted Q_i vs span", "span / linewidth", "mean Q_i", true, false},
                                  {spd, hpd}));
      }
      break;
    }
    case BenchKind::ratio_map: {
      RatioMap map = error_ratio_map(cfg, threads);
      records = map.records;
      std::ostringstream os;
      os << "span_linewidths,sigma_fr_hz,ratio,ratio_ci_lo,ratio_ci_hi,true_error_ratio,pairs,flagged\n";
      for (const auto& c : map.cells) {
        os << format_double(c.span_linewidths) << ',' << format_double(c.sigma_fr) << ','
           << format_double(c.ratio) << ',' << format_double(c.ci.lo) << ','
           << format_double(c.ci.hi) << ',' << format_double(c.true_error_ratio) << ','
           << c.n_pairs << ',' << (c.flagged ? 1 : 0) << '\n';
      }
      write_text(out_dir / (name + "_ratio.csv"), os.str());
      long flagged = 0;
      for (const auto& c : map.cells) flagged += c.flagged ? 1 : 0;
      manifest["flagged_cells"] = flagged;
      if (cfg.svg) {
        std::vector<double> values;
        for (const auto& c : map.cells) values.push_back(c.ratio);
        bool log_y = true;
        for (double s : cfg.sigma_fr) log_y = log_y && s > 0.0;
        write_text(out_dir / (name + ".svg"),
                   svg::heatmap({"error ratio spd/hpd", "span / linewidth", "sigma_fr [Hz]", true, log_y},
                                cfg.span_linewidths, cfg.sigma_fr, values, "ratio"));
      }
      break;
    }
    case BenchKind::collapse: {
      CollapseReport report = scaling_collapse(cfg, threads);
      records = report.records;
      std::ostringstream os;
      os << "sigma_n,n_points,coupling_ratio,normalized_error\n";
      for (const auto& c : report.curves)
        for (std::size_t i = 0; i < c.normalized.size(); ++i)
          os << format_double(c.sigma_n) << ',' << c.n_points << ','
             << format_double(c.coupling_ratio[i]) << ',' << format_double(c.normalized[i]) << '\n';
      write_text(out_dir / (name + "_collapse.csv"), os.str());
      manifest["max_deviation"] = report.max_deviation;
      if (cfg.svg) {
        std::vector<svg::Series> series;
        for (const auto& c : report.curves) {
          std::ostringstream label;
          label << "sn=" << c.sigma_n << " N=" << c.n_points;
          series.push_back({label.str(), c.coupling_ratio, c.normalized});
        }
        write_text(out_dir / (name + ".svg"),
                   svg::line_plot({"normalized error", "Q_i / |Q_c|", "(sigma_Qi/Q_i) sqrt(N) / sigma_n",
                                   true, true},
                                  series));
      }
      break;
    }
    case BenchKind::entropy: {
      EntropyTable table = entropy_vs_span(cfg, threads);
      records = table.records;
      std::ostringstream os;
      os << "span_linewidths,h_density_spd,h_density_hpd,sigma_rel_spd,sigma_rel_hpd\n";
      for (const auto& r : table.rows)
        os << format_double(r.span_linewidths) << ',' << format_double(r.h_density_spd) << ','
           << format_double(r.h_density_hpd) << ',' << format_double(r.sigma_rel_spd) << ','
           << format_double(r.sigma_rel_hpd) << '\n';
      write_text(out_dir / (name + "_entropy.csv"), os.str());
      manifest["peak_span_linewidths"] = table.peak_span;
      manifest["entropy_error_slope"] = table.entropy_error_fit.slope;
      manifest["entropy_error_slope_stderr"] = table.entropy_error_fit.slope_stderr;
      if (cfg.svg) {
        svg::Series spd{"spd", {}, {}}, hpd{"hpd", {}, {}};
        for (const auto& r : table.rows) {
          spd.x.push_back(r.span_linewidths);
          spd.y.push_back(r.h_density_spd);
          hpd.x.push_back(r.span_linewidths);
          hpd.y.push_back(r.h_density_hpd);
        }
        write_text(out_dir / (name + ".svg"),
                   svg::line_plot({"information density", "span / linewidth", "H_set / N [bits]", true, false},
                                  {spd, hpd}));
      }
      break;
    }
  }

  write_text(out_dir / (name + ".csv"), records_csv(records, cfg.q_c_mag));
  write_text(out_dir / (name + "_trials.csv"), trials_csv(records));

  BenchSummary summary;
  summary.cells = records.size();
  for (const auto& r : records) {
    summary.trials += static_cast<long>(r.trials.size());
    summary.failures += r.n_failed;
  }
  summary.converged_fraction =
      summary.trials > 0 ? 1.0 - static_cast<double>(summary.failures) / static_cast<double>(summary.trials)
                         : 1.0;
  summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  manifest["trials"] = summary.trials;
  manifest["failures"] = summary.failures;
  manifest["converged_fraction"] = summary.converged_fraction;
  manifest["timings"] = {{"wall_seconds", summary.seconds}, {"threads", threads}};
  write_json_file(out_dir / (name + "_manifest.json"), manifest);
  return summary;
}

}  // namespace resfit
