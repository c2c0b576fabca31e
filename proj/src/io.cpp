#include "resfit/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

#include "resfit/errors.hpp"

namespace resfit {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

double parse_field(const std::string& text, const char* name, std::size_t line) {
  double v = 0.0;
  if (!parse_double(text, v)) {
    std::ostringstream os;
    os << "line " << line << ": cannot parse " << name << " from '" << text << "'";
    throw ParseError(os.str(), line);
  }
  return v;
}

struct Samples {
  std::vector<double> f;
  std::vector<std::complex<double>> s21;
  std::vector<std::size_t> lines;

  void push(double fi, std::complex<double> s, std::size_t line) {
    if (!f.empty() && !(fi > f.back())) {
      std::ostringstream os;
      os << "line " << line << ": frequency " << format_double(fi)
         << " Hz does not increase on the previous row (" << format_double(f.back()) << " Hz)";
      throw ParseError(os.str(), line);
    }
    f.push_back(fi);
    s21.push_back(s);
    lines.push_back(line);
  }

  Sweep to_sweep(std::string provenance) const {
    const auto n = static_cast<Eigen::Index>(f.size());
    Sweep sweep;
    sweep.f = Eigen::Map<const Eigen::VectorXd>(f.data(), n);
    sweep.s21 = Eigen::Map<const Eigen::VectorXcd>(s21.data(), n);
    if (n > 0) {
      sweep.span = f.back() - f.front();
      sweep.center = 0.5 * (f.back() + f.front());
    }
    sweep.provenance = std::move(provenance);
    return sweep;
  }
};

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

Sweep read_sweep_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("line 1: empty file, expected header", 1);
  ++line_no;
  strip_cr(line);
  if (trim(line) != "f_hz,s21_re,s21_im") {
    throw ParseError("line 1: expected header 'f_hz,s21_re,s21_im', got '" + line + "'", 1);
  }
  Samples samples;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3) {
      std::ostringstream os;
      os << "line " << line_no << ": expected 3 fields, found " << fields.size();
      throw ParseError(os.str(), line_no);
    }
    const double f = parse_field(fields[0], "f_hz", line_no);
    const double re = parse_field(fields[1], "s21_re", line_no);
    const double im = parse_field(fields[2], "s21_im", line_no);
    samples.push(f, {re, im}, line_no);
  }
  return samples.to_sweep("csv");
}

void write_sweep_csv(std::ostream& out, const Sweep& sweep) {
  out << "f_hz,s21_re,s21_im\n";
  for (Eigen::Index i = 0; i < sweep.size(); ++i) {
    out << format_double(sweep.f[i]) << ',' << format_double(sweep.s21[i].real()) << ','
        << format_double(sweep.s21[i].imag()) << '\n';
  }
}

Sweep read_touchstone_s21(std::istream& in) {
  double unit = 1e9;  // Touchstone default is GHz
  std::string format = "MA";
  bool have_options = false;
  Samples samples;
  std::vector<double> pending;
  std::size_t pending_line = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (const auto bang = line.find('!'); bang != std::string::npos) line.erase(bang);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (have_options) continue;  // only the first option line counts
      have_options = true;
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        if (tok == "HZ") unit = 1.0;
        else if (tok == "KHZ") unit = 1e3;
        else if (tok == "MHZ") unit = 1e6;
        else if (tok == "GHZ") unit = 1e9;
        else if (tok == "RI" || tok == "MA" || tok == "DB") format = tok;
        else if (tok == "S" || tok == "R") continue;
        else if (tok == "Y" || tok == "Z" || tok == "H" || tok == "G") {
          throw ParseError("line " + std::to_string(line_no) + ": only S-parameter files are supported",
                           line_no);
        } else {
          double dummy = 0.0;
          if (!parse_double(tok, dummy)) {
            throw ParseError("line " + std::to_string(line_no) + ": unknown option '" + tok + "'",
                             line_no);
          }
        }
      }
      continue;
    }
    if (line.front() == '[') {
      throw ParseError("line " + std::to_string(line_no) + ": Touchstone v2 keywords are not supported",
                       line_no);
    }
    std::istringstream ss(line);
    std::string tok;
    if (pending.empty()) pending_line = line_no;
    while (ss >> tok) pending.push_back(parse_field(tok, "value", line_no));
    if (pending.size() > 9) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 9 values per two-port record",
                       line_no);
    }
    if (pending.size() < 9) continue;
    const double f = pending[0] * unit;
    const double v1 = pending[3], v2 = pending[4];  // S21 pair
    std::complex<double> s21;
    constexpr double deg = std::numbers::pi / 180.0;
    if (format == "RI") s21 = {v1, v2};
    else if (format == "MA") s21 = std::polar(v1, v2 * deg);
    else s21 = std::polar(std::pow(10.0, v1 / 20.0), v2 * deg);
    samples.push(f, s21, pending_line);
    pending.clear();
  }
  if (!pending.empty()) {
    throw ParseError("line " + std::to_string(pending_line) + ": truncated two-port record",
                     pending_line);
  }
  return samples.to_sweep("touchstone");
}

Sweep read_sweep_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open '" + path.string() + "'");
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  try {
    return ext == ".s2p" ? read_touchstone_s21(in) : read_sweep_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_sweep_file(const std::filesystem::path& path, const Sweep& sweep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidParameter("cannot write '" + path.string() + "'");
  write_sweep_csv(out, sweep);
}

Eigen::VectorXd read_frequency_plan(std::istream& in) {
  std::vector<double> f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    line = trim(line);
    if (line.empty()) continue;
    const double v = parse_field(line, "frequency", line_no);
    if (!f.empty() && !(v > f.back())) {
      throw ParseError("line " + std::to_string(line_no) + ": frequencies must increase", line_no);
    }
    f.push_back(v);
  }
  return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

void write_frequency_plan(std::ostream& out, const Eigen::VectorXd& freqs) {
  for (Eigen::Index i = 0; i < freqs.size(); ++i) out << format_double(freqs[i]) << '\n';
}

nlohmann::json to_json(const FitResult& r) {
  nlohmann::json j;
  j["q_l"] = r.q_l;
  j["q_c_mag"] = r.q_c_mag;
  j["q_i"] = r.q_i;
  j["f_r_hz"] = r.f_r;
  j["phi_rad"] = r.phi;
  j["theta0_rad"] = r.theta0;
  j["a"] = r.background.a;
  j["alpha_rad"] = r.background.alpha;
  j["tau_s"] = r.background.tau;
  j["sigma_q_l"] = r.sigma.q_l;
  j["sigma_q_c_mag"] = r.sigma.q_c_mag;
  j["sigma_q_i"] = r.sigma.q_i;
  j["sigma_f_r_hz"] = r.sigma.f_r;
  j["sigma_phi_rad"] = r.sigma.phi;
  j["chi2"] = r.chi2;
  j["n_points"] = r.n_points;
  nlohmann::json cov = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < 4; ++k) row.push_back(r.covariance(i, k));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["warnings"] = r.warnings;
  return j;
}

FitResult fit_result_from_json(const nlohmann::json& j) {
  StrictObject o(j);
  FitResult r;
  r.q_l = o.number("q_l");
  r.q_c_mag = o.number("q_c_mag");
  r.q_i = o.number("q_i");
  r.f_r = o.number("f_r_hz");
  r.phi = o.number("phi_rad");
  r.theta0 = o.number_or("theta0_rad", 0.0);
  r.background.a = o.number_or("a", 1.0);
  r.background.alpha = o.number_or("alpha_rad", 0.0);
  r.background.tau = o.number_or("tau_s", 0.0);
  r.sigma.q_l = o.number_or("sigma_q_l", 0.0);
  r.sigma.q_c_mag = o.number_or("sigma_q_c_mag", 0.0);
  r.sigma.q_i = o.number_or("sigma_q_i", 0.0);
  r.sigma.f_r = o.number_or("sigma_f_r_hz", 0.0);
  r.sigma.phi = o.number_or("sigma_phi_rad", 0.0);
  r.chi2 = o.number_or("chi2", 0.0);
  r.n_points = o.integer_or("n_points", 0);
  if (o.has("covariance")) {
    const auto& cov = o.raw("covariance");
    if (!cov.is_array() || cov.size() != 4)
      throw InvalidParameter("covariance must be a 4x4 array");
    for (int i = 0; i < 4; ++i) {
      const auto& row = cov.at(static_cast<std::size_t>(i));
      if (!row.is_array() || row.size() != 4)
        throw InvalidParameter("covariance must be a 4x4 array");
      for (int k = 0; k < 4; ++k) r.covariance(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
  }
  if (o.has("warnings")) r.warnings = o.strings("warnings");
  o.finish();
  return r;
}

}  // namespace resfit

namespace resfit {

nlohmann::json to_json(const Truth& t) {
  nlohmann::json j;
  j["f_r_hz"] = t.params.f_r;
  j["q_i"] = t.params.q_i;
  j["q_c_mag"] = t.params.q_c_mag;
  j["phi_rad"] = t.params.phi;
  j["q_l"] = t.params.q_l();
  j["a"] = t.background.a;
  j["alpha_rad"] = t.background.alpha;
  j["tau_s"] = t.background.tau;
  j["sigma_n_re"] = t.noise.sigma_n_re;
  j["sigma_n_im"] = t.noise.sigma_n_im;
  j["sigma_fr_hz"] = t.noise.sigma_fr;
  j["fr_spectrum"] = to_string(t.noise.fr_spectrum);
  j["seed"] = t.noise.seed;
  j["grid"] = to_string(t.grid);
  j["span_hz"] = t.span_hz;
  j["n_points"] = t.n_points;
  return j;
}

Truth truth_from_json(const nlohmann::json& j) {
  StrictObject o(j);
  Truth t;
  t.params.f_r = o.number("f_r_hz");
  t.params.q_i = o.number("q_i");
  t.params.q_c_mag = o.number("q_c_mag");
  t.params.phi = o.number("phi_rad");
  (void)o.number_or("q_l", 0.0);  // derived, echoed for convenience
  t.background.a = o.number("a");
  t.background.alpha = o.number("alpha_rad");
  t.background.tau = o.number("tau_s");
  t.noise.sigma_n_re = o.number("sigma_n_re");
  t.noise.sigma_n_im = o.number("sigma_n_im");
  t.noise.sigma_fr = o.number("sigma_fr_hz");
  const std::string spectrum = o.string("fr_spectrum");
  t.noise.fr_spectrum =
      spectrum == "white" ? FrSpectrum::white : FrSpectrum::one_over_sqrt_f;
  if (spectrum != "white" && spectrum != to_string(FrSpectrum::one_over_sqrt_f))
    throw InvalidParameter("fr_spectrum: unknown value '" + spectrum + "'");
  t.noise.seed = o.raw("seed").get<std::uint64_t>();
  const std::string grid = o.string("grid");
  if (grid != "spd" && grid != "hpd") throw InvalidParameter("grid: unknown value '" + grid + "'");
  t.grid = grid == "spd" ? GridKind::spd : GridKind::hpd;
  t.span_hz = o.number("span_hz");
  t.n_points = o.integer("n_points");
  o.finish();
  return t;
}

void write_entropy_csv(std::ostream& out, const EntropyReport& report) {
  out << "f_hz,p_r,h_bits\n";
  for (const auto& p : report.per_point)
    out << format_double(p.f) << ',' << format_double(p.p_r) << ',' << format_double(p.h) << '\n';
}

nlohmann::json entropy_summary_json(const EntropyReport& report) {
  nlohmann::json j;
  j["h_set_bits"] = report.h_set;
  j["h_density"] = report.h_density;
  j["clamp_count"] = report.clamp_count;
  j["n_points"] = report.per_point.size();
  return j;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidParameter(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidParameter("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

StrictObject::StrictObject(const nlohmann::json& j, std::string path)
    : json_(&j), path_(std::move(path)) {
  if (!j.is_object()) {
    throw InvalidParameter((path_.empty() ? std::string("configuration") : path_) +
                           ": expected a JSON object");
  }
}

std::string StrictObject::qualified(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

bool StrictObject::has(const std::string& key) const { return json_->contains(key); }

const nlohmann::json& StrictObject::at(const std::string& key) {
  if (!json_->contains(key)) throw InvalidParameter("missing required key '" + qualified(key) + "'");
  used_.insert(key);
  return json_->at(key);
}

const nlohmann::json& StrictObject::raw(const std::string& key) { return at(key); }

double StrictObject::number(const std::string& key) {
  const auto& v = at(key);
  if (!v.is_number()) throw InvalidParameter("key '" + qualified(key) + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw InvalidParameter("key '" + qualified(key) + "' must be finite");
  return d;
}

double StrictObject::number_or(const std::string& key, double fallback) {
  return has(key) ? number(key) : fallback;
}

long StrictObject::integer(const std::string& key) {
  const auto& v = at(key);
  if (!v.is_number_integer()) throw InvalidParameter("key '" + qualified(key) + "' must be an integer");
  return v.get<long>();
}

long StrictObject::integer_or(const std::string& key, long fallback) {
  return has(key) ? integer(key) : fallback;
}

std::string StrictObject::string(const std::string& key) {
  const auto& v = at(key);
  if (!v.is_string()) throw InvalidParameter("key '" + qualified(key) + "' must be a string");
  return v.get<std::string>();
}

std::string StrictObject::string_or(const std::string& key, const std::string& fallback) {
  return has(key) ? string(key) : fallback;
}

bool StrictObject::boolean_or(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const auto& v = at(key);
  if (!v.is_boolean()) throw InvalidParameter("key '" + qualified(key) + "' must be true or false");
  return v.get<bool>();
}

std::vector<double> StrictObject::numbers(const std::string& key) {
  const auto& v = at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array() || v.empty())
    throw InvalidParameter("key '" + qualified(key) + "' must be a number or a nonempty array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw InvalidParameter("key '" + qualified(key) + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::string> StrictObject::strings(const std::string& key) {
  const auto& v = at(key);
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw InvalidParameter("key '" + qualified(key) + "' must be a string array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw InvalidParameter("key '" + qualified(key) + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

StrictObject StrictObject::object(const std::string& key) { return StrictObject(at(key), qualified(key)); }

void StrictObject::finish() const {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : json_->items())
    if (!used_.count(key)) unknown.push_back(qualified(key));
  if (unknown.empty()) return;
  std::string msg = "unknown key";
  msg += unknown.size() > 1 ? "s" : "";
  for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", '" : " '") + unknown[i] + "'";
  throw InvalidParameter(msg);
}

}  // namespace resfit
