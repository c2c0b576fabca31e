#pragma once

// File formats: sweep CSV, Touchstone S21 import, frequency plans, JSON
// serialization of fit results, truth sidecars and entropy reports, and a
// strict reader for JSON configuration objects.

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "resfit/fit.hpp"
#include "resfit/info.hpp"
#include "resfit/model.hpp"
#include "resfit/synth.hpp"

namespace resfit {

// Shortest decimal text that round-trips: 17 significant digits.
std::string format_double(double value);

// Sweep CSV: header `f_hz,s21_re,s21_im`, one sample per line. Malformed
// rows and non-increasing frequencies raise ParseError with the 1-based
// line number. A header-only file yields an empty sweep.
Sweep read_sweep_csv(std::istream& in);
void write_sweep_csv(std::ostream& out, const Sweep& sweep);

// Touchstone v1 two-port file; only the S21 pair is kept. Supports the RI,
// MA and DB formats and HZ/KHZ/MHZ/GHZ units.
Sweep read_touchstone_s21(std::istream& in);

// Reads .s2p files as Touchstone and everything else as sweep CSV.
Sweep read_sweep_file(const std::filesystem::path& path);
void write_sweep_file(const std::filesystem::path& path, const Sweep& sweep);

// Frequency plan: one frequency in Hz per line.
Eigen::VectorXd read_frequency_plan(std::istream& in);
void write_frequency_plan(std::ostream& out, const Eigen::VectorXd& freqs);

nlohmann::json to_json(const FitResult& result);
FitResult fit_result_from_json(const nlohmann::json& j);

// Generating truth of a synthetic sweep, for round-trip scoring.
struct Truth {
  ResonatorParams params;
  Background background;
  NoiseSpec noise;
  GridKind grid = GridKind::spd;
  double span_hz = 0.0;
  Eigen::Index n_points = 0;
};

nlohmann::json to_json(const Truth& truth);
Truth truth_from_json(const nlohmann::json& j);

// Per-point table `f_hz,p_r,h_bits` and summary object
// {h_set_bits, h_density, clamp_count}.
void write_entropy_csv(std::ostream& out, const EntropyReport& report);
nlohmann::json entropy_summary_json(const EntropyReport& report);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

// Reads keys out of a JSON object and rejects anything left unread.
// Missing required keys and type mismatches raise InvalidParameter naming
// the key (with its dotted path).
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path = {});
  // Holds a pointer to j, so a temporary would dangle.
  StrictObject(nlohmann::json&&, std::string = {}) = delete;

  bool has(const std::string& key) const;
  double number(const std::string& key);
  double number_or(const std::string& key, double fallback);
  long integer(const std::string& key);
  long integer_or(const std::string& key, long fallback);
  std::string string(const std::string& key);
  std::string string_or(const std::string& key, const std::string& fallback);
  bool boolean_or(const std::string& key, bool fallback);
  std::vector<double> numbers(const std::string& key);
  std::vector<std::string> strings(const std::string& key);
  StrictObject object(const std::string& key);
  const nlohmann::json& raw(const std::string& key);

  // Throws InvalidParameter listing keys that were never read.
  void finish() const;

 private:
  const nlohmann::json& at(const std::string& key);
  std::string qualified(const std::string& key) const;

  const nlohmann::json* json_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace resfit
