#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "resfit/errors.hpp"
#include "resfit/io.hpp"

using namespace resfit;

namespace {

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_sweep_csv(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 4.364e9 + 0.123, -8.825e-11, 5e-324}) {
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  }
}

TEST(Io, SweepCsvRoundTripIsExact) {
  const ResonatorParams p{4.364e9, 5.181e6, 6.73e4, 0.668};
  const Sweep s = inject_noise(p, Background{1.149, 1.597, -8.825e-11},
                               grid_spd(p.f_r, 1e6, 257), NoiseSpec::isotropic(1e-3, 10.0, 5));
  std::stringstream buf;
  write_sweep_csv(buf, s);
  const Sweep back = read_sweep_csv(buf);
  EXPECT_EQ(back.f, s.f);
  EXPECT_EQ(back.s21, s.s21);
}

TEST(Io, HeaderOnlyCsvIsEmpty) {
  std::istringstream in("f_hz,s21_re,s21_im\n");
  EXPECT_EQ(read_sweep_csv(in).size(), 0);
}

TEST(Io, CsvErrorsNameTheLine) {
  EXPECT_EQ(parse_error_line("f,re,im\n1,2,3\n"), 1u);
  EXPECT_EQ(parse_error_line("f_hz,s21_re,s21_im\n1,0,0\n2,0\n"), 3u);
  EXPECT_EQ(parse_error_line("f_hz,s21_re,s21_im\n1,0,0\n2,x,0\n"), 3u);
  EXPECT_EQ(parse_error_line("f_hz,s21_re,s21_im\n1,0,0\n2,nan,0\n"), 3u);
  EXPECT_EQ(parse_error_line("f_hz,s21_re,s21_im\n1,0,0\n3,0,0\n2,0,0\n4,0,0\n"), 4u);
  EXPECT_EQ(parse_error_line("f_hz,s21_re,s21_im\n1,0,0\n1,0,0\n"), 3u);
}

TEST(Io, CsvAcceptsCrlf) {
  std::istringstream in("f_hz,s21_re,s21_im\r\n1,0.5,0.25\r\n2,1,0\r\n");
  const Sweep s = read_sweep_csv(in);
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(s.s21[0], std::complex<double>(0.5, 0.25));
}

TEST(Io, TouchstoneFormats) {
  const double deg = std::numbers::pi / 180.0;
  std::istringstream ri(
      "! comment\n# GHz S RI R 50\n"
      "4.0 0 0 0.5 0.25 0 0 0 0\n"
      "4.1 0 0 0.6 -0.1 0 0 0 0\n");
  const Sweep a = read_touchstone_s21(ri);
  ASSERT_EQ(a.size(), 2);
  EXPECT_DOUBLE_EQ(a.f[0], 4.0e9);
  EXPECT_EQ(a.s21[0], std::complex<double>(0.5, 0.25));

  std::istringstream ma("# MHz S MA R 50\n100 1 0 0.5 90 0 0 1 0\n");
  const Sweep b = read_touchstone_s21(ma);
  EXPECT_DOUBLE_EQ(b.f[0], 100e6);
  EXPECT_NEAR(std::abs(b.s21[0] - std::polar(0.5, 90 * deg)), 0.0, 1e-15);

  // Record split over two lines, dB magnitudes.
  std::istringstream db("# Hz S DB R 50\n1000 0 0\n-6.0206 45 0 0 0 0\n");
  const Sweep c = read_touchstone_s21(db);
  EXPECT_DOUBLE_EQ(c.f[0], 1000.0);
  EXPECT_NEAR(std::abs(c.s21[0]), 0.5, 1e-5);
  EXPECT_NEAR(std::arg(c.s21[0]), 45 * deg, 1e-12);

  std::istringstream y("# GHz Y RI R 50\n");
  EXPECT_THROW(read_touchstone_s21(y), ParseError);
  std::istringstream truncated("# GHz S RI R 50\n4.0 0 0 0.5\n");
  EXPECT_THROW(read_touchstone_s21(truncated), ParseError);
}

TEST(Io, SweepFileDispatchesOnExtension) {
  const auto dir = std::filesystem::temp_directory_path() / "resfit_io_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "dut.s2p");
    out << "# GHz S RI R 50\n5.0 0 0 0.5 0.5 0 0 0 0\n5.1 0 0 0.5 0.4 0 0 0 0\n";
  }
  EXPECT_EQ(read_sweep_file(dir / "dut.s2p").s21[1], std::complex<double>(0.5, 0.4));
  const Sweep s = make_sweep(grid_spd(5e9, 1e6, 5), Eigen::VectorXcd::Constant(5, {0.25, -0.5}));
  write_sweep_file(dir / "dut.csv", s);
  EXPECT_EQ(read_sweep_file(dir / "dut.csv").s21, s.s21);
  EXPECT_THROW(read_sweep_file(dir / "missing.csv"), InvalidParameter);
  std::filesystem::remove_all(dir);
}

TEST(Io, FrequencyPlanRoundTrip) {
  const Eigen::VectorXd f = grid_hpd(4.364e9, 6.6e4, 1001);
  std::stringstream buf;
  write_frequency_plan(buf, f);
  const Eigen::VectorXd back = read_frequency_plan(buf);
  ASSERT_EQ(back.size(), f.size());
  EXPECT_LT((back - f).cwiseAbs().maxCoeff(), 1.0);
  std::istringstream bad("2\n1\n");
  EXPECT_THROW(read_frequency_plan(bad), ParseError);
}

TEST(Io, FitResultJson) {
  FitResult r;
  r.q_l = 8e3;
  r.q_c_mag = 1e4;
  r.q_i = 4e4;
  r.f_r = 5e9;
  r.phi = 0.1;
  r.theta0 = -3.0;
  r.background = {1.1, 0.2, -1e-10};
  r.sigma = {1.0, 2.0, 3.0, 4e-4, 5.0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r.covariance(i, j) = 0.5 * (i + 1) * (j + 1);
  r.chi2 = 0.02;
  r.n_points = 2001;
  r.warnings = {"something"};
  const nlohmann::json j = to_json(r);
  for (const char* key : {"q_l", "q_c_mag", "q_i", "f_r_hz", "phi_rad", "theta0_rad", "a",
                          "alpha_rad", "tau_s", "sigma_q_i", "chi2", "n_points", "covariance"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["covariance"].size(), 4u);
  EXPECT_EQ(j["covariance"][1][2].get<double>(), r.covariance(1, 2));
  const FitResult back = fit_result_from_json(j);
  EXPECT_EQ(back.q_i, r.q_i);
  EXPECT_EQ(back.background.tau, r.background.tau);
  EXPECT_EQ(back.covariance, r.covariance);
  EXPECT_EQ(back.sigma.phi, r.sigma.phi);
  EXPECT_EQ(back.warnings, r.warnings);
}

TEST(Io, TruthJsonRoundTrip) {
  Truth t;
  t.params = {4.364e9, 5.181e6, 6.73e4, 0.668};
  t.background = {1.149, 1.597, -8.825e-11};
  t.noise = {3.5e-4, 1.6e-4, 50.0, FrSpectrum::one_over_sqrt_f, 42};
  t.grid = GridKind::hpd;
  t.span_hz = 6.5e5;
  t.n_points = 2001;
  const Truth back = truth_from_json(to_json(t));
  EXPECT_EQ(back.params.q_i, t.params.q_i);
  EXPECT_EQ(back.background.alpha, t.background.alpha);
  EXPECT_EQ(back.noise.sigma_n_im, t.noise.sigma_n_im);
  EXPECT_EQ(back.noise.fr_spectrum, FrSpectrum::one_over_sqrt_f);
  EXPECT_EQ(back.noise.seed, 42u);
  EXPECT_EQ(back.grid, GridKind::hpd);
  EXPECT_EQ(back.n_points, 2001);
}

TEST(Io, EntropyOutputs) {
  EntropyReport r;
  r.per_point = {{1.0, 0.25, 0.5}, {2.0, 1.0, 0.0}};
  r.h_set = 0.5;
  r.h_density = 0.25;
  r.clamp_count = 1;
  std::ostringstream out;
  write_entropy_csv(out, r);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "f_hz,p_r,h_bits");
  const nlohmann::json j = entropy_summary_json(r);
  EXPECT_EQ(j["h_set_bits"].get<double>(), 0.5);
  EXPECT_EQ(j["h_density"].get<double>(), 0.25);
  EXPECT_EQ(j["clamp_count"].get<long>(), 1);
}

TEST(Io, StrictObjectRejectsUnknownKeys) {
  const nlohmann::json j = {{"a", 1.5}, {"n", 3}, {"inner", {{"x", 1.0}, {"typo", 2}}}, {"extra", true}};
  StrictObject obj(j);
  EXPECT_EQ(obj.number("a"), 1.5);
  EXPECT_EQ(obj.integer("n"), 3);
  StrictObject inner = obj.object("inner");
  EXPECT_EQ(inner.number("x"), 1.0);
  try {
    inner.finish();
    FAIL();
  } catch (const InvalidParameter& e) {
    EXPECT_NE(std::string(e.what()).find("inner.typo"), std::string::npos);
  }
  EXPECT_THROW(obj.finish(), InvalidParameter);
  EXPECT_THROW(obj.number("missing"), InvalidParameter);
  StrictObject typed(j);
  EXPECT_THROW(typed.string("a"), InvalidParameter);
  EXPECT_THROW(typed.integer("a"), InvalidParameter);
  const nlohmann::json empty = nlohmann::json::object();
  StrictObject defaults(empty);
  EXPECT_EQ(defaults.number_or("x", 2.5), 2.5);
  defaults.finish();
  const nlohmann::json axes_json = {{"one", 2.0}, {"many", {1.0, 2.0, 3.0}}, {"empty", nlohmann::json::array()}};
  StrictObject axes(axes_json);
  EXPECT_EQ(axes.numbers("one"), std::vector<double>{2.0});
  EXPECT_EQ(axes.numbers("many").size(), 3u);
  EXPECT_THROW(axes.numbers("empty"), InvalidParameter);
}
