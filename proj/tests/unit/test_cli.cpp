#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resfit/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string output;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("resfit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) const { return run_in(dir_, args); }

  CliRun run_in(const fs::path& out_dir, const std::string& args) const {
    const fs::path log = dir_ / "log.txt";
    const std::string cmd = std::string("\"") + RESFIT_CLI_PATH + "\" --out-dir \"" + out_dir.string() +
                            "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  fs::path write_json(const std::string& name, const json& j) const { return write(name, j.dump(2)); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static json read(const fs::path& p) { return json::parse(slurp(p)); }

  fs::path dir_;
};

// A measured resonator with a strong background.
json measured_config(const std::string& name, const std::string& grid, double sigma_n) {
  return {{"name", name},
          {"f_r_hz", 4.364e9},
          {"q_i", 5.181e6},
          {"q_c_mag", 6.73e4},
          {"phi_rad", 0.668},
          {"background", {{"a", 1.149}, {"alpha_rad", 1.597}, {"tau_s", -8.825e-11}}},
          {"grid", grid},
          {"n_points", 2001},
          {"span_linewidths", 10.0},
          {"noise", {{"sigma_n", sigma_n}, {"sigma_fr_hz", 0.0}, {"seed", 7}}}};
}

json fit_json(double phi) {
  return {{"q_l", 5e3},      {"q_c_mag", 1e4},     {"q_i", 1e4},        {"f_r_hz", 5e9},
          {"phi_rad", phi},  {"theta0_rad", 0.0},  {"a", 1.0},          {"alpha_rad", 0.0},
          {"tau_s", 0.0},    {"sigma_q_l", 0.0},   {"sigma_q_c_mag", 0.0}, {"sigma_q_i", 0.0},
          {"sigma_f_r_hz", 0.0}, {"sigma_phi_rad", 0.0}, {"chi2", 0.0}, {"n_points", 2001},
          {"covariance", json::array({json::array({0.0, 0.0, 0.0, 0.0}),
                                      json::array({0.0, 0.0, 0.0, 0.0}),
                                      json::array({0.0, 0.0, 0.0, 0.0}),
                                      json::array({0.0, 0.0, 0.0, 0.0})})},
          {"warnings", json::array()}};
}

}  // namespace

TEST_F(Cli, SimulateThenFitRecoversTruth) {
  const auto cfg = write_json("sim.json", measured_config("dut", "spd", 0.0));
  ASSERT_EQ(run("simulate \"" + cfg.string() + "\"").code, 0);
  ASSERT_TRUE(fs::exists(dir_ / "dut.csv"));
  const json truth = read(dir_ / "dut_truth.json");
  const CliRun r = run("fit \"" + (dir_ / "dut.csv").string() + "\"");
  ASSERT_EQ(r.code, 0) << r.output;
  const json fit = read(dir_ / "dut_fit.json");
  const double q_i = truth["q_i"].get<double>();
  EXPECT_NEAR(fit["q_i"].get<double>() / q_i, 1.0, 1e-6);
  EXPECT_NEAR(fit["f_r_hz"].get<double>(), truth["f_r_hz"].get<double>(), 1e-6 * 4.364e9 / 5.181e6);
}

TEST_F(Cli, MissingKeyIsAValidationError) {
  json cfg = measured_config("dut", "spd", 0.0);
  cfg.erase("f_r_hz");
  const CliRun r = run("simulate \"" + write_json("sim.json", cfg).string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("f_r_hz"), std::string::npos) << r.output;
}

TEST_F(Cli, TooFewPointsIsAFitFailure) {
  const auto csv = write("four.csv", "f_hz,s21_re,s21_im\n1,0.5,0\n2,0.4,0.1\n3,0.3,0\n4,0.5,-0.1\n");
  EXPECT_EQ(run("fit \"" + csv.string() + "\"").code, 3);
}

TEST_F(Cli, NonMonotonicSweepNamesTheLine) {
  const auto csv = write("bad.csv", "f_hz,s21_re,s21_im\n1,0,0\n3,0,0\n2,0,0\n4,0,0\n5,0,0\n");
  const CliRun r = run("fit \"" + csv.string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 4"), std::string::npos) << r.output;
}

TEST_F(Cli, HpdPlanCentresOnResonance) {
  ASSERT_EQ(run("simulate \"" + write_json("sim.json", measured_config("coarse", "spd", 0.0)).string() + "\"").code, 0);
  const std::string coarse = (dir_ / "coarse.csv").string();
  const CliRun r = run("hpd-plan \"" + coarse + "\" -n 1001");
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream in(dir_ / "coarse_plan.txt");
  const Eigen::VectorXd plan = resfit::read_frequency_plan(in);
  ASSERT_EQ(plan.size(), 1001);
  EXPECT_NEAR(plan[500], 4.364e9, 1.0);
  EXPECT_NEAR(read(dir_ / "coarse_plan.json")["f_r_hz"].get<double>(), 4.364e9, 1.0);
  EXPECT_EQ(run("hpd-plan \"" + coarse + "\" -n 3").code, 2);
}

TEST_F(Cli, HomophasalSweepGivesSmallerUncertainty) {
  for (const char* grid : {"spd", "hpd"}) {
    json cfg = measured_config(grid, grid, 1e-3);
    ASSERT_EQ(run("simulate \"" + write_json(std::string(grid) + "_sim.json", cfg).string() + "\"").code, 0);
    ASSERT_EQ(run("fit \"" + (dir_ / (std::string(grid) + ".csv")).string() + "\"").code, 0);
  }
  const double spd = read(dir_ / "spd_fit.json")["sigma_q_i"].get<double>();
  const double hpd = read(dir_ / "hpd_fit.json")["sigma_q_i"].get<double>();
  EXPECT_GT(hpd, 0.0);
  EXPECT_LT(hpd, spd);
}

TEST_F(Cli, BenchRerunIsByteIdentical) {
  const json cfg = {{"name", "tiny"},           {"kind", "span"},
                    {"q_i", {1e4}},             {"q_c_mag", 1e4},
                    {"phi_rad", 0.0},           {"f_r_hz", 5e9},
                    {"background", {{"a", 1.0}, {"alpha_rad", 0.0}, {"tau_s", 0.0}}},
                    {"sigma_n", {1e-3}},        {"sigma_fr_hz", {0}},
                    {"n_points", {201}},        {"span_linewidths", {2, 10}},
                    {"trials_per_cell", 4},     {"master_seed", 5},
                    {"bootstrap_resamples", 100}};
  const auto path = write_json("tiny.json", cfg);
  const fs::path root = dir_;
  ASSERT_EQ(run_in(root / "a", "bench \"" + path.string() + "\"").code, 0);
  ASSERT_EQ(run_in(root / "b", "bench \"" + path.string() + "\"").code, 0);
  int compared = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    if (e.path().extension() != ".csv") continue;
    EXPECT_EQ(slurp(e.path()), slurp(root / "b" / e.path().filename())) << e.path().filename();
    ++compared;
  }
  EXPECT_GT(compared, 0);
}

TEST_F(Cli, PhotonsUsesChipPower) {
  const auto fit = write_json("res_fit.json", fit_json(0.0));
  ASSERT_EQ(run("photons \"" + fit.string() + "\" --p-vna-dbm -35 --attenuation-db -73").code, 0);
  const json a = read(dir_ / "res_fit_photons.json");
  EXPECT_NEAR(a["p_chip_w"].get<double>() / (std::pow(10.0, -10.8) * 1e-3), 1.0, 1e-12);
  EXPECT_GT(a["photon_number"].get<double>(), 0.0);
  ASSERT_EQ(run("photons \"" + fit.string() + "\" --p-vna-dbm 0 --attenuation-db 0").code, 0);
  EXPECT_NEAR(read(dir_ / "res_fit_photons.json")["p_chip_w"].get<double>(), 1e-3, 1e-15);
}

TEST_F(Cli, PhotonsAtQuarterTurnIsZero) {
  const auto fit = write_json("quarter_fit.json", fit_json(std::numbers::pi / 2));
  const CliRun r = run("photons \"" + fit.string() + "\" --p-vna-dbm -35 --attenuation-db -73");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("warning"), std::string::npos) << r.output;
  EXPECT_EQ(read(dir_ / "quarter_fit_photons.json")["photon_number"].get<double>(), 0.0);
}

TEST_F(Cli, EntropyFromParameters) {
  const json params = {{"f_r_hz", 5e9}, {"q_i", 5e4}, {"q_c_mag", 1e4}, {"phi_rad", 0.0},
                       {"grid", "spd"}, {"n_points", 201}, {"span_linewidths", 10.0}};
  ASSERT_EQ(run("entropy --params \"" + write_json("demo.json", params).string() + "\"").code, 0);
  std::ifstream in(dir_ / "demo_entropy.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 201);
  const json s = read(dir_ / "demo_entropy.json");
  EXPECT_GT(s["h_set_bits"].get<double>(), 0.0);
  EXPECT_EQ(s["clamp_count"].get<long>(), 0);
}

TEST_F(Cli, EntropyOfEmptySweepIsRejected) {
  const auto csv = write("empty.csv", "f_hz,s21_re,s21_im\n");
  EXPECT_EQ(run("entropy \"" + csv.string() + "\"").code, 2);
}

TEST_F(Cli, EntropyReportsClamping) {
  const json params = {{"f_r_hz", 5e9}, {"q_i", 1e9}, {"q_c_mag", 1.05e4}, {"phi_rad", 1.2},
                       {"grid", "spd"}, {"n_points", 2001}, {"span_linewidths", 10.0}};
  ASSERT_EQ(run("entropy --params \"" + write_json("rot.json", params).string() + "\"").code, 0);
  EXPECT_GT(read(dir_ / "rot_entropy.json")["clamp_count"].get<long>(), 0);
}
