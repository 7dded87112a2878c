// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("msqg_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(MSQG_CLI_PATH) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  static std::string sample(const std::string& name) {
    return (fs::path(MSQG_SAMPLES_DIR) / name).string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, DegenerateSecondMomentPasses) {
  const fs::path out = dir_ / "out";
  const Result r =
      run("experiment --config " + sample("second_moment_n1.json") + " --out " + out.string());
  EXPECT_EQ(r.code, 0) << r.err;
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["exit_code"], 0);
  EXPECT_EQ(manifest["verdict"], "pass");
  EXPECT_TRUE(fs::exists(out / "report.csv"));
  EXPECT_TRUE(fs::exists(out / "series.csv"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
}

TEST_F(Cli, MissingEpsilonIsAConfigError) {
  const fs::path cfg = write_config(
      "bad.json", R"({"version": 1, "experiment": "second_moment", "seed": 1, "N": 2, "replicas": 4})");
  const Result r = run("experiment --config " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("epsilon"), std::string::npos) << r.err;
}

TEST_F(Cli, MalformedJsonReportsLocation) {
  const fs::path cfg = write_config("bad.json", "{\"version\": 1,\n \"seed\": }");
  const Result r = run("experiment --config " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownSubcommandOrMissingConfig) {
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("experiment --out " + (dir_ / "o").string()).code, 2);
  EXPECT_EQ(run("experiment --config " + (dir_ / "absent.json").string()).code, 2);
}

TEST_F(Cli, RerunIsByteIdentical) {
  const fs::path cfg = write_config("st.json", R"({"version": 1, "experiment": "stationarity",
      "seed": 3, "epsilon": 0.5, "N": 4, "delta": 0.02, "dt": 0.01, "T": 0.05, "replicas": 30,
      "kernel": "direct"})");
  const Result a = run("experiment --config " + cfg.string() + " --out " + (dir_ / "a").string());
  const Result b = run("experiment --config " + cfg.string() + " --out " + (dir_ / "b").string() +
                       " --workers 2");
  ASSERT_NE(a.code, 2) << a.err;
  EXPECT_EQ(a.code, b.code);
  for (const char* f : {"report.csv", "series.csv", "report.json"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  // the seed flag overrides the config
  run("experiment --config " + cfg.string() + " --out " + (dir_ / "c").string() + " --seed 4");
  EXPECT_NE(slurp(dir_ / "a" / "series.csv"), slurp(dir_ / "c" / "series.csv"));
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "c" / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 4);
}

TEST_F(Cli, SimulateWritesTrajectory) {
  const fs::path cfg = write_config("sim.json", R"({"version": 1, "experiment": "simulate",
      "seed": 1, "epsilon": 0.5, "N": 3, "delta": 0.02, "dt": 0.01, "T": 0.05})");
  const fs::path out = dir_ / "sim";
  const Result r = run("simulate --config " + cfg.string() + " --out " + out.string());
  EXPECT_EQ(r.code, 0) << r.err;
  std::istringstream traj(slurp(out / "trajectory.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(traj, line)) ++lines;
  // header plus 3 vortices at t = 0, 0.01, ..., 0.05
  EXPECT_EQ(lines, 1 + 3 * 6);
  // simulate refuses configs for other experiments
  EXPECT_EQ(run("simulate --config " + sample("second_moment_n1.json") + " --out " +
                (dir_ / "x").string())
                .code,
            2);
}
