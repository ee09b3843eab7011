// End-to-end checks of the installed CLI binary: exit codes, file outputs,
// determinism. The binary path comes from the build system.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

std::string cli_path() { return SPECLAB_CLI_PATH; }

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  EXPECT_TRUE(in.good()) << "missing " << path;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "speclab_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Cli, VerifyTheoryPassesAndBugInjectionFails) {
  const fs::path dir = fresh_dir("verify");
  EXPECT_EQ(run_cli("verify-theory --instances 100 --seed 5 --out " + dir.string()), 0);
  EXPECT_EQ(run_cli("verify-theory --instances 50 --seed 5 --inject-bug --out " + dir.string()),
            1);
  EXPECT_TRUE(fs::exists(dir / "failing_instance.json"));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("verify-theory --instances 0"), 2);
  EXPECT_EQ(run_cli("no-such-subcommand"), 2);
  EXPECT_EQ(run_cli("sweep --set bogus.key=1"), 2);
  EXPECT_EQ(run_cli("sweep --config /nonexistent.cfg"), 2);
}

TEST(Cli, DecodeWritesTraceWithExactBudget) {
  const fs::path dir = fresh_dir("decode");
  ASSERT_EQ(run_cli("decode --set decode.t_max=8 --set decode.draft_len=3 --seed 11 --out " +
                    dir.string()),
            0);
  const auto trace = nlohmann::json::parse(slurp(dir / "trace.json"));
  EXPECT_EQ(trace.at("generated").size(), 8u);
}

TEST(Cli, SweepWritesReportResidualsAndPlotData) {
  const fs::path dir = fresh_dir("sweep");
  ASSERT_EQ(run_cli("sweep --set decode.episodes=40 --seed 2 --out " + dir.string()), 0);
  const std::string points = slurp(dir / "pareto_points.csv");
  EXPECT_EQ(static_cast<int>(std::count(points.begin(), points.end(), '\n')), 12);  // header + 11
  EXPECT_TRUE(fs::exists(dir / "sweep_report.csv"));
  EXPECT_TRUE(fs::exists(dir / "plot_acceptance_vs_w.csv"));
  EXPECT_TRUE(fs::exists(dir / "plot_quality_vs_cost.csv"));
  EXPECT_TRUE(fs::exists(dir / "sweep_acceptance.svg"));

  // Residual column stays at machine precision across the grid.
  std::istringstream in(points);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto last_comma = line.rfind(',');
    EXPECT_LT(std::stod(line.substr(last_comma + 1)), 1e-12);
  }
}

TEST(Cli, CompareIsDeterministicGivenSeed) {
  const fs::path a = fresh_dir("compare_a");
  const fs::path b = fresh_dir("compare_b");
  const std::string common = "compare --set decode.episodes=50 --seed 9 --out ";
  ASSERT_EQ(run_cli(common + a.string()), 0);
  ASSERT_EQ(run_cli(common + b.string()), 0);
  EXPECT_EQ(slurp(a / "compare_report.csv"), slurp(b / "compare_report.csv"));
}

TEST(Cli, BenchWritesCostSeries) {
  const fs::path dir = fresh_dir("bench");
  ASSERT_EQ(run_cli("bench --set decode.episodes=30 --set sweep.grid=0,0.5,1 --seed 4 --out " +
                    dir.string()),
            0);
  const std::string series = slurp(dir / "bench_cost_vs_acceptance.csv");
  EXPECT_EQ(static_cast<int>(std::count(series.begin(), series.end(), '\n')), 4);
}

TEST(Cli, TrainWritesCurveAndHead) {
  const fs::path dir = fresh_dir("train");
  // Tiny budget: the point is the file contract, not learning quality.
  ASSERT_EQ(run_cli("train --set train.updates_per_epoch=2 --set train.epochs=1 "
                    "--set train.eval_episodes=8 --set train.rollouts_per_prompt=4 "
                    "--seed 3 --out " +
                    dir.string()),
            0);
  const std::string curve = slurp(dir / "train_curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')),
            "epoch,mean_reward,acceptance_rate,mean_w,objective");
  EXPECT_EQ(static_cast<int>(std::count(curve.begin(), curve.end(), '\n')), 3);  // header + 2
  const auto head = nlohmann::json::parse(slurp(dir / "head.json"));
  EXPECT_EQ(head.at("dim").get<int>(), 16);
}

}  // namespace
