#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SNUTS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("snuts_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json meta(const fs::path& run_dir) { return nlohmann::json::parse(slurp(run_dir / "meta.json")); }

const std::string kShort = " --chains 2 --warmup 100 --iter 100";

TEST(Cli, SchoolsAutoPicksDiagonal) {
  const auto out = scratch("schools");
  ASSERT_EQ(run("sample --model eight_schools_nc --mode snuts-auto --seed 3 --out " + out.string() + kShort), 0);
  const auto m = meta(out / "snuts-auto" / "rep1");
  EXPECT_EQ(m["preconditioner"], "diag");
  EXPECT_TRUE(m["fallback"].is_null());
  fs::remove_all(out);
}

TEST(Cli, FunnelFallsBack) {
  const auto out = scratch("funnel");
  ASSERT_EQ(run("sample --model funnel --seed 2 --out " + out.string() + kShort), 0);
  const auto m = meta(out / "snuts-auto" / "rep1");
  EXPECT_EQ(m["fallback"], "stan_default");
  EXPECT_TRUE(m["summary"].contains("divergences"));
  fs::remove_all(out);
}

TEST(Cli, ExplicitModeLaplaceFailureExitCode) {
  const auto out = scratch("funnel_sparse");
  EXPECT_EQ(run("sample --model funnel --mode snuts-sparse --out " + out.string() + kShort), 3);
  fs::remove_all(out);
}

TEST(Cli, RerunIsByteIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  const std::string args = "sample --model nb_glmm --param groups=10 --mode snuts-sparse,stan_default --seed 7" + kShort;
  ASSERT_EQ(run(args + " --out " + a.string()), 0);
  ASSERT_EQ(run(args + " --out " + b.string()), 0);
  for (const char* mode : {"snuts-sparse", "stan_default"}) {
    const auto draws = slurp(a / mode / "rep1" / "draws.csv");
    EXPECT_FALSE(draws.empty());
    EXPECT_EQ(draws, slurp(b / mode / "rep1" / "draws.csv")) << mode;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, ReplayFromMetaIsByteIdentical) {
  // snuts-auto times dense against sparse; meta.json records the outcome.
  const auto a = scratch("replay_a"), c = scratch("replay_c");
  ASSERT_EQ(run("sample --model nb_glmm --param groups=10 --mode snuts-auto,ela-snuts --replicates 2 --seed 7 --out " +
                a.string() + kShort),
            0);
  for (const char* mode : {"snuts-auto", "ela-snuts"}) {
    for (const char* rep : {"rep1", "rep2"}) {
      const auto src = a / mode / rep;
      const auto invocation = meta(src)["invocation"];
      EXPECT_EQ(invocation["replicates"], 1);
      ASSERT_EQ(run("sample --config " + (src / "meta.json").string() + " --out " + c.string()), 0);
      EXPECT_EQ(slurp(src / "draws.csv"), slurp(c / mode / "rep1" / "draws.csv")) << mode << rep;
      fs::remove_all(c);
    }
  }
  fs::remove_all(a);
}

TEST(Cli, ConfigErrors) {
  const auto out = scratch("bad");
  EXPECT_EQ(run("sample --model nope --out " + out.string()), 2);
  EXPECT_EQ(run("sample --model eight_schools_nc --mode warp --out " + out.string()), 2);
  EXPECT_EQ(run("sample --model eight_schools_nc --chains 0 --out " + out.string()), 2);
  EXPECT_EQ(run("sample --bogus-flag"), 2);
  EXPECT_EQ(run(""), 2);
  fs::create_directories(out);
  std::ofstream(out / "cfg.json") << R"({"model": "eight_schools_nc", "colour": 3})";
  EXPECT_EQ(run("sample --config " + (out / "cfg.json").string()), 2);
  fs::remove_all(out);
}

TEST(Cli, JsonConfigDrivesRun) {
  const auto out = scratch("json");
  fs::create_directories(out);
  nlohmann::json cfg{{"model", "bivariate_normal"}, {"params", {{"rho", 0.9}}}, {"modes", {"snuts-dense"}},
                     {"chains", 2}, {"warmup", 100}, {"iterations", 100}, {"out", (out / "runs").string()}};
  std::ofstream(out / "cfg.json") << cfg.dump();
  ASSERT_EQ(run("sample --config " + (out / "cfg.json").string()), 0);
  EXPECT_EQ(meta(out / "runs" / "snuts-dense" / "rep1")["preconditioner"], "dense");
  fs::remove_all(out);
}

TEST(Cli, DiagnoseRewritesSummary) {
  const auto out = scratch("diag");
  ASSERT_EQ(run("sample --model eight_schools_nc --out " + out.string() + kShort), 0);
  const auto dir = out / "snuts-auto" / "rep1";
  const auto before = slurp(dir / "summary.csv");
  fs::remove(dir / "summary.csv");
  ASSERT_EQ(run("diagnose --out " + dir.string()), 0);
  EXPECT_EQ(slurp(dir / "summary.csv"), before);
  EXPECT_EQ(run("diagnose --out " + (out / "missing").string()), 2);
  fs::remove_all(out);
}

TEST(Cli, ScaleSingleGridPoint) {
  const auto out = scratch("scale");
  ASSERT_EQ(run("scale --model gmrf_poisson_lattice --size-param side --sizes 4 --mode snuts-sparse "
                "--replicates 1 --out " + out.string() + kShort),
            0);
  std::ifstream in(out / "scale.csv");
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_NE(header.find("efficiency"), std::string::npos);
  EXPECT_FALSE(row.empty());
  EXPECT_FALSE(std::getline(in, extra) && !extra.empty());
  fs::remove_all(out);
}

TEST(Cli, GradbenchAndApproxFlagging) {
  const auto out = scratch("bench");
  ASSERT_EQ(run("gradbench --model gmrf_poisson_lattice --size-param side --sizes 6 --timing-reps 5 --out " +
                out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "gradbench.csv"));
  ASSERT_EQ(run("approx --model funnel --out " + (out / "approx").string()), 0);
  EXPECT_NE(slurp(out / "approx" / "approx_summary.csv").find("fail"), std::string::npos);
  fs::remove_all(out);
}

}  // namespace
