#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tempdir.hpp"

#ifndef URDMU_CLI_PATH
#error "URDMU_CLI_PATH must name the urdmu executable"
#endif

namespace fs = std::filesystem;
using urdmu::testing::TempDir;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() /
                       ("urdmu_cli_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++) + ".log");
  const std::string cmd =
      env + " '" URDMU_CLI_PATH "' " + args + " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  fs::remove(log);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Small dataset plus an untrained checkpoint, shared across tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const CliResult s = cli("synth --out " + q(dir_->path() / "data") +
                      " --videos 3 --test-videos 2 --dim 8 --min-snippets 20 --max-snippets 40");
    ASSERT_EQ(s.code, 0) << s.out;
    const CliResult t = cli("train --normal " + q(data() / "train.tsv") + " --abnormal " +
                      q(data() / "train.tsv") + " --out " + q(ckpt()) +
                      " --iters 2 --batch 4 --dim 16 --heads 2 --snippets 16 --mem-a 8 --mem-n 8");
    ASSERT_EQ(t.code, 0) << t.out;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return dir_->path() / "data"; }
  static fs::path ckpt() { return dir_->path() / "model.ckpt"; }
  static TempDir* dir_;
};

TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, SynthTwiceIsByteIdentical) {
  TempDir a("cli_a"), b("cli_b");
  const std::string flags = " --videos 20 --dim 32 --seed 7";
  ASSERT_EQ(cli("synth --out " + q(a.path()) + flags).code, 0);
  ASSERT_EQ(cli("synth --out " + q(b.path()) + flags).code, 0);
  std::size_t fvb = 0, tsv = 0;
  for (const auto& e : fs::directory_iterator(a.path())) {
    const auto name = e.path().filename();
    ASSERT_TRUE(fs::exists(b.path() / name)) << name;
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / name)) << name;
    fvb += e.path().extension() == ".fvb";
    tsv += e.path().extension() == ".tsv";
  }
  EXPECT_EQ(fvb, 60u);
  EXPECT_EQ(tsv, 2u);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir d("cli_usage");
  EXPECT_EQ(cli("synth --out " + q(d.path()) + " --videos 0").code, 2);
  EXPECT_EQ(cli("synth --out /proc/urdmu_no_such_dir/x").code, 2);
  EXPECT_EQ(cli("bogus").code, 2);
  EXPECT_EQ(cli("synth --out " + q(d.path()) + " --no-such-flag 1").code, 2);
  EXPECT_EQ(cli("").code, 2);
}

TEST(Cli, SeedEnvironmentOverride) {
  TempDir a("cli_seed_a"), b("cli_seed_b"), c("cli_seed_c");
  const std::string flags = " --videos 2 --test-videos 1 --dim 4";
  const CliResult ra = cli("synth --out " + q(a.path()) + flags + " --seed 3", "URDMU_SEED=11");
  ASSERT_EQ(ra.code, 0) << ra.out;
  EXPECT_NE(ra.out.find("# seed=11"), std::string::npos) << ra.out;
  ASSERT_EQ(cli("synth --out " + q(b.path()) + flags + " --seed 11").code, 0);
  ASSERT_EQ(cli("synth --out " + q(c.path()) + flags + " --seed 3").code, 0);
  EXPECT_EQ(slurp(a.path() / "train.tsv"), slurp(b.path() / "train.tsv"));
  const auto first = fs::directory_iterator(a.path())->path().filename();
  EXPECT_EQ(slurp(a.path() / first), slurp(b.path() / first));
  bool differs = false;
  for (const auto& e : fs::directory_iterator(a.path()))
    differs |= slurp(e.path()) != slurp(c.path() / e.path().filename());
  EXPECT_TRUE(differs);
  EXPECT_EQ(cli("synth --out " + q(a.path()) + flags, "URDMU_SEED=abc").code, 2);
}

TEST_F(CliPipeline, TrainPrintsResolvedDefaults) {
  const CliResult r = cli("train --normal " + q(data() / "train.tsv") + " --abnormal " +
                    q(data() / "train.tsv") + " --out " + q(dir_->path() / "zero.ckpt") +
                    " --iters 0");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* line : {"# lr=0.0001", "# batch=64", "# iters=0", "# mem_a=60", "# mem_n=60",
                           "# lambda1=0.1", "# lambda2=0.1", "# lambda3=0.001",
                           "# lambda4=0.0001", "# dist_d=100", "# n_snippets=200"})
    EXPECT_NE(r.out.find(line), std::string::npos) << line << "\n" << r.out;
  EXPECT_TRUE(fs::exists(dir_->path() / "zero.ckpt"));
  EXPECT_EQ(slurp(dir_->path() / "zero.ckpt.loss.csv"), "step,total,cls,dm,trip,kl,dis\n");
}

TEST_F(CliPipeline, LossCsvHasOneRowPerStep) {
  const std::string csv = slurp(ckpt().string() + ".loss.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,total,cls,dm,trip,kl,dis");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.rfind(std::to_string(rows) + ",", 0), 0u) << line;
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(CliPipeline, NumericFaultExitsThree) {
  const CliResult r = cli("train --normal " + q(data() / "train.tsv") + " --abnormal " +
                    q(data() / "train.tsv") + " --out " + q(dir_->path() / "nan.ckpt") +
                    " --iters 30 --batch 4 --dim 16 --heads 2 --snippets 16 --lr 1e300");
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_NE(r.out.find("numeric fault at step"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, ScoreEvalAndDeterministicTraces) {
  const fs::path s1 = dir_->path() / "s1", s2 = dir_->path() / "s2";
  const CliResult a = cli("score --checkpoint " + q(ckpt()) + " --input " + q(data() / "test.tsv") +
                    " --out " + q(s1));
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(cli("score --checkpoint " + q(ckpt()) + " --input " + q(data() / "test.tsv") +
                " --out " + q(s2))
                .code,
            0);
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(s1)) {
    ++traces;
    EXPECT_EQ(slurp(e.path()), slurp(s2 / e.path().filename()));
  }
  EXPECT_EQ(traces, 4u);

  const CliResult all = cli("eval --scores " + q(s1) + " --gt " + q(data() / "test.tsv"));
  ASSERT_EQ(all.code, 0) << all.out;
  EXPECT_NE(all.out.find("auc="), std::string::npos);
  EXPECT_NE(all.out.find("far="), std::string::npos);
  EXPECT_EQ(all.out.find("auc_sub="), std::string::npos);
  EXPECT_TRUE(fs::exists(s1 / "report.txt"));

  const CliResult sub = cli("eval --scores " + q(s1) + " --gt " + q(data() / "test.tsv") +
                      " --subset abnormal --report " + q(dir_->path() / "sub.txt"));
  ASSERT_EQ(sub.code, 0) << sub.out;
  const std::string rep = slurp(dir_->path() / "sub.txt");
  EXPECT_NE(rep.find("auc_sub="), std::string::npos) << rep;
  EXPECT_NE(rep.find("ap_sub="), std::string::npos) << rep;
}

TEST_F(CliPipeline, EmptyManifestWarnsAndSucceeds) {
  std::ofstream(dir_->path() / "empty.tsv");
  const CliResult r = cli("score --checkpoint " + q(ckpt()) + " --input " +
                    q(dir_->path() / "empty.tsv") + " --out " + q(dir_->path() / "none"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("warning"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, WidthMismatchExitsTwo) {
  TempDir wide("cli_wide");
  ASSERT_EQ(cli("synth --out " + q(wide.path()) + " --videos 1 --test-videos 1 --dim 5").code, 0);
  const CliResult r = cli("score --checkpoint " + q(ckpt()) + " --input " +
                    q(wide.path() / "test.tsv") + " --out " + q(wide.path() / "s"));
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(CliPipeline, PerfectTracesAndMissingGroundTruth) {
  // Traces copied from the ground truth stored in each test FVB:
  // "FVB1", u32 T, u32 F, u8 label, u32 gt_len, gt bytes.
  const fs::path perfect = dir_->path() / "perfect";
  fs::create_directories(perfect);
  for (const auto& e : fs::directory_iterator(data())) {
    const std::string name = e.path().filename().string();
    if (name.rfind("test_", 0) != 0 || e.path().extension() != ".fvb") continue;
    const std::string bytes = slurp(e.path());
    std::uint32_t gt_len = 0;
    std::memcpy(&gt_len, bytes.data() + 13, 4);
    std::ofstream out(perfect / (e.path().stem().string() + ".csv"));
    for (std::uint32_t i = 0; i < gt_len; ++i)
      out << e.path().stem().string() << ',' << i << ',' << int(bytes[17 + i]) << '\n';
  }
  const CliResult r = cli("eval --scores " + q(perfect) + " --gt " + q(data() / "test.tsv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("auc=1.000000"), std::string::npos) << r.out;

  EXPECT_EQ(cli("eval --scores " + q(perfect) + " --gt " + q(data() / "train.tsv")).code, 2);
  EXPECT_EQ(cli("eval --scores " + q(perfect) + " --gt " + q(dir_->path() / "absent.tsv")).code,
            2);
}

TEST(Cli, SelftestPassesAndNegativeControlFails) {
  const CliResult ok = cli("selftest");
  EXPECT_EQ(ok.code, 0) << ok.out;
  const CliResult bad = cli("selftest --debug-corrupt-kl");
  EXPECT_EQ(bad.code, 1) << bad.out;
  EXPECT_NE(bad.out.find("kl_loss"), std::string::npos) << bad.out;
}
