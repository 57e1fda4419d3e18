#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;
using dannet::testing::TempDir;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli(const TempDir& tmp, const std::string& args) {
  const fs::path out = tmp.path() / "stdout.txt", err = tmp.path() / "stderr.txt";
  const std::string cmd = std::string(DANNET_CLI_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

TEST(Cli, SubcommandHelpExitsZero) {
  TempDir tmp;
  for (const char* sub : {"generate", "weights", "pretrain", "train", "eval", "relight"}) {
    const Outcome r = cli(tmp, std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
  const Outcome r = cli(tmp, "eval --help");
  EXPECT_NE(r.out.find("--std"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsAUsageError) {
  TempDir tmp;
  const Outcome r = cli(tmp, "frobnicate");
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("frobnicate"), std::string::npos);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, MissingAndInvalidFlagsAreUsageErrors) {
  TempDir tmp;
  EXPECT_EQ(cli(tmp, "train --source-dir x").code, 2);
  EXPECT_EQ(cli(tmp, "eval --checkpoint /nonexistent --data x --out y").code, 2);
  EXPECT_EQ(cli(tmp, "weights --source-dir x --out y --set crop_source=50").code, 2);
  EXPECT_EQ(cli(tmp, "weights --source-dir x --out y --set no_such_key=1").code, 2);
}

TEST(Cli, RuntimeFailureExitsOne) {
  TempDir tmp;
  const Outcome r = cli(tmp, "weights --source-dir " + (tmp.path() / "missing").string() + " --out " +
                             (tmp.path() / "w.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, GenerateIsByteReproducible) {
  TempDir tmp;
  const fs::path a = tmp.path() / "a", b = tmp.path() / "b";
  ASSERT_EQ(cli(tmp, "generate --seed 7 --scenes 4 --size 32 --out " + a.string()).code, 0);
  ASSERT_EQ(cli(tmp, "generate --seed 7 --scenes 4 --size 32 --out " + b.string()).code, 0);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  int files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) files_b += e.is_regular_file();
  EXPECT_EQ(files, files_b);
  EXPECT_GT(files, 10);
}

TEST(Cli, FlagsOverrideConfigFileOverrideDefaults) {
  TempDir tmp;
  const fs::path data = tmp.path() / "d";
  ASSERT_EQ(cli(tmp, "generate --seed 1 --scenes 4 --size 32 --out " + data.string()).code, 0);
  const fs::path cfg = tmp.path() / "c.cfg";
  std::ofstream(cfg) << "taxonomy = synthetic\nstd_train = 0.2\nstd_test = 0.3\n";
  const fs::path out = tmp.path() / "w.json";
  const std::string base =
      "weights --source-dir " + (data / "source").string() + " --out " + out.string();
  ASSERT_EQ(cli(tmp, base + " --set taxonomy=synthetic").code, 0);
  auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["train"]["std"], 0.05);
  ASSERT_EQ(cli(tmp, base + " --config " + cfg.string()).code, 0);
  j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["train"]["std"], 0.2);
  EXPECT_EQ(j["test"]["std"], 0.3);
  ASSERT_EQ(cli(tmp, base + " --config " + cfg.string() + " --set std_train=0.07").code, 0);
  j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["train"]["std"], 0.07);
  EXPECT_EQ(j["test"]["std"], 0.3);
  EXPECT_EQ(j["classes"].size(), 7u);
}

TEST(Cli, PipelineSmoke) {
  TempDir tmp;
  const fs::path data = tmp.path() / "d";
  ASSERT_EQ(cli(tmp, "generate --seed 2 --scenes 6 --size 32 --out " + data.string()).code, 0);
  const fs::path cfg = tmp.path() / "c.cfg";
  std::ofstream(cfg) << "taxonomy = synthetic\ncrop_source = 32\ncrop_target = 32\n"
                        "relight_width = 4\nseg_width = 4\ndisc_width = 4\n";
  const std::string common = " --config " + cfg.string() + " --source-dir " +
                             (data / "source").string();
  const fs::path pre = tmp.path() / "pre.ckpt";
  ASSERT_EQ(cli(tmp, "pretrain" + common + " --iters 2 --out " + pre.string()).code, 0);
  const fs::path run = tmp.path() / "run";
  const Outcome tr = cli(tmp, "train" + common + " --target-day-dir " + (data / "target_day").string() +
                              " --target-night-dir " + (data / "target_night").string() +
                              " --pairs-file " + (data / "pairs.tsv").string() + " --out-dir " +
                              run.string() + " --pretrained " + pre.string() + " --iters 3");
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(tr.out.empty());
  EXPECT_TRUE(fs::exists(run / "final.ckpt"));

  const fs::path ev = tmp.path() / "eval";
  const Outcome e = cli(tmp, "eval --checkpoint " + (run / "final.ckpt").string() + " --data " +
                             (data / "night_val").string() + " --out " + ev.string() +
                             " --sweep 0,0.16");
  ASSERT_EQ(e.code, 0) << e.err;
  const auto metrics = nlohmann::json::parse(slurp(ev / "metrics.json"));
  EXPECT_EQ(metrics["std_test"], 0.16);
  EXPECT_GE(metrics["miou"].get<double>(), 0.0);
  EXPECT_EQ(metrics["per_class_iou"].size(), 7u);
  int preds = 0, vals = 0;
  for (const auto& f : fs::directory_iterator(ev / "predictions")) preds += f.is_regular_file();
  for (const auto& f : fs::directory_iterator(data / "night_val" / "images")) vals += f.is_regular_file();
  EXPECT_EQ(preds, vals);
  EXPECT_EQ(slurp(ev / "sweep.csv").rfind("std,miou\n0,", 0), 0u);

  const fs::path relit = tmp.path() / "relit";
  ASSERT_EQ(cli(tmp, "relight --checkpoint " + (run / "final.ckpt").string() + " --input " +
                         (data / "night_val").string() + " --out " + relit.string()).code, 0);
  int relit_count = 0;
  for (const auto& f : fs::directory_iterator(relit)) relit_count += f.is_regular_file();
  EXPECT_EQ(relit_count, vals);
}

}  // namespace
