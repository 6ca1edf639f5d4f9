#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "umbra/corpus.hpp"
#include "umbra/image_io.hpp"
#include "umbra/shadow.hpp"

using namespace umbra;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "umbra_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(UMBRA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(slurp(p));
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string fake(const char* mode) { return "--oracle-cmd \"" + std::string(UMBRA_FAKE_ORACLE) + " " + mode + "\""; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    save_image(Image(24, 24, {235, 235, 235}), (kRoot / "bright.png").string());
    ASSERT_EQ(run("generate --per-class 2 --seed 5 --out " + q(kRoot / "corpus")), 0);
    ASSERT_EQ(run("train --corpus " + q(kRoot / "corpus") + " --epochs 3 --seed 1 --out " + q(kRoot / "plain")), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, AttackMonotoneOracleSucceedsLocally) {
  const auto out = kRoot / "attack_ok";
  ASSERT_EQ(run("attack --image " + q(kRoot / "bright.png") + " " + fake("monotone") + " --seed 3 --out " + q(out)),
            0);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_TRUE(report.at("success").get<bool>());
  EXPECT_TRUE(fs::exists(out / "run_config.ini"));

  const Image before = load_image((out / "before.png").string());
  const Image adv = load_image((out / "adv.png").string());
  std::vector<Point> v;
  for (const auto& p : report.at("shadow").at("vertices")) v.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  const RegionMask region = rasterize(Polygon(v), RegionMask::full(24, 24));
  std::size_t changed = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      if (!region.at(x, y)) {
        EXPECT_EQ(before.at(x, y), adv.at(x, y));
      }
      changed += before.at(x, y) != adv.at(x, y);
    }
  EXPECT_GT(changed, 0u);
}

TEST_F(Cli, AttackConstantOracleFails) {
  EXPECT_EQ(run("attack --image " + q(kRoot / "bright.png") + " " + fake("fixed") +
                " --swarm 5 --iters 2 --restarts 1 --out " + q(kRoot / "attack_fail")),
            2);
}

TEST_F(Cli, MeasureKIdenticalPair) {
  const auto out = kRoot / "measure";
  run("attack --image " + q(kRoot / "bright.png") + " --measure-k " + q(kRoot / "bright.png") + " " + fake("fixed") +
      " --swarm 5 --iters 1 --restarts 1 --out " + q(out));
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_DOUBLE_EQ(report.at("measured_k").get<double>(), 1.0);
}

TEST_F(Cli, BadInputsExitOne) {
  EXPECT_EQ(run("attack --image " + q(kRoot / "missing.png") + " " + fake("fixed")), 1);
  EXPECT_EQ(run("attack --image " + q(kRoot / "bright.png") + " --k 1.5 " + fake("fixed") + " --out " +
                q(kRoot / "badk")),
            1);
  EXPECT_EQ(run("attack --image " + q(kRoot / "bright.png")), 1);
  EXPECT_EQ(run("bench --corpus " + q(kRoot / "nowhere") + " " + fake("fixed")), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, BenchTables) {
  const auto out = kRoot / "bench";
  const std::string args = "bench --corpus " + q(kRoot / "corpus") + " --model " + q(kRoot / "plain" / "model.bin") +
                           " " + fake("fixed") + " --limit 3 --swarm 5 --iters 2 --restarts 1 --jobs 2 --out ";
  ASSERT_EQ(run(args + q(out)), 0);
  const auto sr = lines(out / "success_rate.csv");
  ASSERT_EQ(sr.size(), 3u);
  EXPECT_EQ(sr[0], "model,0.20,0.43,0.70");
  EXPECT_EQ(sr[1].rfind("model,", 0), 0u);
  EXPECT_EQ(sr[2].rfind("oracle,", 0), 0u);
  const auto mq = lines(out / "mean_queries.csv");
  ASSERT_EQ(mq.size(), 3u);
  EXPECT_EQ(mq[0], sr[0]);

  // Same config, same bytes, independent of --jobs.
  ASSERT_EQ(run(std::string(args).replace(args.find("--jobs 2"), 8, "--jobs 1") + q(kRoot / "bench2")), 0);
  EXPECT_EQ(slurp(out / "success_rate.csv"), slurp(kRoot / "bench2" / "success_rate.csv"));
  EXPECT_EQ(slurp(out / "mean_queries.csv"), slurp(kRoot / "bench2" / "mean_queries.csv"));
}

TEST_F(Cli, BenchSingleImageEdges) {
  const auto out = kRoot / "bench_edges";
  ASSERT_EQ(run("bench --corpus " + q(kRoot / "corpus") + " " + fake("fixed") +
                " --limit 1 --sweep edges --values 3,9 --swarm 4 --iters 1 --restarts 1 --out " + q(out)),
            0);
  const auto sr = lines(out / "success_rate.csv");
  ASSERT_EQ(sr.size(), 2u);
  EXPECT_EQ(sr[0], "model,3,9");
  EXPECT_EQ(sr[1], "oracle,0.00,0.00");
  EXPECT_EQ(lines(out / "mean_queries.csv")[1], "oracle,NA,NA");
}

TEST_F(Cli, BenchDuplicateStemsStayDistinct) {
  const auto out = kRoot / "bench_dup";
  fs::create_directories(kRoot / "copy");
  fs::copy_file(kRoot / "plain" / "model.bin", kRoot / "copy" / "model.bin", fs::copy_options::overwrite_existing);
  ASSERT_EQ(run("bench --corpus " + q(kRoot / "corpus") + " --model " + q(kRoot / "plain" / "model.bin") +
                " --model " + q(kRoot / "copy" / "model.bin") +
                " --limit 1 --values 0.43 --swarm 4 --iters 1 --restarts 1 --out " + q(out)),
            0);
  const auto sr = lines(out / "success_rate.csv");
  ASSERT_EQ(sr.size(), 3u);
  EXPECT_NE(sr[1].substr(0, sr[1].find(',')), sr[2].substr(0, sr[2].find(',')));
}

TEST_F(Cli, ScheduleRowCounts) {
  const std::string base = "schedule --image " + q(kRoot / "bright.png") + " " + fake("fixed");
  ASSERT_EQ(run(base + " --out " + q(kRoot / "sched1")), 0);
  EXPECT_EQ(lines(kRoot / "sched1" / "timeline.csv").size(), 602u);
  ASSERT_EQ(run(base + " --step 60 --out " + q(kRoot / "sched60")), 0);
  EXPECT_EQ(lines(kRoot / "sched60" / "timeline.csv").size(), 12u);
  EXPECT_EQ(run(base + " --start 2021-03-20T8:25 --out " + q(kRoot / "schedbad")), 1);
}

TEST_F(Cli, ScheduleNightWindow) {
  const auto out = kRoot / "night";
  ASSERT_EQ(run("schedule --image " + q(kRoot / "bright.png") + " " + fake("fixed") +
                " --start 2021-03-20T22:00:00 --end 2021-03-20T22:01:00 --step 30 --out " + q(out)),
            0);
  const auto rows = lines(out / "timeline.csv");
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NE(rows[i].find("no_shadow"), std::string::npos);
}

TEST_F(Cli, TrainDeterministicAndAugmentDiffers) {
  const auto log = lines(kRoot / "plain" / "train_log.csv");
  ASSERT_EQ(log.size(), 4u);
  EXPECT_EQ(log[0], "epoch,loss,accuracy");
  ASSERT_EQ(run("train --corpus " + q(kRoot / "corpus") + " --epochs 3 --seed 1 --out " + q(kRoot / "plain2")), 0);
  EXPECT_EQ(slurp(kRoot / "plain" / "model.bin"), slurp(kRoot / "plain2" / "model.bin"));
  ASSERT_EQ(run("train --corpus " + q(kRoot / "corpus") + " --epochs 3 --seed 1 --augment-shadows --out " +
                q(kRoot / "aug")),
            0);
  EXPECT_NE(slurp(kRoot / "plain" / "model.bin"), slurp(kRoot / "aug" / "model.bin"));
}

TEST_F(Cli, ConfigFileReplaysRun) {
  const auto out = kRoot / "replay";
  ASSERT_EQ(run("generate --per-class 1 --seed 9 --out " + q(out)), 0);
  const auto config = slurp(out / "run_config.ini");
  EXPECT_NE(config.find("seed=9"), std::string::npos);
  const auto first = slurp(out / "manifest.json");
  ASSERT_EQ(run("generate --config " + q(out / "run_config.ini") + " --out " + q(kRoot / "replay2")), 0);
  EXPECT_EQ(slurp(kRoot / "replay2" / "manifest.json"), first);
  EXPECT_EQ(slurp(kRoot / "replay2" / "images" / "00003.ppm"), slurp(out / "images" / "00003.ppm"));
}

TEST_F(Cli, SeedFromEnvironment) {
  ASSERT_EQ(run("generate --per-class 1 --seed 9 --out " + q(kRoot / "env_a")), 0);
  ASSERT_EQ(std::system(("UMBRA_SEED=9 " + std::string(UMBRA_CLI) + " generate --per-class 1 --out " +
                         q(kRoot / "env_b") + " >/dev/null")
                            .c_str()),
            0);
  EXPECT_EQ(slurp(kRoot / "env_a" / "images" / "00000.ppm"), slurp(kRoot / "env_b" / "images" / "00000.ppm"));
}
