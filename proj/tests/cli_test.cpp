// Copyright 2026 The agentemb Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end runs of the agentemb binary at small sizes.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "agentemb/binary_io.hpp"
#include "gtest/gtest.h"

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string err;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "agentemb_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  const std::string err_file = path("stderr.txt");
  const std::string cmd = std::string(AGENTEMB_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " + err_file;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  return r;
}

/// Data lines of a CSV report (metadata '#' lines dropped).
std::vector<std::string> data_lines(const std::string& p) {
  std::istringstream is(slurp(p));
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);)
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

const std::string kZooArgs = "train-zoo --n 4 --min-steps 300 --max-steps 2500 --checkpoints 3 --eval-episodes 20";

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(run("--seed 3 " + kZooArgs + " --out " + path("zoo.bin")).exit_code, 0);
    ASSERT_EQ(run("--seed 4 train-gen --zoo " + path("zoo.bin") + " --epochs 3 --out " + path("model.bin")).exit_code,
              0);
  }
};

TEST_F(CliTest, TrainZooIsByteIdenticalAcrossRunsAndWorkers) {
  ASSERT_EQ(run("--seed 3 --workers 1 " + kZooArgs + " --out " + path("zoo_w1.bin")).exit_code, 0);
  ASSERT_EQ(run("--seed 3 --workers 3 " + kZooArgs + " --out " + path("zoo_w3.bin") + " --jsonl " + path("zoo.jsonl"))
                .exit_code,
            0);
  EXPECT_EQ(slurp(path("zoo.bin")), slurp(path("zoo_w1.bin")));
  EXPECT_EQ(slurp(path("zoo.bin")), slurp(path("zoo_w3.bin")));
  EXPECT_EQ(data_lines(path("zoo.jsonl")).size(), 12u);
}

TEST_F(CliTest, TrainZooRejectsZeroRuns) { EXPECT_EQ(run("train-zoo --n 0 --out " + path("x.bin")).exit_code, 1); }

TEST_F(CliTest, UnknownSubcommandIsUsageError) { EXPECT_EQ(run("frobnicate").exit_code, 1); }

TEST_F(CliTest, MissingAndCorruptFilesAreDataErrors) {
  EXPECT_EQ(run("train-gen --zoo " + path("none.bin") + " --out " + path("m.bin")).exit_code, 2);
  std::string bytes = slurp(path("zoo.bin"));
  bytes.resize(bytes.size() / 2);
  agentemb::write_file_atomic(path("half.bin"), bytes);
  const auto r = run("train-gen --zoo " + path("half.bin") + " --out " + path("m.bin"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("\"error\":\"data\""), std::string::npos);
  EXPECT_FALSE(fs::exists(path("m.bin")));
}

TEST_F(CliTest, DivergentTrainingIsNumericalFailure) {
  EXPECT_EQ(run("train-gen --zoo " + path("zoo.bin") + " --epochs 3 --lr 1e200 --out " + path("bad.bin")).exit_code,
            3);
}

TEST_F(CliTest, TrainGenIsByteIdentical) {
  ASSERT_EQ(run("--seed 4 train-gen --zoo " + path("zoo.bin") + " --epochs 3 --out " + path("model2.bin") +
                " --curve " + path("curve.csv"))
                .exit_code,
            0);
  EXPECT_EQ(slurp(path("model.bin")), slurp(path("model2.bin")));
  const auto curve = data_lines(path("curve.csv"));
  ASSERT_EQ(curve.size(), 4u);
  EXPECT_EQ(curve[0], "epoch,recon,kl,total");
}

TEST_F(CliTest, SampleEmitsRowsSummaryAndHistogram) {
  const std::string args = "--seed 5 sample --model " + path("model.bin") + " --zoo " + path("zoo.bin") + " --n 7";
  ASSERT_EQ(run(args + " --out " + path("s1.csv") + " --histogram " + path("h1.csv")).exit_code, 0);
  ASSERT_EQ(run(args + " --workers 2 --out " + path("s2.csv") + " --histogram " + path("h2.csv")).exit_code, 0);
  EXPECT_EQ(slurp(path("s1.csv")), slurp(path("s2.csv")));
  EXPECT_EQ(slurp(path("h1.csv")), slurp(path("h2.csv")));
  const auto rows = data_lines(path("s1.csv"));
  ASSERT_EQ(rows.size(), 9u);  // header + 7 samples + summary
  EXPECT_EQ(rows[0], "sample,survival_time,std_survival_time");
  EXPECT_EQ(split(rows.back())[0], "summary");
  const auto hist = data_lines(path("h1.csv"));
  ASSERT_EQ(hist.size(), 21u);
  int total = 0;
  for (std::size_t i = 1; i < hist.size(); ++i) total += std::stoi(split(hist[i])[2]);
  EXPECT_EQ(total, 7);
  const std::string head = slurp(path("s1.csv")).substr(0, 40);
  EXPECT_EQ(head.rfind("# tool=agentemb", 0), 0u);
}

TEST_F(CliTest, PosteriorSampleNeedsZoo) {
  EXPECT_EQ(run("sample --model " + path("model.bin") + " --n 2 --out " + path("s.csv")).exit_code, 1);
  EXPECT_EQ(run("sample --model " + path("model.bin") + " --n 2 --sample-mode prior --out " + path("s.csv")).exit_code,
            0);
}

TEST_F(CliTest, EvalZeroWeightsLastsAboutNineSteps) {
  std::string zeros = "[";
  for (int i = 0; i < 212; ++i) zeros += i ? ",0" : "0";
  zeros += "]";
  agentemb::write_file_atomic(path("zero.json"), zeros);
  ASSERT_EQ(run("eval --weights " + path("zero.json") + " --out " + path("eval.csv") + " --trajectory " +
                path("traj.jsonl"))
                .exit_code,
            0);
  const auto rows = data_lines(path("eval.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(std::stod(split(rows[1])[0]), 9.0, 2.0);
  EXPECT_FALSE(data_lines(path("traj.jsonl")).empty());

  agentemb::write_file_atomic(path("short.txt"), std::string("1 2 3"));
  EXPECT_EQ(run("eval --weights " + path("short.txt")).exit_code, 2);
  EXPECT_EQ(run("eval").exit_code, 1);
}

TEST_F(CliTest, InterpolateEmitsTwentyRows) {
  const std::string args = "--seed 6 interpolate --model " + path("model.bin") + " --zoo " + path("zoo.bin") +
                           " --id-a 0 --id-b 11 --eval-episodes 10 --ref-states 200";
  ASSERT_EQ(run(args + " --out " + path("i1.csv")).exit_code, 0);
  ASSERT_EQ(run(args + " --workers 4 --out " + path("i2.csv")).exit_code, 0);
  EXPECT_EQ(slurp(path("i1.csv")), slurp(path("i2.csv")));
  const auto rows = data_lines(path("i1.csv"));
  ASSERT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows[0], "alpha,survival_latent,survival_weight,baseline_line");
  EXPECT_EQ(std::stod(split(rows[1])[0]), 0.0);
  EXPECT_EQ(std::stod(split(rows[20])[0]), 1.5);
}

TEST_F(CliTest, UnknownIdListsAvailableIds) {
  const auto r = run("interpolate --model " + path("model.bin") + " --zoo " + path("zoo.bin") +
                     " --id-a 0 --id-b 500 --out " + path("i.csv"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("0-11"), std::string::npos) << r.err;
}

TEST_F(CliTest, RepairSweepEmitsTwentyRows) {
  const std::string args = "--seed 7 repair-sweep --model " + path("model.bin") + " --zoo " + path("zoo.bin") +
                           " --id 5 --budget 10 --top-k 3 --eval-episodes 10";
  ASSERT_EQ(run(args + " --out " + path("r1.csv")).exit_code, 0);
  ASSERT_EQ(run(args + " --out " + path("r2.csv")).exit_code, 0);
  EXPECT_EQ(slurp(path("r1.csv")), slurp(path("r2.csv")));
  const auto rows = data_lines(path("r1.csv"));
  ASSERT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows[0], "degradation_fraction,criterion,success,st_error,samples_used");
  EXPECT_EQ(split(rows[1])[1], "missing");
  EXPECT_EQ(split(rows[2])[1], "whole");
}

TEST_F(CliTest, ConvergenceSummaryHasTableShape) {
  const std::string args = "--seed 8 convergence --zoo " + path("zoo.bin") +
                           " --source zoo --good-n 3 --bad-n 3 --good-min 1 --bad-min 1 --bad-max 200 "
                           "--ref-states 200";
  ASSERT_EQ(run(args + " --out " + path("c1.csv") + " --pairs-out " + path("p1.csv")).exit_code, 0);
  ASSERT_EQ(run(args + " --out " + path("c2.csv")).exit_code, 0);
  EXPECT_EQ(slurp(path("c1.csv")), slurp(path("c2.csv")));
  const auto rows = data_lines(path("c1.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "group,layer,mean_cd,std_cd,pairs");
  EXPECT_EQ(split(rows[1])[0] + "," + split(rows[1])[1], "good,hidden");
  EXPECT_EQ(split(rows[4])[0] + "," + split(rows[4])[1], "bad,output");
  EXPECT_EQ(data_lines(path("p1.csv")).size(), 1u + 4 * 3);
  // More good agents than the zoo holds.
  EXPECT_EQ(run("convergence --zoo " + path("zoo.bin") + " --source zoo --good-n 500 --out " + path("c3.csv"))
                .exit_code,
            2);
}

TEST_F(CliTest, EfficiencySweepFansOutAndMatchesSample) {
  const std::string base = "--seed 9 efficiency-sweep --zoo " + path("zoo.bin") + " --epochs 2 --n 6 --batch-size 2";
  ASSERT_EQ(run(base + " --fractions 1.0 0.5 0.25 --out-dir " + path("eff")).exit_code, 0);
  for (const char* f : {"1", "0.5", "0.25"}) {
    EXPECT_TRUE(fs::exists(workdir() / "eff" / (std::string("hist_") + f + ".csv"))) << f;
  }
  EXPECT_EQ(data_lines(path("eff/summary.csv")).size(), 4u);

  ASSERT_EQ(run("--seed 9 train-gen --zoo " + path("zoo.bin") + " --epochs 2 --batch-size 2 --out " +
                path("m9.bin"))
                .exit_code,
            0);
  ASSERT_EQ(run("--seed 9 sample --model " + path("m9.bin") + " --zoo " + path("zoo.bin") + " --n 6 --out " +
                path("s9.csv") + " --histogram " + path("h9.csv"))
                .exit_code,
            0);
  EXPECT_EQ(data_lines(path("s9.csv")), data_lines(path("eff/samples_1.csv")));
  EXPECT_EQ(data_lines(path("h9.csv")), data_lines(path("eff/hist_1.csv")));

  // 1% of 12 records is below one batch.
  EXPECT_EQ(run("efficiency-sweep --zoo " + path("zoo.bin") + " --out-dir " + path("eff2")).exit_code, 2);
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsOverride) {
  agentemb::write_file_atomic(path("cfg.toml"), std::string("seed = 5\n[sample]\nn = 4\nsample-mode = \"prior\"\n"));
  ASSERT_EQ(run("--config " + path("cfg.toml") + " sample --model " + path("model.bin") + " --out " +
                path("cs1.csv"))
                .exit_code,
            0);
  EXPECT_EQ(data_lines(path("cs1.csv")).size(), 6u);
  EXPECT_NE(slurp(path("cs1.csv")).find("# seed=5"), std::string::npos);
  ASSERT_EQ(run("--config " + path("cfg.toml") + " sample --model " + path("model.bin") + " --n 2 --out " +
                path("cs2.csv"))
                .exit_code,
            0);
  EXPECT_EQ(data_lines(path("cs2.csv")).size(), 4u);
}

TEST_F(CliTest, CommandsDoNotModifyInputs) {
  const std::string zoo = slurp(path("zoo.bin")), model = slurp(path("model.bin"));
  run("--seed 10 sample --model " + path("model.bin") + " --zoo " + path("zoo.bin") + " --n 3 --out " +
      path("x.csv"));
  run("--seed 10 repair-sweep --model " + path("model.bin") + " --zoo " + path("zoo.bin") +
      " --id 1 --budget 4 --top-k 2 --eval-episodes 5 --levels 0.5 --out " + path("y.csv"));
  EXPECT_EQ(slurp(path("zoo.bin")), zoo);
  EXPECT_EQ(slurp(path("model.bin")), model);
}

}  // namespace
