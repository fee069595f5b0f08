#include "oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using nlohmann::json;
using tqf::oracle::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Run run(const std::string& args) {
  const std::string cmd = std::string(TQF_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Cli, GenTwoMoons) {
  TempDir dir("cli_gen");
  const auto a = run("gen two_moons --n 5000 --seed 1 -o " + dir.file("a.csv"));
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_EQ(count_lines(dir.file("a.csv")), 5001);
  std::ifstream in(dir.file("a.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "y1,y2");
  ASSERT_EQ(run("gen two_moons --n 5000 --seed 1 -o " + dir.file("b.csv")).code, 0);
  EXPECT_EQ(slurp(dir.file("a.csv")), slurp(dir.file("b.csv")));
}

TEST(Cli, GenUnknownNameNamesTheField) {
  TempDir dir("cli_gen2");
  const auto r = run("gen three_moons -o " + dir.file("a.csv"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("three_moons"), std::string::npos) << r.output;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("gen two_moons --bogus 3").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir("cli_cfg");
  std::ofstream(dir.file("c.json")) << R"({"name": "sliding_disk", "n": 40, "seed": 3, "out": ")" << dir.file("a.csv")
                                    << "\"}";
  ASSERT_EQ(run("gen --config " + dir.file("c.json")).code, 0);
  EXPECT_EQ(count_lines(dir.file("a.csv")), 41);
  ASSERT_EQ(run("gen --config " + dir.file("c.json") + " --n 12").code, 0);
  EXPECT_EQ(count_lines(dir.file("a.csv")), 13);
  std::ofstream(dir.file("bad.json")) << R"({"name": "sliding_disk", "rows": 40})";
  const auto r = run("gen --config " + dir.file("bad.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("rows"), std::string::npos) << r.output;
}

TEST(Cli, SliceQmemScorePipeline) {
  TempDir dir("cli_pipe");
  ASSERT_EQ(run("gen two_moons --n 800 --seed 2 -o " + dir.file("m.csv")).code, 0);
  auto r = run("slice -i " + dir.file("m.csv") + " --K 10 --M 10 --seed 1 -o " + dir.file("s.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string qargs = "qmem -s " + dir.file("s.json") + " --N1 30 --E 2 --seed 5 --kde-grid ";
  r = run(qargs + dir.file("k1.csv") + " -o " + dir.file("c1.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(run(qargs + dir.file("k2.csv") + " -o " + dir.file("c2.json")).code, 0);
  EXPECT_EQ(slurp(dir.file("c1.json")), slurp(dir.file("c2.json")));
  EXPECT_EQ(slurp(dir.file("k1.csv")), slurp(dir.file("k2.csv")));
  EXPECT_GE(count_lines(dir.file("k1.csv")), 50 * 50 + 1);

  r = run("score -p " + dir.file("m.csv") + " -r " + dir.file("m.csv") + " --metrics ed,es -o " + dir.file("r.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json rep = json::parse(slurp(dir.file("r.json")));
  EXPECT_EQ(rep.at("ed").get<double>(), 0.0);
  EXPECT_EQ(rep.at("es").at("per_row").size(), 800u);

  r = run("score -p " + dir.file("c1.json") + " -r " + dir.file("m.csv") + " -o " + dir.file("r2.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json rep2 = json::parse(slurp(dir.file("r2.json")));
  for (const char* key : {"ed", "es", "sw1", "nll"}) EXPECT_TRUE(rep2.contains(key)) << key;
}

TEST(Cli, DiracScoreIsMeanEuclideanError) {
  TempDir dir("cli_dirac");
  std::ofstream(dir.file("p.csv")) << "a,b\n1,1\n";
  std::ofstream(dir.file("r.csv")) << "a,b\n1,2\n4,5\n1,1\n";
  const auto r = run("score -p " + dir.file("p.csv") + " -r " + dir.file("r.csv") + " --metrics es -o " +
                     dir.file("o.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NEAR(json::parse(slurp(dir.file("o.json"))).at("es").at("mean").get<double>(), (1.0 + 5.0 + 0.0) / 3.0,
              1e-12);
}

TEST(Cli, ScoreDimensionMismatchIsDataError) {
  TempDir dir("cli_dim");
  std::ofstream(dir.file("p.csv")) << "a\n1\n";
  std::ofstream(dir.file("r.csv")) << "a,b\n1,2\n";
  EXPECT_EQ(run("score -p " + dir.file("p.csv") + " -r " + dir.file("r.csv")).code, 2);
}

TEST(Cli, MalformedSliceFileReportsOffset) {
  TempDir dir("cli_bad");
  std::ofstream(dir.file("s.json")) << R"({"format": "tqf-slices", "d": 2,,})";
  const auto r = run("qmem -s " + dir.file("s.json") + " -o " + dir.file("c.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("byte"), std::string::npos) << r.output;
}

TEST(Cli, TrainPredictArtifacts) {
  TempDir dir("cli_model");
  ASSERT_EQ(run("gen rect_rotor --n 1500 --seed 4 -o " + dir.file("r.csv")).code, 0);
  const std::string train = "train -d " + dir.file("r.csv") +
                            " --trees 4 --min-samples-leaf 20 --G 3 --G-tilde 2 --T 2 --scheme distance_quantiles"
                            " --seed 4 -o ";
  auto r = run(train + dir.file("m1.bin"));
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(run(train + dir.file("m2.bin")).code, 0);
  EXPECT_EQ(slurp(dir.file("m1.bin")), slurp(dir.file("m2.bin")));

  const std::string predict = "predict -m " + dir.file("m1.bin") + " --x 0.2,-0.1 --N1 30 --E 2 --seed 6 -o ";
  r = run(predict + dir.file("p1"));
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(run(predict + dir.file("p2")).code, 0);
  for (const char* ext : {".slices.json", ".cloud.json", ".kde.csv"})
    EXPECT_EQ(slurp(dir.file("p1") + ext), slurp(dir.file("p2") + ext)) << ext;
  EXPECT_GE(count_lines(dir.file("p1.kde.csv")), 50 * 50 + 1);
  const json cloud = json::parse(slurp(dir.file("p1.cloud.json")));
  EXPECT_EQ(cloud.at("provenance").at("seed"), 6);
  EXPECT_EQ(cloud.at("provenance").at("model_hash").get<std::string>().size(), 16u);

  r = run("predict -m " + dir.file("m1.bin") + " --x 1,2,3 -o " + dir.file("p3"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("expects 2"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("found 3"), std::string::npos) << r.output;
}

TEST(Cli, BenchmarkUnknownName) { EXPECT_EQ(run("benchmark nope").code, 1); }
