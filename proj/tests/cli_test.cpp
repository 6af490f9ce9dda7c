#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "blocktower/cli.hpp"
#include "blocktower/render.hpp"
#include "test_util.hpp"

using namespace blocktower;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = render::read_file(e.path().string());
  return files;
}

json first_line(const std::string& text) { return json::parse(text.substr(0, text.find('\n'))); }

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new bt_test::TempDir();
    const Outcome r = run({"--jobs", "2", "generate", "--out", data(), "--count-per-cell", "18", "--seed", "5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Outcome t = run({"train", "--dataset", data(), "--out", ckpt(), "--epochs", "1", "--lr-grid", "0.01",
                       "--log", *dir_ / "log.json"});
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string data() { return *dir_ / "data"; }
  static std::string ckpt() { return *dir_ / "model.bin"; }

  static bt_test::TempDir* dir_;
};

bt_test::TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  const Outcome r = run({"eval", "--dataset", "x", "--out", "y"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--model"), std::string::npos);
  EXPECT_EQ(run({"generate"}).code, 1);
  EXPECT_EQ(run({"--jobs", "0", "verify", "--dataset", "x"}).code, 1);
}

TEST(Cli, HelpExitsZero) {
  const Outcome r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("generate"), std::string::npos);
}

TEST(Cli, MissingInputsAreRuntimeFailures) {
  bt_test::TempDir d;
  EXPECT_EQ(run({"verify", "--dataset", d / "absent"}).code, 2);
  const Outcome r = run({"train", "--dataset", d / "absent", "--out", d / "m.bin"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST(Cli, BadConfigFileIsValidationError) {
  bt_test::TempDir d;
  render::write_file(d / "cfg.json", R"({"count_per_cell": 4, "colour": "red"})");
  EXPECT_EQ(run({"generate", "--config", d / "cfg.json", "--out", d / "o"}).code, 1);
}

TEST_F(CliPipeline, GenerateThenVerify) {
  const Outcome r = run({"verify", "--dataset", data()});
  EXPECT_EQ(r.code, 0) << r.err;
  const json head = first_line(r.out);
  EXPECT_EQ(head["command"], "verify");
  EXPECT_TRUE(head.contains("config"));
  std::ifstream manifest(data() + "/manifest.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(manifest, line)) ++n;
  EXPECT_EQ(n, 6 * 18);
}

TEST_F(CliPipeline, GenerationIsByteIdenticalAcrossJobs) {
  bt_test::TempDir d;
  ASSERT_EQ(run({"--jobs", "1", "generate", "--out", d / "a", "--count-per-cell", "18", "--seed", "5"}).code, 0);
  EXPECT_EQ(tree(d / "a"), tree(data()));
}

TEST_F(CliPipeline, VerifyFlagsDamage) {
  bt_test::TempDir d;
  fs::copy(data(), d / "copy", fs::copy_options::recursive);
  std::string victim;
  for (const auto& e : fs::recursive_directory_iterator(d / "copy"))
    if (e.path().filename() == "mask4.pgm") {
      victim = e.path().string();
      break;
    }
  ASSERT_FALSE(victim.empty());
  fs::remove(victim);
  const Outcome r = run({"verify", "--dataset", d / "copy"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE((r.out + r.err).find("mask4.pgm"), std::string::npos);
}

TEST_F(CliPipeline, TrainIsReproducible) {
  bt_test::TempDir d;
  ASSERT_EQ(run({"--jobs", "3", "train", "--dataset", data(), "--out", d / "m.bin", "--epochs", "1", "--lr-grid",
                 "0.01"})
                .code,
            0);
  EXPECT_EQ(render::read_file(d / "m.bin"), render::read_file(ckpt()));
  const json log = json::parse(render::read_file(*dir_ / "log.json"));
  EXPECT_FALSE(log.empty());
  EXPECT_EQ(run({"train", "--dataset", data(), "--out", d / "x.bin", "--model", "resnet"}).code, 1);
  EXPECT_EQ(run({"train", "--dataset", data(), "--out", d / "x.bin", "--lr-grid", "-1"}).code, 1);
}

TEST_F(CliPipeline, EvalWritesReport) {
  bt_test::TempDir d;
  const Outcome r = run({"eval", "--model", ckpt(), "--dataset", data(), "--out", d / "r.json", "--knn", "trunk"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(render::read_file(d / "r.json"));
  EXPECT_EQ(rep["count"], 6 * 2);
  EXPECT_EQ(rep["baselines"]["knn"]["features"], "trunk");
  EXPECT_EQ(run({"eval", "--model", ckpt(), "--dataset", data(), "--out", d / "r.json", "--knn", "pixels"}).code, 1);
  EXPECT_EQ(run({"eval", "--model", d / "none.bin", "--dataset", data(), "--out", d / "r.json"}).code, 2);
  render::write_file(d / "junk.bin", "not a checkpoint");
  EXPECT_EQ(run({"eval", "--model", d / "junk.bin", "--dataset", data(), "--out", d / "r.json"}).code, 2);

  // Same inputs, same report bytes.
  ASSERT_EQ(run({"--jobs", "3", "eval", "--model", ckpt(), "--dataset", data(), "--out", d / "r2.json", "--knn",
                 "trunk"})
                .code,
            0);
  EXPECT_EQ(render::read_file(d / "r2.json"), render::read_file(d / "r.json"));
}

TEST_F(CliPipeline, OccludeWritesHeatmapAndSidecar) {
  bt_test::TempDir d;
  const std::string first = first_line(render::read_file(data() + "/manifest.jsonl"))["id"];
  const Outcome r = run({"occlude", "--model", ckpt(), "--dataset", data(), "--id", first, "--out", d / "h"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string pgm = render::read_file(d / "h.pgm");
  EXPECT_EQ(pgm.substr(0, 13), "P5\n14 14\n255\n");
  const json side = json::parse(render::read_file(d / "h.json"));
  EXPECT_EQ(side["values"].size(), 196u);
  EXPECT_NE(run({"occlude", "--model", ckpt(), "--dataset", data(), "--id", "nope", "--out", d / "h"}).code, 0);
}

TEST_F(CliPipeline, TransferFlagsHeldOutSize) {
  bt_test::TempDir d;
  const Outcome r = run({"transfer", "--dataset", data(), "--train-sizes", "2,3", "--out", d / "t.json", "--epochs", "1",
                     "--lr-grid", "0.01"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json t = json::parse(render::read_file(d / "t.json"));
  ASSERT_EQ(t["sizes"].size(), 3u);
  for (const auto& s : t["sizes"]) EXPECT_EQ(s["held_out"], s["n_blocks"] == 4);
  EXPECT_EQ(run({"transfer", "--dataset", data(), "--train-sizes", "2,7", "--out", d / "t.json"}).code, 1);
}
