#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "blockforge/sandbox.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;
using blockforge::testing::corpus_dir;
using blockforge::testing::read_file;
using blockforge::testing::write_file;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    auto doc = nlohmann::json::parse(read_file(corpus_dir() / "repos.json"));
    for (auto& r : doc["repos"]) r["url"] = (corpus_dir() / r["url"].get<std::string>()).string();
    write_file(tmp_.path() / "repos.json", doc.dump());
  }

  ProcessResult run(std::vector<std::string> args) {
    std::vector<std::string> argv = {BLOCKFORGE_CLI, "--config", (tmp_.path() / "repos.json").string(), "--cache",
                                     (tmp_.path() / "cache").string(), "--output", (tmp_.path() / "out").string(),
                                     "--quiet", "--mode", "compile-only"};
    argv.insert(argv.end(), args.begin(), args.end());
    ProcessOptions o;
    o.timeout = std::chrono::minutes(3);
    return run_process(argv, o);
  }

  ScratchDir tmp_{"bf-cli"};
};

}  // namespace

TEST_F(Cli, VersionAndUsageErrors) {
  EXPECT_EQ(run_process({BLOCKFORGE_CLI, "--version"}).exit_code, 0);
  EXPECT_EQ(run_process({BLOCKFORGE_CLI, "--no-such-flag"}).exit_code, 2);
  EXPECT_EQ(run_process({BLOCKFORGE_CLI, "--config", "/nonexistent.json", "index"}).exit_code, 2);
  EXPECT_EQ(run({"--workers", "0"}).exit_code, 2);
}

TEST_F(Cli, IndexAndDiscover) {
  auto idx = run({"index"});
  ASSERT_EQ(idx.exit_code, 0) << idx.err;
  EXPECT_NE(idx.out.find("repos=3"), std::string::npos) << idx.out;
  auto again = run({"index"});
  EXPECT_NE(again.out.find("parsed=0"), std::string::npos) << again.out;
  auto d = run({"discover"});
  ASSERT_EQ(d.exit_code, 0) << d.err;
  EXPECT_NE(d.out.find("fixture/visionlite:visionlite.layers.ConvBNAct\n"), std::string::npos);
  auto names = nlohmann::json::parse(read_file(tmp_.path() / "out" / "nn_block_names.json"));
  EXPECT_GE(names.size(), 12u);
}

TEST_F(Cli, SingleBlockExitCodes) {
  auto ok = run({"--block", "ConvBNAct"});
  ASSERT_EQ(ok.exit_code, 0) << ok.err;
  EXPECT_EQ(nlohmann::json::parse(ok.out)["promoted"], true);
  EXPECT_TRUE(fs::exists(tmp_.path() / "out" / "generated" / "ConvBNAct.py"));
  EXPECT_EQ(run({"--block", "DupArgNet"}).exit_code, 1);
  auto missing = run({"--block", "NoSuchBlock"});
  EXPECT_EQ(missing.exit_code, 2);
  EXPECT_NE(missing.err.find("NoSuchBlock"), std::string::npos);
  auto revalidate = run({"validate", "ConvBNAct"});
  EXPECT_EQ(revalidate.exit_code, 0) << revalidate.err;
  EXPECT_TRUE(fs::exists(tmp_.path() / "out" / "reports" / "archive" / "ConvBNAct.validation.1.json"));
}

TEST_F(Cli, BatchWritesRunSummary) {
  auto r = run({"--blocks", "ConvBNAct", "TinyNet"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto summary = nlohmann::json::parse(read_file(tmp_.path() / "out" / "reports" / "run_summary.json"));
  EXPECT_EQ(summary["targeted"], 2);
  EXPECT_EQ(summary["validated"], 2);
  EXPECT_EQ(summary["blocks"].size(), 2u);
  EXPECT_FALSE(nlohmann::json::parse(r.out).contains("blocks"));
  EXPECT_EQ(run({"--blocks", "ConvBNAct", "DupArgNet"}).exit_code, 1);
}

TEST_F(Cli, DedupSubcommand) {
  const std::string code = "class A:\n    def f(self):\n        return 1\n";
  write_file(tmp_.path() / "arts" / "a.py", code);
  write_file(tmp_.path() / "arts" / "b.py", "# same\n" + code);
  auto r = run_process({BLOCKFORGE_CLI, "dedup", (tmp_.path() / "arts").string(), "--out",
                        (tmp_.path() / "curated").string(), "--min-support", "1"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["total_records_fetched"], 2);
  EXPECT_EQ(report["total_records"], 1);
  EXPECT_EQ(report["exact_duplicates_removed"], 1);
  EXPECT_TRUE(fs::exists(tmp_.path() / "curated" / "kept" / "a.py"));
  EXPECT_EQ(run_process({BLOCKFORGE_CLI, "dedup", (tmp_.path() / "nothing").string()}).exit_code, 2);
}
