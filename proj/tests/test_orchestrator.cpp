#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "blockforge/error.hpp"
#include "blockforge/orchestrator.hpp"
#include "blockforge/sandbox.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;
using namespace std::chrono_literals;
using blockforge::testing::corpus_dir;
using blockforge::testing::fixture_config;
using blockforge::testing::read_file;
using blockforge::testing::write_file;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

const char* kNet = "from torch import nn\nclass Net(nn.Module):\n    def forward(self, x):\n        return x\n";

}  // namespace

TEST(Config, ParsesObjectAndArrayForms) {
  nlohmann::json doc = {{"repos", {{{"name", "a/b"}, {"url", "rel/dir"}, {"priority", 2}, {"path_globs", {"x/*"}}}}},
                        {"index_policy", "force"},
                        {"worker_count", 3},
                        {"retry", {{"attempts", 4}, {"backoff_base_ms", 10}}},
                        {"sandbox", {{"wall_clock_ms", 5000}, {"memory_bytes", 1024}}},
                        {"validation", {{"mode", "probe"}, {"probe_script", "probe.py"}, {"interpreter", "py"}}},
                        {"dedup", {{"tau", 0.8}, {"kappa", 0.9}, {"min_support", 5}}},
                        {"output_root", "out"}};
  CorpusConfig c = parse_config(doc, "/base");
  ASSERT_EQ(c.repos.size(), 1u);
  EXPECT_EQ(c.repos[0].url, "/base/rel/dir");
  EXPECT_EQ(c.repos[0].priority, 2);
  EXPECT_EQ(c.repos[0].path_globs, (std::vector<std::string>{"x/*"}));
  EXPECT_EQ(c.index_policy, IndexPolicy::Force);
  EXPECT_EQ(c.worker_count, 3);
  EXPECT_EQ(c.dedup.workers, 3);
  EXPECT_EQ(c.retry.attempts, 4);
  EXPECT_EQ(c.retry.backoff_base, 10ms);
  EXPECT_EQ(c.gate.limits.wall_clock, 5000ms);
  EXPECT_EQ(c.gate.limits.memory_bytes, 1024u);
  EXPECT_EQ(c.gate.mode, ExecutionMode::Probe);
  EXPECT_EQ(c.gate.probe_script, fs::path("/base/probe.py"));
  EXPECT_EQ(c.gate.interpreter, "py");
  EXPECT_DOUBLE_EQ(c.dedup.tau, 0.8);
  EXPECT_EQ(c.dedup.min_support, 5u);
  EXPECT_EQ(c.output_root, fs::path("/base/out"));

  auto arr = parse_config(nlohmann::json::array({{{"name", "a/b"}, {"url", "https://example.com/a/b.git"}}}));
  EXPECT_EQ(arr.repos[0].url, "https://example.com/a/b.git");
  EXPECT_GE(arr.worker_count, 8);
}

TEST(Config, RejectsBadInput) {
  auto repo = [](const char* name) { return nlohmann::json{{"name", name}, {"url", "/x"}}; };
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {repo("a/b"), repo("a/b")}}}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {repo("ab")}}}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {repo("a/b")}}, {"worker_count", 0}}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {repo("a/b")}}, {"validation", {{"mode", "x"}}}}); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {repo("a/b")}}, {"index_policy", "sometimes"}}); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"nope", 1}}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {{{"name", "a/b"}, {"url", "/x"}, {"fetch_policy", "full"}}}}}); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config({{"repos", {{{"name", "a/b"}, {"url", "/x"}, {"path_globs", "x"}}}}}); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { load_config("/nonexistent/repos.json"); }), ErrorCode::ConfigError);
}

TEST(Config, LoadsFixtureRelativeToFile) {
  CorpusConfig c = load_config(corpus_dir() / "repos.json");
  ASSERT_EQ(c.repos.size(), 3u);
  EXPECT_EQ(fs::path(c.repos[0].url), (corpus_dir() / "visionlite").lexically_normal());
  EXPECT_EQ(c.retry.attempts, 2);
}

TEST(Orchestrator, FindBlockByNameFqNameAndRepo) {
  ScratchDir tmp("bf-orch");
  Orchestrator orch(fixture_config(tmp.path(), 2, ExecutionMode::CompileOnly));
  orch.on_progress({});
  orch.warm_index_once();
  EXPECT_EQ(orch.find_block("ConvBNAct").repo_name, "fixture/visionlite");
  EXPECT_EQ(orch.find_block("backbones.ConvBNAct").repo_name, "fixture/detlite");
  EXPECT_EQ(orch.find_block("fixture/detlite:detlite.backbones.ConvBNAct").fq_name, "detlite.backbones.ConvBNAct");
  EXPECT_EQ(code_of([&] { orch.find_block("NoSuchBlock"); }), ErrorCode::BlockNotFound);
  EXPECT_EQ(code_of([&] { orch.find_block("ackbones.ConvBNAct"); }), ErrorCode::BlockNotFound);
  ASSERT_FALSE(orch.discover().diagnostics.empty());
  const auto& d = orch.discover().diagnostics.front();
  std::string short_name = d.fq_name.substr(d.fq_name.rfind('.') + 1);
  try {
    orch.find_block(short_name);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("excluded"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "nn_block_names.json"));
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "nn_block_index.json"));
}

TEST(Orchestrator, AmbiguousAcrossEqualPriorityRepos) {
  ScratchDir tmp("bf-orch");
  write_file(tmp.path() / "one" / "m.py", kNet);
  write_file(tmp.path() / "two" / "m.py", kNet);
  nlohmann::json doc = {{"repos",
                         {{{"name", "a/one"}, {"url", (tmp.path() / "one").string()}},
                          {{"name", "a/two"}, {"url", (tmp.path() / "two").string()}}}}};
  CorpusConfig c = parse_config(doc);
  c.cache_root = tmp.path() / "cache";
  c.output_root = tmp.path() / "out";
  c.gate.mode = ExecutionMode::CompileOnly;
  Orchestrator orch(c);
  orch.on_progress({});
  orch.warm_index_once();
  try {
    orch.find_block("Net");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AmbiguousBlockName);
    EXPECT_NE(std::string(e.what()).find("a/one:m.Net"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("a/two:m.Net"), std::string::npos);
  }
  auto out = orch.extract_single_block("a/two:m.Net");
  EXPECT_EQ(out.status, BlockStatus::Validated);
  EXPECT_EQ(orch.extract_single_block("Net").status, BlockStatus::Ambiguous);
}

TEST(Orchestrator, BatchLimitRestartAndSummary) {
  ScratchDir tmp("bf-orch");
  Orchestrator orch(fixture_config(tmp.path(), 4, ExecutionMode::CompileOnly));
  std::vector<std::string> progress;
  orch.on_progress([&](const std::string& l) { progress.push_back(l); });
  orch.warm_index_once();
  std::vector<std::string> names = {"TinyNet", "ConvBNAct", "DupArgNet", "NoSuchBlock", "ConvBNAct", "GatLayer", "ResStage"};
  RunSummary s = orch.extract_batch(names, 4, 1);
  ASSERT_EQ(s.targeted, 4u);
  std::vector<std::string> requested;
  for (const auto& o : s.outcomes) requested.push_back(o.requested);
  EXPECT_EQ(requested, (std::vector<std::string>{"ConvBNAct", "DupArgNet", "NoSuchBlock", "GatLayer"}));
  EXPECT_EQ(progress.size(), 4u);
  EXPECT_EQ(s.outcomes[0].status, BlockStatus::Validated);
  EXPECT_EQ(s.outcomes[1].bucket(), "SyntaxError");
  EXPECT_EQ(s.outcomes[2].status, BlockStatus::NotFound);
  EXPECT_EQ(s.outcomes[2].bucket(), "ExtractionError");
  EXPECT_EQ(s.extracted, 3u);
  EXPECT_EQ(s.validated, 2u);
  std::size_t failed = 0;
  for (const auto& [k, v] : s.per_failure_class) failed += v;
  EXPECT_EQ(failed + s.validated, s.targeted);
  EXPECT_DOUBLE_EQ(s.pass_rate, 0.5);
  auto [lo, hi] = wilson_interval(2, 4, 0.95);
  EXPECT_DOUBLE_EQ(s.wilson_low, lo);
  EXPECT_DOUBLE_EQ(s.wilson_high, hi);
  std::size_t lines = 0;
  for (const auto& o : s.outcomes)
    if (o.module) lines += static_cast<std::size_t>(std::count(o.module->text.begin(), o.module->text.end(), '\n'));
  EXPECT_EQ(s.total_generated_lines, lines);
  auto j = summary_to_json(s);
  EXPECT_EQ(j["blocks"].size(), 4u);
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "validated" / "ConvBNAct.py"));
  EXPECT_FALSE(fs::exists(tmp.path() / "out" / "validated" / "DupArgNet.py"));
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "reports" / "DupArgNet.validation.json"));
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "reports" / "ConvBNAct.closure.json"));

  EXPECT_EQ(orch.extract_batch(names, std::nullopt, 7).targeted, 0u);
}

TEST(Orchestrator, RetriesAreBoundedWithExponentialBackoff) {
  ScratchDir tmp("bf-orch");
  nlohmann::json doc = {{"repos", {{{"name", "a/gone"}, {"url", "file://" + (tmp.path() / "missing").string()}}}},
                        {"retry", {{"attempts", 3}, {"backoff_base_ms", 100}}}};
  CorpusConfig c = parse_config(doc);
  c.cache_root = tmp.path() / "cache";
  c.output_root = tmp.path() / "out";
  Orchestrator orch(c);
  std::vector<std::chrono::milliseconds> sleeps;
  orch.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  EXPECT_EQ(code_of([&] { orch.warm_index_once(); }), ErrorCode::NetworkUnavailable);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{100ms, 200ms}));
}

TEST(Orchestrator, BlockNamesFile) {
  ScratchDir tmp("bf-orch");
  write_file(tmp.path() / "names.json", "[\"A\", \"B\"]");
  EXPECT_EQ(load_block_names(tmp.path() / "names.json"), (std::vector<std::string>{"A", "B"}));
  write_file(tmp.path() / "bad.json", "{\"A\": 1}");
  EXPECT_EQ(code_of([&] { load_block_names(tmp.path() / "bad.json"); }), ErrorCode::ConfigError);
}
