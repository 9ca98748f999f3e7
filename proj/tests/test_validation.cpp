#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "blockforge/error.hpp"
#include "blockforge/sandbox.hpp"
#include "blockforge/validation_gate.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;
using namespace std::chrono_literals;
using blockforge::testing::read_file;
using blockforge::testing::write_file;

namespace {

GateConfig inline_gate() {
  GateConfig g;
  g.limits.wall_clock = 20s;
  return g;
}

const char* kGood =
    "class Good:\n"
    "    def __init__(self, width=3):\n"
    "        self.width = width\n";

}  // namespace

TEST(Gate, PassingModuleIsPromoted) {
  auto r = validate_text("Good", kGood, inline_gate());
  EXPECT_EQ(r.stage_parse.status, StageStatus::Pass);
  EXPECT_EQ(r.stage_compile.status, StageStatus::Pass);
  EXPECT_EQ(r.stage_execute.status, StageStatus::Pass);
  EXPECT_EQ(r.failure_class, FailureClass::None);
  EXPECT_EQ(r.instantiation, "ok");
  EXPECT_TRUE(r.promoted);
  EXPECT_TRUE(r.network_isolated);
  EXPECT_TRUE(r.filesystem_confined);
}

TEST(Gate, ParseFailureStopsEarly) {
  auto r = validate_text("Bad", "def f(:\n    pass\n", inline_gate());
  EXPECT_EQ(r.stage_parse.status, StageStatus::Fail);
  EXPECT_NE(r.stage_parse.message.find("line 1"), std::string::npos) << r.stage_parse.message;
  EXPECT_EQ(r.stage_compile.status, StageStatus::NotRun);
  EXPECT_EQ(r.stage_execute.status, StageStatus::NotRun);
  EXPECT_EQ(r.failure_class, FailureClass::SyntaxError);
  EXPECT_FALSE(r.promoted);
}

TEST(Gate, CompileOnlyErrorsAreSyntaxErrors) {
  auto r = validate_text("Ret", "return 1\n", inline_gate());
  EXPECT_EQ(r.failure_class, FailureClass::SyntaxError);
  EXPECT_EQ(r.stage_execute.status, StageStatus::NotRun);
  EXPECT_FALSE(r.promoted);
}

TEST(Gate, MissingPackageIsRepoUtility) {
  auto r = validate_text("Missing", "import nonexistent_pkg_qq\nclass Missing:\n    pass\n", inline_gate());
  EXPECT_EQ(r.stage_compile.status, StageStatus::Pass);
  EXPECT_EQ(r.stage_execute.status, StageStatus::Fail);
  EXPECT_EQ(r.exception_type, "ModuleNotFoundError");
  EXPECT_EQ(r.failure_class, FailureClass::RepoUtilityOrConfig);
  EXPECT_NE(r.stage_execute.message.find("nonexistent_pkg_qq"), std::string::npos);
}

TEST(Gate, SlowImportTimesOut) {
  GateConfig g = inline_gate();
  g.limits.wall_clock = 1500ms;
  auto r = validate_text("Slow", "import time\ntime.sleep(60)\n", g);
  EXPECT_EQ(r.failure_class, FailureClass::Timeout);
  EXPECT_LT(r.wall_time_ms, 15000);
}

TEST(Gate, InstantiationFailureStillPromotes) {
  auto r = validate_text("NeedsArgs", "class NeedsArgs:\n    def __init__(self, n):\n        self.n = n\n", inline_gate());
  EXPECT_TRUE(r.promoted);
  EXPECT_EQ(r.instantiation.rfind("TypeError", 0), 0u) << r.instantiation;
}

TEST(Gate, CompileOnlyMode) {
  GateConfig g = inline_gate();
  g.mode = ExecutionMode::CompileOnly;
  auto r = validate_text("Missing", "import nonexistent_pkg_qq\n", g);
  EXPECT_TRUE(r.promoted);
  EXPECT_EQ(r.instantiation, "not attempted");
}

TEST(Gate, ProbeScriptContract) {
  ScratchDir tmp("bf-probe");
  fs::path ok = tmp.path() / "ok_probe.py";
  write_file(ok,
             "import json, sys\n"
             "assert len(sys.argv) == 3, sys.argv\n"
             "print('noise')\n"
             "print(json.dumps({'ok': True, 'exception_type': None, 'traceback_tail': '', 'instantiate': 'ok:' + sys.argv[2]}))\n");
  fs::path bad = tmp.path() / "bad_probe.py";
  write_file(bad,
             "import json, sys\n"
             "print(json.dumps({'ok': False, 'exception_type': 'ModuleNotFoundError',\n"
             "                  'traceback_tail': \"ModuleNotFoundError: No module named 'fused_cuda'\"}))\n"
             "sys.exit(1)\n");
  GateConfig g = inline_gate();
  g.mode = ExecutionMode::Probe;
  g.probe_script = ok;
  auto r = validate_text("Good", kGood, g);
  EXPECT_TRUE(r.promoted);
  EXPECT_EQ(r.instantiation, "ok:Good");
  g.probe_script = bad;
  r = validate_text("Good", kGood, g);
  EXPECT_FALSE(r.promoted);
  EXPECT_EQ(r.failure_class, FailureClass::NativeExtension);
  g.probe_script = tmp.path() / "absent.py";
  EXPECT_THROW(validate_text("Good", kGood, g), Error);
}

TEST(Gate, MissingInterpreter) {
  GateConfig g = inline_gate();
  g.interpreter = "/nonexistent/python9";
  try {
    validate_text("Good", kGood, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InterpreterMissing);
  }
}

TEST(Classify, Examples) {
  std::vector<std::string> scc = {"ping", "pong"};
  EXPECT_EQ(classify_failure("", {}, true), FailureClass::Timeout);
  EXPECT_EQ(classify_failure("ImportError: libcudart.so.11.0: cannot open shared object file", {}, false),
            FailureClass::NativeExtension);
  EXPECT_EQ(classify_failure("ModuleNotFoundError: No module named 'mmcv._ext'", {}, false), FailureClass::NativeExtension);
  EXPECT_EQ(classify_failure("ImportError: undefined symbol: _ZN2at", {}, false), FailureClass::NativeExtension);
  EXPECT_EQ(classify_failure("ModuleNotFoundError: No module named 'pkg.utils'", {}, false),
            FailureClass::RepoUtilityOrConfig);
  EXPECT_EQ(classify_failure("FileNotFoundError: [Errno 2] No such file: 'cfg.yaml'", {}, false),
            FailureClass::RepoUtilityOrConfig);
  EXPECT_EQ(classify_failure("NameError: name 'pong' is not defined", scc, false), FailureClass::CircularOrComplexDep);
  EXPECT_EQ(classify_failure("NameError: name 'other' is not defined", scc, false), FailureClass::Other);
  EXPECT_EQ(classify_failure("ImportError: cannot import name 'x' from partially initialized module 'y'", {}, false),
            FailureClass::CircularOrComplexDep);
  EXPECT_EQ(classify_failure("  File \"m.py\", line 3, in <module>\n    BACKBONES.register_module()\nKeyError: 'resnet'", {},
                             false),
            FailureClass::DynamicMetaprogramming);
  EXPECT_EQ(classify_failure("TypeError: metaclass conflict", {}, false), FailureClass::DynamicMetaprogramming);
  EXPECT_EQ(classify_failure("ValueError: bad", {}, false), FailureClass::Other);
}

TEST(Wilson, MatchesNormalQuantileOracle) {
  auto r = run_process({GateConfig::default_interpreter(), "-I", "-c",
                        "from statistics import NormalDist\n"
                        "from math import sqrt\n"
                        "z = NormalDist().inv_cdf(0.975)\n"
                        "for k, n in [(0, 10), (7, 10), (10, 10), (941, 1289)]:\n"
                        "    p = k / n\n"
                        "    c = (p + z*z/(2*n)) / (1 + z*z/n)\n"
                        "    h = z * sqrt(p*(1-p)/n + z*z/(4*n*n)) / (1 + z*z/n)\n"
                        "    print(repr(c - h), repr(c + h))\n"});
  ASSERT_TRUE(r.ok()) << r.err;
  std::istringstream in(r.out);
  for (auto [k, n] : std::vector<std::pair<int, int>>{{0, 10}, {7, 10}, {10, 10}, {941, 1289}}) {
    double lo, hi;
    in >> lo >> hi;
    auto [a, b] = wilson_interval(k, n, 0.95);
    EXPECT_NEAR(a, lo, 1e-9) << k << "/" << n;
    EXPECT_NEAR(b, hi, 1e-9) << k << "/" << n;
  }
  EXPECT_THROW(wilson_interval(3, 2, 0.95), Error);
  EXPECT_THROW(wilson_interval(0, 0, 0.95), Error);
  EXPECT_THROW(wilson_interval(1, 2, 1.0), Error);
}

TEST(Reports, PersistArchivesAndPromotionTracksStatus) {
  ScratchDir tmp("bf-reports");
  auto good = validate_text("Good", kGood, inline_gate());
  persist_report(good, tmp.path() / "reports");
  persist_report(good, tmp.path() / "reports");
  persist_report(good, tmp.path() / "reports");
  EXPECT_TRUE(fs::exists(tmp.path() / "reports" / "archive" / "Good.validation.1.json"));
  EXPECT_TRUE(fs::exists(tmp.path() / "reports" / "archive" / "Good.validation.2.json"));
  auto j = nlohmann::json::parse(read_file(tmp.path() / "reports" / "Good.validation.json"));
  EXPECT_EQ(j["stage_execute"]["status"], "Pass");
  EXPECT_TRUE(j["failure_class"].is_null());
  EXPECT_EQ(j["sandbox"]["network_isolated"], true);
  EXPECT_EQ(j["module_sha256"].get<std::string>().size(), 64u);

  apply_promotion(good, kGood, tmp.path() / "validated");
  EXPECT_EQ(read_file(tmp.path() / "validated" / "Good.py"), kGood);
  good.promoted = false;
  apply_promotion(good, kGood, tmp.path() / "validated");
  EXPECT_FALSE(fs::exists(tmp.path() / "validated" / "Good.py"));
}

TEST(Gate, ModeNames) {
  EXPECT_EQ(parse_execution_mode("inline"), ExecutionMode::Inline);
  EXPECT_EQ(parse_execution_mode("probe"), ExecutionMode::Probe);
  EXPECT_EQ(parse_execution_mode("compile-only"), ExecutionMode::CompileOnly);
  EXPECT_THROW(parse_execution_mode("yolo"), Error);
}
