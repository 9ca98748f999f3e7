#include <gtest/gtest.h>

#include "blockforge/error.hpp"
#include "blockforge/sandbox.hpp"
#include "blockforge/validation_gate.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;
using namespace std::chrono_literals;

namespace {

std::string interpreter() { return GateConfig::default_interpreter(); }

ProcessOptions confined(const ScratchDir& scratch) {
  ProcessOptions o;
  o.cwd = scratch.path();
  o.env = minimal_environment(scratch.path());
  o.timeout = 20s;
  o.sandboxed = true;
  o.writable_root = scratch.path();
  return o;
}

}  // namespace

TEST(Process, CapturesStreamsAndExitCode) {
  auto r = run_process({"sh", "-c", "echo out; echo err >&2; exit 3"});
  EXPECT_EQ(r.out, "out\n");
  EXPECT_EQ(r.err, "err\n");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.ok());
}

TEST(Process, FeedsStdin) {
  ProcessOptions o;
  o.stdin_data = "abc\ndef\n";
  auto r = run_process({"wc", "-l"}, o);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(std::stoi(r.out), 2);
}

TEST(Process, TimeoutKillsTheGroup) {
  ProcessOptions o;
  o.timeout = 300ms;
  auto t0 = std::chrono::steady_clock::now();
  auto r = run_process({"sh", "-c", "sleep 30 & sleep 30"}, o);
  EXPECT_TRUE(r.timed_out);
  EXPECT_FALSE(r.ok());
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 10s);
}

TEST(Process, MissingProgram) {
  try {
    run_process({"/nonexistent/python9"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InterpreterMissing);
  }
}

TEST(Process, ScratchDirIsRemoved) {
  fs::path p;
  {
    ScratchDir d("bf-scratch");
    p = d.path();
    blockforge::testing::write_file(p / "sub" / "f.txt", "x");
    EXPECT_TRUE(fs::exists(p));
  }
  EXPECT_FALSE(fs::exists(p));
}

TEST(Sandbox, NetworkCanaryFails) {
  ScratchDir scratch("bf-sandbox");
  const char* canary =
      "import socket\n"
      "s = socket.socket()\n"
      "s.settimeout(2)\n"
      "try:\n"
      "    s.connect(('1.1.1.1', 53))\n"
      "    print('connected')\n"
      "except OSError as e:\n"
      "    print('blocked', e.errno)\n";
  auto r = run_process({interpreter(), "-I", "-c", canary}, confined(scratch));
  ASSERT_TRUE(r.ok()) << r.err;
  EXPECT_TRUE(r.network_isolated);
  EXPECT_EQ(r.out.rfind("blocked", 0), 0u) << r.out;
}

TEST(Sandbox, WritesConfinedToScratch) {
  ScratchDir scratch("bf-sandbox");
  ScratchDir outside("bf-outside");
  std::string script =
      "import sys\n"
      "open('inside.txt', 'w').write('ok')\n"
      "try:\n"
      "    open(sys.argv[1], 'w').write('leak')\n"
      "    print('leaked')\n"
      "except OSError:\n"
      "    print('denied')\n";
  auto r = run_process({interpreter(), "-I", "-c", script, (outside.path() / "canary.txt").string()}, confined(scratch));
  ASSERT_TRUE(r.ok()) << r.err;
  EXPECT_TRUE(r.filesystem_confined);
  EXPECT_EQ(r.out, "denied\n");
  EXPECT_TRUE(fs::exists(scratch.path() / "inside.txt"));
  EXPECT_FALSE(fs::exists(outside.path() / "canary.txt"));
}

TEST(Sandbox, OutputIsCapped) {
  ScratchDir scratch("bf-sandbox");
  ProcessOptions o = confined(scratch);
  o.limits.output_cap_bytes = 4096;
  auto r = run_process({interpreter(), "-I", "-c", "import sys\nsys.stdout.write('x' * 1000000)\n"}, o);
  EXPECT_LE(r.out.size(), 4096u);
}

TEST(Sandbox, MinimalEnvironment) {
  ScratchDir scratch("bf-sandbox");
  auto env = minimal_environment(scratch.path());
  bool home = false;
  for (const auto& e : env) {
    home = home || e == "HOME=" + scratch.path().string();
    EXPECT_EQ(e.find("BLOCKFORGE_"), std::string::npos);
  }
  EXPECT_TRUE(home);
}
