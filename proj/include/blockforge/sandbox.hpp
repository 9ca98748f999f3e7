#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace blockforge {

struct SandboxLimits {
  std::chrono::milliseconds wall_clock{30'000};
  std::uint64_t memory_bytes = 2ULL << 30;
  bool allow_network = false;
  std::size_t output_cap_bytes = 1 << 20;
};

struct ProcessOptions {
  std::filesystem::path cwd;             // empty: inherit
  std::vector<std::string> env;          // empty: inherit the parent's
  std::optional<std::string> stdin_data;
  std::chrono::milliseconds timeout{0};  // zero: no timeout
  // Confinement. When `sandboxed` is set the child gets rlimits, its own
  // process group, no network namespace (unless limits.allow_network) and
  // write access restricted to `writable_root` via landlock.
  bool sandboxed = false;
  SandboxLimits limits;
  std::filesystem::path writable_root;
};

struct ProcessResult {
  int exit_code = -1;  // -1 when terminated by a signal
  int term_signal = 0;
  bool timed_out = false;
  std::string out;
  std::string err;
  std::chrono::milliseconds wall{0};
  bool network_isolated = false;
  bool filesystem_confined = false;

  bool ok() const noexcept { return exit_code == 0 && !timed_out; }
};

// fork/exec with captured stdout/stderr. argv[0] is resolved via PATH.
// Throws Error{SandboxSetupFailed} when the process cannot be started and
// Error{InterpreterMissing} when argv[0] does not exist.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options = {});

// RAII scratch directory under the system temp dir.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& prefix = "blockforge");
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

// Environment handed to sandboxed interpreters: PATH plus HOME/TMPDIR
// pointing into the scratch directory.
std::vector<std::string> minimal_environment(const std::filesystem::path& scratch);

}  // namespace blockforge
