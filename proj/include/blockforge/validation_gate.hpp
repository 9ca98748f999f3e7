#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockforge/code_emitter.hpp"
#include "blockforge/sandbox.hpp"

namespace blockforge {

enum class StageStatus { Pass, Fail, NotRun };
enum class FailureClass { None, NativeExtension, CircularOrComplexDep, DynamicMetaprogramming, RepoUtilityOrConfig,
                          Timeout, Other, SyntaxError };

std::string_view to_string(StageStatus s);
std::string_view to_string(FailureClass c);

struct StageResult {
  StageStatus status = StageStatus::NotRun;
  std::string message;
};

struct ValidationReport {
  std::string block_name;
  std::string module_sha256;
  StageResult stage_parse;
  StageResult stage_compile;
  StageResult stage_execute;
  // Failed stage 3: the execution class. Failed stage 1 or 2: SyntaxError.
  FailureClass failure_class = FailureClass::None;
  std::string exception_type;
  std::string instantiation;  // outcome of the zero-argument construction attempt
  std::int64_t wall_time_ms = 0;
  bool promoted = false;
  bool network_isolated = false;
  bool filesystem_confined = false;
};

// How stage 3 executes the module.
//   Inline: a built-in runner passed to the interpreter with -c that imports
//     the file and tries zero-argument construction.
//   Probe: an external probe script, `<interpreter> probe.py <path> [class]`.
//   CompileOnly: stage 3 passes whenever stage 2 did.
enum class ExecutionMode { Inline, Probe, CompileOnly };

ExecutionMode parse_execution_mode(std::string_view s);  // throws Error{ConfigError}

struct GateConfig {
  std::string interpreter = default_interpreter();
  ExecutionMode mode = ExecutionMode::Inline;
  std::filesystem::path probe_script;
  SandboxLimits limits;

  // BLOCKFORGE_PYTHON, else python3
  static std::string default_interpreter();
};

// Maps the stage-3 diagnostics (stderr plus the exception record) to a
// failure class; `scc_names` are names defined inside dependency cycles.
FailureClass classify_failure(std::string_view diagnostics, const std::vector<std::string>& scc_names,
                              bool timed_out);

// Runs the three stages in order. Throws Error{InterpreterMissing} or
// Error{SandboxSetupFailed}; block failures are reported, not thrown.
ValidationReport validate(const GeneratedModule& module, const GateConfig& config,
                          const std::vector<std::string>& scc_names = {});
ValidationReport validate_text(const std::string& block_name, const std::string& text, const GateConfig& config,
                               const std::vector<std::string>& scc_names = {});

nlohmann::ordered_json report_to_json(const ValidationReport& report);

// reports/<Name>.validation.json; an existing report moves to reports/archive/.
void persist_report(const ValidationReport& report, const std::filesystem::path& reports_dir);

// validated/<Name>.py when promoted; removes a stale copy otherwise.
void apply_promotion(const ValidationReport& report, const std::string& text, const std::filesystem::path& validated_dir);

// Wilson score interval. Throws Error{DomainError} unless
// 0 <= successes <= trials, trials > 0 and 0 < confidence < 1.
std::pair<double, double> wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence);

}  // namespace blockforge
