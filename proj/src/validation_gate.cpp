#include "blockforge/validation_gate.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>

#include "blockforge/error.hpp"
#include "blockforge/hashing.hpp"
#include "blockforge/python/parser.hpp"

namespace blockforge {
namespace fs = std::filesystem;
namespace {

constexpr const char* kCompileScript =
    "import sys\n"
    "path = sys.argv[1]\n"
    "with open(path, 'rb') as f:\n"
    "    source = f.read()\n"
    "compile(source, path, 'exec', dont_inherit=True)\n";

// Imports the file as an isolated module, then tries zero-argument
// construction. The JSON record is the last stdout line.
constexpr const char* kInlineRunner =
    "import importlib.util, json, os, sys, time, traceback\n"
    "sys.setrecursionlimit(10000)\n"
    "path, cls = sys.argv[1], (sys.argv[2] if len(sys.argv) > 2 else '')\n"
    "out = {'ok': False, 'phase': 'import', 'exception_type': None, 'traceback_tail': '', 'instantiate': None}\n"
    "t0 = time.monotonic()\n"
    "def tail(e):\n"
    "    lines = ''.join(traceback.format_exception(type(e), e, e.__traceback__)).splitlines()\n"
    "    return '\\n'.join(lines[-20:])\n"
    "try:\n"
    "    spec = importlib.util.spec_from_file_location('_blockforge_target', path)\n"
    "    mod = importlib.util.module_from_spec(spec)\n"
    "    sys.modules[spec.name] = mod\n"
    "    spec.loader.exec_module(mod)\n"
    "    out['ok'] = True\n"
    "    if cls:\n"
    "        out['phase'] = 'instantiate'\n"
    "        try:\n"
    "            getattr(mod, cls)()\n"
    "            out['instantiate'] = 'ok'\n"
    "        except BaseException as e:\n"
    "            out['instantiate'] = type(e).__name__ + ': ' + str(e)[:200]\n"
    "except BaseException as e:\n"
    "    out['exception_type'] = type(e).__name__\n"
    "    out['traceback_tail'] = tail(e)\n"
    "out['duration_ms'] = int((time.monotonic() - t0) * 1000)\n"
    "os.write(1, ('\\n' + json.dumps(out) + '\\n').encode())\n"
    "os._exit(0 if out['ok'] else 1)\n";

std::string last_line(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
  auto nl = text.rfind('\n');
  return std::string(nl == std::string_view::npos ? text : text.substr(nl + 1));
}

std::string tail_lines(std::string_view text, std::size_t n) {
  std::size_t pos = text.size();
  while (pos > 0 && text[pos - 1] == '\n') --pos;
  std::size_t end = pos;
  for (std::size_t seen = 0; pos > 0; --pos) {
    if (text[pos - 1] == '\n' && ++seen == n) break;
  }
  return std::string(text.substr(pos, end - pos));
}

std::string exception_line(std::string_view diagnostics) {
  // The last line that looks like "Type: message" or a bare exception name.
  static const std::regex kExc(R"(^([A-Za-z_][\w.]*(Error|Exception|Exit|Interrupt|Warning)|NameError)(:.*)?$)");
  std::string best;
  std::size_t start = 0;
  while (start <= diagnostics.size()) {
    auto nl = diagnostics.find('\n', start);
    std::string line(diagnostics.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (std::regex_match(line, kExc)) best = line;
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return best.empty() ? last_line(diagnostics) : best;
}

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

void write_file(const fs::path& p, std::string_view body) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f || !(f << body) || !f.flush()) throw Error(ErrorCode::IoError, "cannot write " + p.string());
}

ProcessOptions sandbox_options(const fs::path& scratch, const SandboxLimits& limits) {
  ProcessOptions o;
  o.cwd = scratch;
  o.env = minimal_environment(scratch);
  o.timeout = limits.wall_clock;
  o.sandboxed = true;
  o.limits = limits;
  o.writable_root = scratch;
  return o;
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

}  // namespace

std::string_view to_string(StageStatus s) {
  switch (s) {
    case StageStatus::Pass: return "Pass";
    case StageStatus::Fail: return "Fail";
    case StageStatus::NotRun: return "NotRun";
  }
  return "?";
}

std::string_view to_string(FailureClass c) {
  switch (c) {
    case FailureClass::None: return "None";
    case FailureClass::NativeExtension: return "NativeExtension";
    case FailureClass::CircularOrComplexDep: return "CircularOrComplexDep";
    case FailureClass::DynamicMetaprogramming: return "DynamicMetaprogramming";
    case FailureClass::RepoUtilityOrConfig: return "RepoUtilityOrConfig";
    case FailureClass::Timeout: return "Timeout";
    case FailureClass::Other: return "Other";
    case FailureClass::SyntaxError: return "SyntaxError";
  }
  return "?";
}

ExecutionMode parse_execution_mode(std::string_view s) {
  if (s == "inline") return ExecutionMode::Inline;
  if (s == "probe") return ExecutionMode::Probe;
  if (s == "compile-only") return ExecutionMode::CompileOnly;
  throw Error(ErrorCode::ConfigError, "unknown execution mode '" + std::string(s) + "' (inline|probe|compile-only)");
}

std::string GateConfig::default_interpreter() {
  const char* env = std::getenv("BLOCKFORGE_PYTHON");
  return env && *env ? env : "python3";
}

FailureClass classify_failure(std::string_view diagnostics, const std::vector<std::string>& scc_names,
                              bool timed_out) {
  if (timed_out) return FailureClass::Timeout;
  const std::string exc = exception_line(diagnostics);
  static const std::regex kMissing(R"(No module named '([^']+)')");
  std::smatch m;
  std::string missing;
  if (std::regex_search(exc, m, kMissing)) missing = m[1];

  // Compiled-extension module names: any component mentioning cuda, ending
  // in _ext/_cpp/_cuda, or the conventional _C/_backend.
  auto native_module = [](const std::string& mod) {
    std::size_t start = 0;
    while (start <= mod.size()) {
      auto dot = mod.find('.', start);
      std::string part = mod.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      std::string lower = part;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      auto ends = [&](std::string_view s) {
        return lower.size() >= s.size() && lower.compare(lower.size() - s.size(), s.size(), s) == 0;
      };
      if (contains(lower, "cuda") || ends("_ext") || ends("_cpp") || part == "_C" || part == "_backend") return true;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return false;
  };
  if (contains(diagnostics, "undefined symbol") || contains(diagnostics, "cannot open shared object") ||
      contains(diagnostics, "DLL load failed") || contains(exc, "invalid ELF header") ||
      (!missing.empty() && native_module(missing)))
    return FailureClass::NativeExtension;

  if (contains(exc, "circular import") || contains(exc, "partially initialized module"))
    return FailureClass::CircularOrComplexDep;
  static const std::regex kNameError(R"(NameError: name '([^']+)' is not defined)");
  if (std::regex_search(exc, m, kNameError) &&
      std::find(scc_names.begin(), scc_names.end(), m[1].str()) != scc_names.end())
    return FailureClass::CircularOrComplexDep;

  static const std::regex kDynamic(R"(regist|metaclass)", std::regex::icase);
  bool lookup_error = exc.rfind("KeyError", 0) == 0 || exc.rfind("AttributeError", 0) == 0;
  if (std::regex_search(exc, kDynamic) || (lookup_error && std::regex_search(std::string(diagnostics), kDynamic)) ||
      (lookup_error && contains(diagnostics, "getattr(")))
    return FailureClass::DynamicMetaprogramming;

  if (exc.rfind("ModuleNotFoundError", 0) == 0 || exc.rfind("ImportError", 0) == 0 ||
      exc.rfind("FileNotFoundError", 0) == 0 || contains(exc, "relative import") || !missing.empty())
    return FailureClass::RepoUtilityOrConfig;
  return FailureClass::Other;
}

ValidationReport validate(const GeneratedModule& module, const GateConfig& config,
                          const std::vector<std::string>& scc_names) {
  return validate_text(module.block_name, module.text, config, scc_names);
}

ValidationReport validate_text(const std::string& block_name, const std::string& text, const GateConfig& config,
                               const std::vector<std::string>& scc_names) {
  auto t0 = std::chrono::steady_clock::now();
  ValidationReport r;
  r.block_name = block_name;
  r.module_sha256 = sha256_hex(text);
  auto finish = [&]() {
    r.promoted = r.stage_parse.status == StageStatus::Pass && r.stage_compile.status == StageStatus::Pass &&
                 r.stage_execute.status == StageStatus::Pass;
    r.wall_time_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    return r;
  };

  try {
    python::parse_module(text);
    r.stage_parse.status = StageStatus::Pass;
  } catch (const python::SyntaxError& e) {
    r.stage_parse = {StageStatus::Fail, e.what()};
    r.failure_class = FailureClass::SyntaxError;
    return finish();
  }

  ScratchDir scratch("blockforge-gate");
  fs::path file = scratch.path() / (block_name + ".py");
  write_file(file, text);
  ProcessOptions opts = sandbox_options(scratch.path(), config.limits);

  ProcessResult compiled = run_process({config.interpreter, "-I", "-c", kCompileScript, file.string()}, opts);
  r.network_isolated = compiled.network_isolated;
  r.filesystem_confined = compiled.filesystem_confined;
  if (!compiled.ok()) {
    r.stage_compile = {StageStatus::Fail, compiled.timed_out ? "compile timed out" : tail_lines(compiled.err, 6)};
    r.failure_class = compiled.timed_out ? FailureClass::Timeout : FailureClass::SyntaxError;
    return finish();
  }
  r.stage_compile.status = StageStatus::Pass;

  if (config.mode == ExecutionMode::CompileOnly) {
    r.stage_execute = {StageStatus::Pass, "compile-only gating"};
    r.instantiation = "not attempted";
    return finish();
  }

  std::vector<std::string> argv{config.interpreter, "-I"};
  if (config.mode == ExecutionMode::Probe) {
    if (config.probe_script.empty() || !fs::exists(config.probe_script))
      throw Error(ErrorCode::SandboxSetupFailed, "probe script not found: " + config.probe_script.string());
    argv.push_back(fs::absolute(config.probe_script).string());
  } else {
    argv.insert(argv.end(), {"-c", kInlineRunner});
  }
  argv.insert(argv.end(), {file.string(), block_name});
  ProcessResult ran = run_process(argv, opts);
  r.network_isolated = ran.network_isolated;
  r.filesystem_confined = ran.filesystem_confined;

  nlohmann::json record;
  try {
    record = nlohmann::json::parse(last_line(ran.out));
    if (!record.is_object()) record = nullptr;
  } catch (const nlohmann::json::exception&) {
    record = nullptr;
  }
  bool imported = ran.ok() && record.is_object() && record.value("ok", false);
  auto str = [&](const char* key) {
    return record.is_object() && record.contains(key) && record[key].is_string() ? record[key].get<std::string>()
                                                                                 : std::string();
  };
  r.exception_type = str("exception_type");
  r.instantiation = str("instantiate");
  if (r.instantiation.empty()) r.instantiation = "not attempted";
  if (imported) {
    r.stage_execute = {StageStatus::Pass, "imported"};
    return finish();
  }
  std::string diagnostics = str("traceback_tail");
  if (!ran.err.empty()) diagnostics = trim(ran.err) + "\n" + diagnostics;
  if (!r.exception_type.empty() && !contains(diagnostics, r.exception_type)) diagnostics += "\n" + r.exception_type;
  std::string message;
  if (ran.timed_out) {
    message = "timed out after " + std::to_string(config.limits.wall_clock.count()) + " ms";
  } else if (!record.is_object()) {
    message = "no result record; exit " + std::to_string(ran.exit_code) +
              (ran.term_signal ? " signal " + std::to_string(ran.term_signal) : "") + "\n" + tail_lines(ran.err, 6);
  } else {
    message = exception_line(diagnostics);
  }
  r.stage_execute = {StageStatus::Fail, trim(message)};
  r.failure_class = classify_failure(diagnostics, scc_names, ran.timed_out);
  return finish();
}

nlohmann::ordered_json report_to_json(const ValidationReport& r) {
  using oj = nlohmann::ordered_json;
  auto stage = [](const StageResult& s) { return oj{{"status", to_string(s.status)}, {"message", s.message}}; };
  return oj{{"block_name", r.block_name},
            {"module_sha256", r.module_sha256},
            {"stage_parse", stage(r.stage_parse)},
            {"stage_compile", stage(r.stage_compile)},
            {"stage_execute", stage(r.stage_execute)},
            {"failure_class", r.failure_class == FailureClass::None ? oj(nullptr) : oj(to_string(r.failure_class))},
            {"exception_type", r.exception_type.empty() ? oj(nullptr) : oj(r.exception_type)},
            {"instantiation", r.instantiation},
            {"wall_time_ms", r.wall_time_ms},
            {"promoted", r.promoted},
            {"sandbox", {{"network_isolated", r.network_isolated}, {"filesystem_confined", r.filesystem_confined}}}};
}

void persist_report(const ValidationReport& report, const fs::path& reports_dir) {
  fs::create_directories(reports_dir);
  fs::path target = reports_dir / (report.block_name + ".validation.json");
  if (fs::exists(target)) {
    fs::path archive = reports_dir / "archive";
    fs::create_directories(archive);
    for (int n = 1;; ++n) {
      fs::path dest = archive / (report.block_name + ".validation." + std::to_string(n) + ".json");
      if (!fs::exists(dest)) {
        fs::rename(target, dest);
        break;
      }
    }
  }
  write_file(target, report_to_json(report).dump(2) + "\n");
}

void apply_promotion(const ValidationReport& report, const std::string& text, const fs::path& validated_dir) {
  fs::path target = validated_dir / (report.block_name + ".py");
  if (!report.promoted) {
    std::error_code ec;
    fs::remove(target, ec);
    return;
  }
  fs::create_directories(validated_dir);
  write_file(target, text);
}

}  // namespace blockforge
