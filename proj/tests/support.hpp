#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "blockforge/orchestrator.hpp"
#include "blockforge/sandbox.hpp"

namespace blockforge::testing {

inline std::filesystem::path source_dir() { return BLOCKFORGE_SOURCE_DIR; }
inline std::filesystem::path fixture_dir() { return source_dir() / "tests" / "fixtures"; }
inline std::filesystem::path corpus_dir() { return fixture_dir() / "corpus"; }
inline std::filesystem::path oracle_dir() { return source_dir() / "tests" / "oracles"; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << body;
}

// Fixture corpus config with cache and outputs under `root`.
inline CorpusConfig fixture_config(const std::filesystem::path& root, int workers = 8,
                                   ExecutionMode mode = ExecutionMode::Inline) {
  auto doc = nlohmann::json::parse(read_file(corpus_dir() / "repos.json"));
  CorpusConfig c = parse_config(doc, corpus_dir());
  c.cache_root = root / "cache";
  c.output_root = root / "out";
  c.worker_count = workers;
  c.dedup.workers = workers;
  c.gate.mode = mode;
  c.retry.backoff_base = std::chrono::milliseconds(0);
  return c;
}

// Runs a script from tests/oracles with `input` on stdin.
inline ProcessResult run_oracle(const std::string& script, const std::string& input,
                                std::chrono::milliseconds timeout = std::chrono::minutes(3)) {
  ProcessOptions o;
  o.stdin_data = input;
  o.timeout = timeout;
  return run_process({GateConfig::default_interpreter(), "-I", (oracle_dir() / script).string()}, o);
}

}  // namespace blockforge::testing
