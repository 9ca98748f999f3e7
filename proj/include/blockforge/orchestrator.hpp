#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockforge/block_discovery.hpp"
#include "blockforge/closure_resolver.hpp"
#include "blockforge/code_emitter.hpp"
#include "blockforge/dedup_curator.hpp"
#include "blockforge/repo_cache.hpp"
#include "blockforge/source_index.hpp"
#include "blockforge/validation_gate.hpp"

namespace blockforge {

struct RetryPolicy {
  int attempts = 2;
  std::chrono::milliseconds backoff_base{2000};  // delay before attempt k+1 is base * 2^(k-1)
};

struct CorpusConfig {
  std::vector<RepoSpec> repos;
  IndexPolicy index_policy = IndexPolicy::Missing;
  int worker_count = default_workers();
  RetryPolicy retry;
  GateConfig gate;  // interpreter, stage-3 mode, sandbox limits
  CurationParams dedup;
  bool strip_type_checking = false;
  std::filesystem::path cache_root = default_cache_root();
  std::filesystem::path output_root = ".";  // generated/, validated/, reports/, curation_output/

  void check() const;  // throws Error{ConfigError}
  // max(available CPUs, 8)
  static int default_workers();
};

// repos.json: either an array of repo objects or an object with "repos"
// and optional policy sections (schema in docs/schema.md). Relative local
// repo paths resolve against the file's directory.
CorpusConfig load_config(const std::filesystem::path& path);
CorpusConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

struct WarmStats {
  std::size_t repos = 0;
  std::size_t stale_repos = 0;  // served from cache, remote unreachable
  std::size_t files = 0;
  std::size_t parsed = 0;
  std::size_t reused = 0;
  std::size_t parse_failures = 0;
  std::size_t pruned = 0;
  std::size_t symbols = 0;
  std::size_t imports = 0;
  double cache_hit_rate = 0.0;  // reused / files
  std::int64_t elapsed_ms = 0;
};

enum class BlockStatus { Validated, Failed, ExtractionError, NotFound, Ambiguous };
std::string_view to_string(BlockStatus s);

struct BlockOutcome {
  std::string requested;
  std::string block_name;
  std::string fq_name;
  std::string repo_name;
  BlockStatus status = BlockStatus::ExtractionError;
  std::optional<GeneratedModule> module;
  std::optional<ValidationReport> report;
  std::string error;
  int attempts = 0;
  std::size_t unresolved = 0;
  std::int64_t extract_ms = 0;  // lookup through validation

  // Summary bucket: "Validated", a FailureClass name, or "ExtractionError".
  std::string bucket() const;
};

struct RunSummary {
  std::size_t targeted = 0;
  std::size_t extracted = 0;  // emitted modules
  std::size_t validated = 0;
  double pass_rate = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 0.0;
  std::map<std::string, std::size_t> per_failure_class;
  std::size_t total_generated_lines = 0;
  double mean_extract_ms = 0.0;
  double cache_hit_rate = 0.0;
  std::vector<BlockOutcome> outcomes;  // request order
};

nlohmann::ordered_json summary_to_json(const RunSummary& s);

class Orchestrator {
 public:
  explicit Orchestrator(CorpusConfig config);
  ~Orchestrator();

  const CorpusConfig& config() const noexcept { return config_; }

  // Syncs every repo and indexes its sources under the index policy.
  WarmStats warm_index_once();
  const WarmStats& last_warm() const noexcept { return warm_; }

  // Index snapshot (requires warm_index_once or an existing index).
  const IndexView& view();

  // Block candidates; also writes nn_block_names.json and the sidecar
  // index into the output root.
  const DiscoveryResult& discover();

  // Picks a candidate for a request: "Name" (class name, best repo
  // priority), a dotted fq_name or suffix, or "repo:fq_name". Throws
  // Error{BlockNotFound} or Error{AmbiguousBlockName}.
  const BlockCandidate& find_block(const std::string& request);

  // lookup, closure, emit, validate; artifacts and reports written.
  BlockOutcome extract_single_block(const std::string& request);

  // Names processed in order from position `restart_from` (0-based),
  // at most `limit` of them, on the worker pool.
  RunSummary extract_batch(const std::vector<std::string>& names, std::optional<std::size_t> limit = std::nullopt,
                           std::size_t restart_from = 0);

  // Progress lines (one per finished block); default prints to stderr.
  void on_progress(std::function<void(const std::string&)> sink) { progress_ = std::move(sink); }

  // Test hook replacing the sleep between retry attempts.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleep_ = std::move(sleeper); }

 private:
  BlockOutcome attempt_block(const std::string& request);
  void emit_progress(const std::string& line);
  IndexStore& store();

  CorpusConfig config_;
  std::unique_ptr<IndexStore> store_;
  std::optional<IndexView> view_;
  std::optional<DiscoveryResult> discovery_;
  WarmStats warm_;
  std::mutex io_mu_;
  std::function<void(const std::string&)> progress_;
  std::function<void(std::chrono::milliseconds)> sleep_;
};

// Names from a JSON file: an array of strings (nn_block_names.json).
std::vector<std::string> load_block_names(const std::filesystem::path& path);

}  // namespace blockforge
