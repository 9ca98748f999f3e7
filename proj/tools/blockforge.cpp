#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "blockforge/dedup_curator.hpp"
#include "blockforge/error.hpp"
#include "blockforge/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace blockforge;

namespace {

constexpr int kOk = 0;
constexpr int kBlockFailures = 1;
constexpr int kUsage = 2;

struct Options {
  std::string config = "repos.json";
  std::string output;
  std::string cache;
  int workers = 0;
  std::string mode;
  std::string interpreter;
  std::string probe;
  long long timeout_ms = 0;
  bool quiet = false;
};

CorpusConfig configure(const Options& o, bool need_file) {
  CorpusConfig c;
  if (fs::exists(o.config)) c = load_config(o.config);
  else if (need_file) throw Error(ErrorCode::ConfigError, "config file not found: " + o.config);
  if (!o.output.empty()) c.output_root = o.output;
  if (!o.cache.empty()) c.cache_root = o.cache;
  if (o.workers > 0) c.worker_count = c.dedup.workers = o.workers;
  if (!o.mode.empty()) c.gate.mode = parse_execution_mode(o.mode);
  if (!o.interpreter.empty()) c.gate.interpreter = o.interpreter;
  if (!o.probe.empty()) {
    c.gate.probe_script = o.probe;
    if (o.mode.empty()) c.gate.mode = ExecutionMode::Probe;
  }
  if (o.timeout_ms > 0) c.gate.limits.wall_clock = std::chrono::milliseconds(o.timeout_ms);
  c.check();
  return c;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) throw Error(ErrorCode::IoError, "cannot write " + p.string());
}

std::ostream& print_warm(std::ostream& os, const WarmStats& s) {
  return os << "repos=" << s.repos << " files=" << s.files << " parsed=" << s.parsed << " reused=" << s.reused
            << " parse_failures=" << s.parse_failures << " symbols=" << s.symbols << " imports=" << s.imports
            << " stale=" << s.stale_repos << " elapsed_ms=" << s.elapsed_ms << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blockforge: extract validated standalone nn.Module blocks from Python repositories"};
  app.set_version_flag("--version", "blockforge 1.0.0");
  Options o;
  std::string block;
  std::vector<std::string> blocks;
  std::string names_file = "nn_block_names.json";
  std::size_t limit = 0;
  std::size_t restart_from = 0;

  app.add_option("--config", o.config, "Corpus config (repos.json)")->capture_default_str();
  app.add_option("--output", o.output, "Output root for generated/, validated/, reports/");
  app.add_option("--cache", o.cache, "Cache root (default $BLOCKFORGE_CACHE or ./.blockforge/cache)");
  app.add_option("--workers", o.workers, "Worker pool size (default max(CPUs, 8))")->check(CLI::PositiveNumber);
  app.add_option("--mode", o.mode, "Stage-3 execution: inline | probe | compile-only");
  app.add_option("--python", o.interpreter, "Target interpreter (default $BLOCKFORGE_PYTHON or python3)");
  app.add_option("--probe", o.probe, "Probe script run as <python> probe.py <module> <class>");
  app.add_option("--timeout-ms", o.timeout_ms, "Sandbox wall clock per stage")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", o.quiet, "No per-block progress lines");
  auto* block_opt = app.add_option("--block", block, "Extract one block by name, fq_name or repo:fq_name");
  auto* blocks_opt = app.add_option("--blocks", blocks, "Extract several blocks")->expected(1, -1);
  block_opt->excludes(blocks_opt);
  app.add_option("--names", names_file, "JSON array of block names for a batch run")->capture_default_str();
  app.add_option("--limit", limit, "Process at most N names");
  app.add_option("--restart-from", restart_from, "Skip the first K names of the list");

  auto* index_cmd = app.add_subcommand("index", "Sync repositories and build the source index");
  std::string policy = "missing";
  index_cmd->add_option("--policy", policy, "missing | force")->capture_default_str();

  auto* sync_cmd = app.add_subcommand("sync", "Sync repositories into the cache only");
  auto* discover_cmd = app.add_subcommand("discover", "List nn.Module block candidates into nn_block_names.json");

  auto* validate_cmd = app.add_subcommand("validate", "Re-run the validation gate on generated modules");
  std::vector<std::string> validate_names;
  validate_cmd->add_option("names", validate_names, "Block names under generated/")->required();

  auto* dedup_cmd = app.add_subcommand("dedup", "Curate a directory of .py artifacts or a JSON lines file");
  std::string dedup_input;
  std::string dedup_out;
  double tau = -1, kappa = -1;
  long long min_support = -1;
  dedup_cmd->add_option("input", dedup_input, "Directory or .jsonl file")->required();
  dedup_cmd->add_option("--out", dedup_out, "Output directory (default <output>/curation_output)");
  dedup_cmd->add_option("--tau", tau, "Lexical Jaccard threshold (default 0.90)");
  dedup_cmd->add_option("--kappa", kappa, "Structural fingerprint threshold (default 0.95)");
  dedup_cmd->add_option("--min-support", min_support, "Diversity top-up target per family (default 3)");

  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*dedup_cmd) {
      CorpusConfig c = configure(o, false);
      if (tau >= 0) c.dedup.tau = tau;
      if (kappa >= 0) c.dedup.kappa = kappa;
      if (min_support >= 0) c.dedup.min_support = static_cast<std::size_t>(min_support);
      auto artifacts = load_artifacts(dedup_input);
      CurationResult result = curate(artifacts, c.dedup);
      fs::path out = dedup_out.empty() ? c.output_root / "curation_output" : fs::path(dedup_out);
      write_curation_output(result, artifacts, c.dedup, out);
      std::cout << report_to_json(result.report, c.dedup).dump(2) << "\n";
      return kOk;
    }

    CorpusConfig c = configure(o, true);
    if (*index_cmd) c.index_policy = parse_index_policy(policy);
    Orchestrator orch(c);
    if (o.quiet) orch.on_progress({});

    if (*sync_cmd) {
      RepoCache cache(c.cache_root);
      for (const auto& spec : c.repos) {
        CacheEntry e = cache.sync_repo(spec);
        std::cout << spec.name << " " << e.head_commit << (e.stale ? " stale" : "") << " " << e.local_path.string()
                  << "\n";
      }
      return kOk;
    }
    if (*index_cmd) {
      print_warm(std::cout, orch.warm_index_once());
      return kOk;
    }

    WarmStats warm = orch.warm_index_once();
    if (!o.quiet) print_warm(std::cerr, warm);

    if (*discover_cmd) {
      const DiscoveryResult& d = orch.discover();
      for (const auto& cand : d.candidates) std::cout << cand.repo_name << ":" << cand.fq_name << "\n";
      for (const auto& diag : d.diagnostics)
        std::cerr << "excluded " << diag.repo_name << ":" << diag.fq_name << ": " << diag.reason << "\n";
      std::cerr << d.candidates.size() << " candidates written to " << (c.output_root / "nn_block_names.json").string()
                << "\n";
      return kOk;
    }

    if (*validate_cmd) {
      bool all = true;
      for (const auto& name : validate_names) {
        fs::path p = c.output_root / "generated" / (name + ".py");
        std::ifstream f(p, std::ios::binary);
        if (!f) throw Error(ErrorCode::BlockNotFound, "no generated module " + p.string());
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        ValidationReport r = validate_text(name, text, c.gate);
        persist_report(r, c.output_root / "reports");
        apply_promotion(r, text, c.output_root / "validated");
        std::cout << name << " " << (r.promoted ? "promoted" : "failed") << " "
                  << (r.promoted ? "" : std::string(to_string(r.failure_class))) << "\n";
        all = all && r.promoted;
      }
      return all ? kOk : kBlockFailures;
    }

    if (!block.empty()) {
      BlockOutcome out = orch.extract_single_block(block);
      if (out.status == BlockStatus::NotFound || out.status == BlockStatus::Ambiguous) {
        std::cerr << out.error << "\n";
        return kUsage;
      }
      if (out.report) std::cout << report_to_json(*out.report).dump(2) << "\n";
      else std::cerr << out.error << "\n";
      return out.status == BlockStatus::Validated ? kOk : kBlockFailures;
    }

    std::vector<std::string> names = blocks.empty() ? load_block_names(names_file) : blocks;
    RunSummary s = orch.extract_batch(names, limit > 0 ? std::optional<std::size_t>(limit) : std::nullopt, restart_from);
    auto doc = summary_to_json(s);
    write_text(c.output_root / "reports" / "run_summary.json", doc.dump(2) + "\n");
    doc.erase("blocks");
    std::cout << doc.dump(2) << "\n";
    return s.validated == s.targeted ? kOk : kBlockFailures;
  } catch (const Error& e) {
    std::cerr << "blockforge: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "blockforge: " << e.what() << "\n";
    return kUsage;
  }
}
