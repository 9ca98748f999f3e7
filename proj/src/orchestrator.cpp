#include "blockforge/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "blockforge/error.hpp"

namespace blockforge {
namespace fs = std::filesystem;
namespace {

std::int64_t ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j[key].is_array()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

RepoSpec parse_repo(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "repo entries must be objects");
  RepoSpec r;
  r.name = j.value("name", "");
  r.url = j.value("url", "");
  r.priority = j.value("priority", 1);
  r.path_globs = string_list(j, "path_globs");
  r.symbol_patterns = string_list(j, "symbol_patterns");
  std::string policy = j.value("fetch_policy", "code_only");
  if (policy != "code_only") throw Error(ErrorCode::ConfigError, r.name + ": unknown fetch_policy '" + policy + "'");
  bool remote = r.url.find("://") != std::string::npos || r.url.rfind("git@", 0) == 0;
  if (!remote && !r.url.empty() && fs::path(r.url).is_relative() && !base_dir.empty())
    r.url = (base_dir / r.url).lexically_normal().string();
  r.check();
  return r;
}

template <class F>
auto with_retries(const RetryPolicy& policy, const std::function<void(std::chrono::milliseconds)>& sleep, F&& body,
                  int* used = nullptr) {
  for (int attempt = 1;; ++attempt) {
    if (used) *used = attempt;
    try {
      return body();
    } catch (const Error& e) {
      if (!e.transient() || attempt >= policy.attempts) throw;
      sleep(policy.backoff_base * (1LL << (attempt - 1)));
    }
  }
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

int CorpusConfig::default_workers() {
  unsigned hw = std::thread::hardware_concurrency();
  return std::max(static_cast<int>(hw), 8);
}

void CorpusConfig::check() const {
  if (worker_count < 1) throw Error(ErrorCode::ConfigError, "worker_count must be >= 1");
  if (retry.attempts < 1) throw Error(ErrorCode::ConfigError, "retry.attempts must be >= 1");
  if (retry.backoff_base.count() < 0) throw Error(ErrorCode::ConfigError, "retry backoff must be >= 0");
  if (gate.limits.wall_clock.count() <= 0) throw Error(ErrorCode::ConfigError, "sandbox wall clock must be > 0");
  std::set<std::string> names;
  for (const auto& r : repos) {
    r.check();
    if (!names.insert(r.name).second) throw Error(ErrorCode::ConfigError, "repo '" + r.name + "' listed twice");
  }
}

CorpusConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir) {
  CorpusConfig c;
  try {
    const nlohmann::json* repos = &doc;
    if (doc.is_object()) {
      if (!doc.contains("repos")) throw Error(ErrorCode::ConfigError, "config object needs a \"repos\" array");
      repos = &doc["repos"];
      if (doc.contains("index_policy")) c.index_policy = parse_index_policy(doc["index_policy"].get<std::string>());
      c.worker_count = doc.value("worker_count", c.worker_count);
      c.strip_type_checking = doc.value("strip_type_checking", false);
      if (doc.contains("retry")) {
        const auto& r = doc["retry"];
        c.retry.attempts = r.value("attempts", c.retry.attempts);
        c.retry.backoff_base = std::chrono::milliseconds(r.value("backoff_base_ms", c.retry.backoff_base.count()));
      }
      if (doc.contains("sandbox")) {
        const auto& s = doc["sandbox"];
        c.gate.limits.wall_clock = std::chrono::milliseconds(s.value("wall_clock_ms", c.gate.limits.wall_clock.count()));
        c.gate.limits.memory_bytes = s.value("memory_bytes", c.gate.limits.memory_bytes);
        c.gate.limits.allow_network = s.value("allow_network", false);
      }
      if (doc.contains("validation")) {
        const auto& v = doc["validation"];
        c.gate.interpreter = v.value("interpreter", c.gate.interpreter);
        if (v.contains("mode")) c.gate.mode = parse_execution_mode(v["mode"].get<std::string>());
        if (v.contains("probe_script")) {
          fs::path p = v["probe_script"].get<std::string>();
          c.gate.probe_script = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
      }
      if (doc.contains("dedup")) {
        const auto& d = doc["dedup"];
        c.dedup.tau = d.value("tau", c.dedup.tau);
        c.dedup.kappa = d.value("kappa", c.dedup.kappa);
        c.dedup.min_support = d.value("min_support", c.dedup.min_support);
      }
      if (doc.contains("cache_root")) {
        fs::path p = doc["cache_root"].get<std::string>();
        c.cache_root = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      }
      if (doc.contains("output_root")) {
        fs::path p = doc["output_root"].get<std::string>();
        c.output_root = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      }
    }
    if (!repos->is_array()) throw Error(ErrorCode::ConfigError, "\"repos\" must be an array");
    for (const auto& r : *repos) c.repos.push_back(parse_repo(r, base_dir));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad config: ") + e.what());
  }
  c.dedup.workers = c.worker_count;
  c.check();
  return c;
}

CorpusConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path());
}

std::vector<std::string> load_block_names(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot read block list " + path.string());
  try {
    auto j = nlohmann::json::parse(f);
    return j.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": expected a JSON array of names: " + e.what());
  }
}

std::string_view to_string(BlockStatus s) {
  switch (s) {
    case BlockStatus::Validated: return "Validated";
    case BlockStatus::Failed: return "Failed";
    case BlockStatus::ExtractionError: return "ExtractionError";
    case BlockStatus::NotFound: return "NotFound";
    case BlockStatus::Ambiguous: return "Ambiguous";
  }
  return "?";
}

std::string BlockOutcome::bucket() const {
  if (status == BlockStatus::Validated) return "Validated";
  if (status == BlockStatus::Failed && report) return std::string(to_string(report->failure_class));
  return "ExtractionError";
}

nlohmann::ordered_json summary_to_json(const RunSummary& s) {
  using oj = nlohmann::ordered_json;
  oj classes = oj::object();
  for (const auto& [k, v] : s.per_failure_class) classes[k] = v;
  oj blocks = oj::array();
  for (const auto& o : s.outcomes) {
    blocks.push_back({{"requested", o.requested},
                      {"block", o.block_name},
                      {"fq_name", o.fq_name},
                      {"repo", o.repo_name},
                      {"status", to_string(o.status)},
                      {"bucket", o.bucket()},
                      {"attempts", o.attempts},
                      {"unresolved", o.unresolved},
                      {"error", o.error}});
  }
  return oj{{"targeted", s.targeted},
            {"extracted", s.extracted},
            {"validated", s.validated},
            {"pass_rate", s.pass_rate},
            {"wilson_low", s.wilson_low},
            {"wilson_high", s.wilson_high},
            {"per_failure_class", classes},
            {"total_generated_lines", s.total_generated_lines},
            {"mean_extract_ms", s.mean_extract_ms},
            {"cache_hit_rate", s.cache_hit_rate},
            {"blocks", blocks}};
}

Orchestrator::Orchestrator(CorpusConfig config) : config_(std::move(config)) {
  config_.check();
  progress_ = [](const std::string& line) { std::cerr << line << std::endl; };
  sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

Orchestrator::~Orchestrator() = default;

IndexStore& Orchestrator::store() {
  if (!store_) {
    fs::create_directories(config_.cache_root);
    store_ = std::make_unique<IndexStore>(config_.cache_root / "index.db");
  }
  return *store_;
}

void Orchestrator::emit_progress(const std::string& line) {
  std::lock_guard lock(io_mu_);
  if (progress_) progress_(line);
}

WarmStats Orchestrator::warm_index_once() {
  auto t0 = std::chrono::steady_clock::now();
  WarmStats stats;
  RepoCache cache(config_.cache_root);
  IndexStore& db = store();
  for (const RepoSpec& spec : config_.repos) {
    CacheEntry entry = with_retries(config_.retry, sleep_, [&] { return cache.sync_repo(spec); });
    std::vector<SourceFile> files = cache.enumerate_sources(entry, spec);
    IndexStats s = index_files(db, spec.name, files, config_.index_policy, config_.worker_count);
    db.upsert_repo(RepoRow{spec.name, spec.priority, spec.url, entry.head_commit});
    ++stats.repos;
    if (entry.stale) ++stats.stale_repos;
    stats.files += s.files;
    stats.parsed += s.parsed;
    stats.reused += s.reused;
    stats.parse_failures += s.parse_failures;
    stats.pruned += s.pruned;
  }
  view_ = db.snapshot();
  discovery_.reset();
  std::set<std::string> configured;
  for (const auto& r : config_.repos) configured.insert(r.name);
  for (const auto& s : view_->symbols()) stats.symbols += configured.count(s.repo_name);
  for (const auto& i : view_->imports()) stats.imports += configured.count(i.repo_name);
  stats.cache_hit_rate = stats.files ? static_cast<double>(stats.reused) / static_cast<double>(stats.files) : 0.0;
  stats.elapsed_ms = ms_since(t0);
  warm_ = stats;
  return stats;
}

const IndexView& Orchestrator::view() {
  if (!view_) view_ = store().snapshot();
  return *view_;
}

const DiscoveryResult& Orchestrator::discover() {
  if (discovery_) return *discovery_;
  SymbolFilters filters;
  for (const auto& r : config_.repos)
    if (!r.symbol_patterns.empty()) filters[r.name] = r.symbol_patterns;
  DiscoveryResult found = discover_blocks(view(), filters);
  // Only blocks from configured repos are offered.
  std::set<std::string> configured;
  for (const auto& r : config_.repos) configured.insert(r.name);
  std::erase_if(found.candidates, [&](const BlockCandidate& c) { return !configured.count(c.repo_name); });
  std::erase_if(found.diagnostics, [&](const DiscoveryDiagnostic& d) { return !configured.count(d.repo_name); });
  write_candidate_files(found.candidates, config_.output_root);
  discovery_ = std::move(found);
  return *discovery_;
}

const BlockCandidate& Orchestrator::find_block(const std::string& request) {
  const auto& candidates = discover().candidates;
  std::vector<const BlockCandidate*> hits;
  auto colon = request.find(':');
  for (const auto& c : candidates) {
    bool hit;
    if (colon != std::string::npos) {
      hit = c.repo_name == request.substr(0, colon) && c.fq_name == request.substr(colon + 1);
    } else if (request.find('.') != std::string::npos) {
      hit = c.fq_name == request ||
            (c.fq_name.size() > request.size() && c.fq_name.compare(c.fq_name.size() - request.size(), request.size(), request) == 0 &&
             c.fq_name[c.fq_name.size() - request.size() - 1] == '.');
    } else {
      hit = c.class_name == request;
    }
    if (hit) hits.push_back(&c);
  }
  if (hits.empty()) {
    std::string why = "no block candidate named '" + request + "'";
    for (const auto& d : discover().diagnostics) {
      auto dot = d.fq_name.rfind('.');
      std::string short_name = dot == std::string::npos ? d.fq_name : d.fq_name.substr(dot + 1);
      if (short_name == request || d.fq_name == request) {
        why += "; " + d.repo_name + ":" + d.fq_name + " excluded: " + d.reason;
        break;
      }
    }
    throw Error(ErrorCode::BlockNotFound, why);
  }
  int best = 3;
  for (const auto* c : hits) best = std::min(best, view().priority(c->repo_name));
  std::vector<const BlockCandidate*> top;
  for (const auto* c : hits)
    if (view().priority(c->repo_name) == best) top.push_back(c);
  if (top.size() > 1) {
    std::string list;
    for (const auto* c : top) list += (list.empty() ? "" : ", ") + c->repo_name + ":" + c->fq_name;
    throw Error(ErrorCode::AmbiguousBlockName, "'" + request + "' matches " + list + "; request one by repo:fq_name");
  }
  return *top.front();
}

BlockOutcome Orchestrator::attempt_block(const std::string& request) {
  auto t0 = std::chrono::steady_clock::now();
  BlockOutcome out;
  out.requested = request;
  try {
    const BlockCandidate& block = find_block(request);
    out.block_name = block.class_name;
    out.fq_name = block.fq_name;
    out.repo_name = block.repo_name;
    ClosureResult closure = close(block, view(), ResolveOptions{config_.strip_type_checking});
    out.unresolved = closure.unresolved.size();
    const fs::path reports = config_.output_root / "reports";
    GeneratedModule module;
    try {
      module = emit(closure, order_definitions(closure), view());
    } catch (const Error&) {
      std::lock_guard lock(io_mu_);
      write_closure_report(closure, reports);
      throw;
    }
    {
      std::lock_guard lock(io_mu_);
      write_closure_report(closure, reports);
      write_generated(module, config_.output_root / "generated");
    }
    ValidationReport report = with_retries(
        config_.retry, sleep_, [&] { return validate(module, config_.gate, closure.scc_member_names()); },
        &out.attempts);
    {
      std::lock_guard lock(io_mu_);
      persist_report(report, reports);
      apply_promotion(report, module.text, config_.output_root / "validated");
    }
    out.status = report.promoted ? BlockStatus::Validated : BlockStatus::Failed;
    if (!report.promoted) {
      const StageResult& failed = report.stage_parse.status == StageStatus::Fail     ? report.stage_parse
                                  : report.stage_compile.status == StageStatus::Fail ? report.stage_compile
                                                                                     : report.stage_execute;
      out.error = failed.message;
    }
    out.module = std::move(module);
    out.report = std::move(report);
  } catch (const Error& e) {
    out.error = e.what();
    out.status = e.code() == ErrorCode::BlockNotFound        ? BlockStatus::NotFound
                 : e.code() == ErrorCode::AmbiguousBlockName ? BlockStatus::Ambiguous
                                                             : BlockStatus::ExtractionError;
    if (e.code() == ErrorCode::InterpreterMissing) throw;
  }
  if (out.attempts == 0) out.attempts = 1;
  out.extract_ms = ms_since(t0);
  return out;
}

BlockOutcome Orchestrator::extract_single_block(const std::string& request) {
  view();
  discover();
  BlockOutcome out = attempt_block(request);
  emit_progress(out.block_name.empty() ? request + " " + std::string(to_string(out.status))
                                       : out.block_name + " " + std::string(to_string(out.status)) + " " + out.bucket());
  return out;
}

RunSummary Orchestrator::extract_batch(const std::vector<std::string>& names, std::optional<std::size_t> limit,
                                       std::size_t restart_from) {
  view();
  discover();
  std::vector<std::string> todo;
  std::set<std::string> seen;
  for (std::size_t i = restart_from; i < names.size(); ++i) {
    if (limit && todo.size() >= *limit) break;
    if (seen.insert(names[i]).second) todo.push_back(names[i]);
  }
  RunSummary summary;
  summary.outcomes.resize(todo.size());
  std::atomic<std::size_t> next{0}, done{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < todo.size();) {
      try {
        summary.outcomes[i] = attempt_block(todo[i]);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        next = todo.size();
        return;
      }
      const BlockOutcome& o = summary.outcomes[i];
      std::ostringstream line;
      line << "[" << ++done << "/" << todo.size() << "] " << (o.block_name.empty() ? o.requested : o.block_name) << " "
           << to_string(o.status) << " " << o.bucket() << " " << o.extract_ms << "ms";
      emit_progress(line.str());
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(config_.worker_count), todo.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  if (threads > 0) work();
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  summary.targeted = todo.size();
  std::int64_t total_ms = 0;
  for (const auto& o : summary.outcomes) {
    if (o.module) {
      ++summary.extracted;
      summary.total_generated_lines += count_lines(o.module->text);
    }
    if (o.status == BlockStatus::Validated) ++summary.validated;
    else ++summary.per_failure_class[o.bucket()];
    total_ms += o.extract_ms;
  }
  if (summary.targeted > 0) {
    summary.pass_rate = static_cast<double>(summary.validated) / static_cast<double>(summary.targeted);
    std::tie(summary.wilson_low, summary.wilson_high) = wilson_interval(summary.validated, summary.targeted, 0.95);
    summary.mean_extract_ms = static_cast<double>(total_ms) / static_cast<double>(summary.targeted);
  }
  summary.cache_hit_rate = warm_.cache_hit_rate;
  return summary;
}

}  // namespace blockforge
