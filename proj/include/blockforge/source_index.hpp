#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blockforge/repo_cache.hpp"

struct sqlite3;

namespace blockforge {

enum class ParseStatus { Parsed, SyntaxError };
enum class SymbolKind { Class, Function, Constant, Alias };
enum class ImportForm { Plain, FromImport };
// Where a top-level import sits: directly in the module, inside a try
// statement (emitted as the whole try), under `if TYPE_CHECKING`, or under
// another module-level conditional.
enum class ImportGuard { None, Try, TypeChecking, Conditional };
enum class IndexPolicy { Missing, Force };

std::string_view to_string(ParseStatus s);
std::string_view to_string(SymbolKind k);
std::string_view to_string(ImportForm f);
std::string_view to_string(ImportGuard g);
IndexPolicy parse_index_policy(std::string_view s);  // throws Error{ConfigError}

struct Span {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  bool operator==(const Span&) const = default;
};

struct FileRecord {
  std::string repo_name;
  std::string rel_path;
  std::string module;  // dotted module path inside the repo
  bool is_package = false;  // an __init__.py
  std::string content_sha1;
  std::uint64_t size_bytes = 0;
  ParseStatus parse_status = ParseStatus::Parsed;
  std::string parse_message;
  std::int64_t indexed_at = 0;  // unix ms

  bool operator==(const FileRecord&) const = default;
};

struct SymbolRecord {
  std::string fq_name;  // module + "." + name
  std::string name;
  SymbolKind kind = SymbolKind::Class;
  std::string repo_name;
  std::string rel_path;
  std::string module;
  std::string file_sha1;
  Span span;
  std::uint32_t line = 0;
  std::vector<std::string> decorators;  // source text without '@'
  std::vector<std::string> bases;       // positional base expressions as written
  std::string metaclass;                // `metaclass=` keyword text, if any
  bool dynamic = false;  // computed constant, or a base the resolver cannot follow
  std::uint32_t shadow_count = 0;
  std::string value_text;  // constants and aliases: right-hand side

  bool operator==(const SymbolRecord&) const = default;
};

struct ImportRecord {
  std::string importer_module;
  std::string repo_name;
  std::string rel_path;
  ImportForm form = ImportForm::Plain;
  std::string source_module;  // as written, without leading dots
  std::uint32_t relative_level = 0;
  std::vector<std::pair<std::string, std::string>> bindings;  // (imported, alias or "")
  std::string statement_text;
  Span span;
  ImportGuard guard = ImportGuard::None;
  std::string guard_text;  // the enclosing try statement for ImportGuard::Try
  std::uint32_t ordinal = 0;  // position among the file's imports

  // Names this import binds in the importing module.
  std::vector<std::string> local_names() const;
  bool is_star() const { return form == ImportForm::FromImport && !bindings.empty() && bindings[0].first == "*"; }
  bool is_future() const { return form == ImportForm::FromImport && source_module == "__future__"; }
  // Text the emitter writes for this import.
  const std::string& emit_text() const { return guard == ImportGuard::Try ? guard_text : statement_text; }

  bool operator==(const ImportRecord&) const = default;
};

struct FileAnalysis {
  FileRecord file;
  std::vector<SymbolRecord> symbols;
  std::vector<ImportRecord> imports;

  bool operator==(const FileAnalysis&) const = default;
};

// "models/resnet.py" -> "models.resnet"; "pkg/__init__.py" -> "pkg".
std::string module_name_for(std::string_view rel_path);

// Parses one file and extracts its records. Pure apart from bumping the
// global parse counter.
FileAnalysis analyze_source(const std::string& repo, const std::string& rel_path, std::string_view bytes);

// Number of analyze_source calls since process start.
std::uint64_t parse_counter() noexcept;

struct AnalysisInput {
  std::string repo;
  std::string rel_path;
  std::string_view bytes;
};

// Batch kernels; results are in input order, identical between the two.
std::vector<FileAnalysis> analyze_sources_serial(const std::vector<AnalysisInput>& inputs);
std::vector<FileAnalysis> analyze_sources_parallel(const std::vector<AnalysisInput>& inputs, int workers);

struct RepoRow {
  std::string name;
  int priority = 1;
  std::string url;
  std::string head_commit;
};

class IndexView;

// Persistent content-addressed index (SQLite, WAL journaling). Safe to
// share between threads; writes are serialized internally.
class IndexStore {
 public:
  static constexpr int kSchemaVersion = 4;

  explicit IndexStore(const std::filesystem::path& path);
  ~IndexStore();
  IndexStore(const IndexStore&) = delete;
  IndexStore& operator=(const IndexStore&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  bool rebuilt_on_open() const noexcept { return rebuilt_; }

  void upsert_repo(const RepoRow& repo);
  std::optional<FileRecord> find_file(const std::string& repo, const std::string& rel_path) const;
  std::map<std::string, std::string> file_digests(const std::string& repo) const;  // rel_path -> sha1

  // Replaces every record of the analyzed files in one transaction.
  void replace_files(const std::vector<FileAnalysis>& analyses, const std::vector<std::string_view>& contents);
  // Drops files of `repo` whose paths are not in `keep`.
  std::size_t prune(const std::string& repo, const std::vector<std::string>& keep);

  IndexView snapshot() const;

 private:
  void exec(const char* sql) const;
  void create_schema();

  std::filesystem::path path_;
  sqlite3* db_ = nullptr;
  mutable std::mutex mu_;
  bool rebuilt_ = false;
};

struct IndexOutcome {
  FileRecord record;
  bool parsed = false;
};

IndexOutcome index_file(IndexStore& store, const std::string& repo, const std::string& rel_path,
                        std::string_view bytes, IndexPolicy policy);

struct IndexStats {
  std::size_t files = 0;
  std::size_t parsed = 0;  // files actually re-parsed
  std::size_t reused = 0;  // unchanged digests under Missing
  std::size_t parse_failures = 0;
  std::size_t pruned = 0;
};

// Indexes a repo snapshot: digest check per file, parallel analysis of the
// changed ones, one batched commit.
IndexStats index_files(IndexStore& store, const std::string& repo, const std::vector<SourceFile>& files,
                       IndexPolicy policy, int workers);

// In-memory snapshot of the store used by discovery, resolution and emission.
class IndexView {
 public:
  IndexView() = default;

  const std::vector<FileRecord>& files() const noexcept { return files_; }
  const std::vector<SymbolRecord>& symbols() const noexcept { return symbols_; }
  const std::vector<ImportRecord>& imports() const noexcept { return imports_; }

  int priority(const std::string& repo) const;
  const RepoRow* repo(const std::string& name) const;
  const std::vector<RepoRow>& repos() const noexcept { return repos_; }

  const FileRecord* file(const std::string& repo, const std::string& rel_path) const;
  const FileRecord* module_file(const std::string& repo, const std::string& module) const;
  bool has_module(const std::string& repo, const std::string& module) const { return module_file(repo, module); }
  std::string_view content(const std::string& repo, const std::string& rel_path) const;
  std::string_view slice(const SymbolRecord& s) const;

  const SymbolRecord* symbol(const std::string& repo, const std::string& fq_name) const;
  // Module-level definitions of a module, in file order.
  std::vector<const SymbolRecord*> module_symbols(const std::string& repo, const std::string& module) const;
  std::vector<const ImportRecord*> module_imports(const std::string& repo, const std::string& module) const;
  // Corpus symbols whose terminal name equals `name`.
  const std::vector<std::size_t>& by_name(const std::string& name) const;

  // Adds records directly (tests and in-memory pipelines).
  void add(FileAnalysis analysis, std::string content);
  void add_repo(RepoRow repo);
  void finalize();

 private:
  friend class IndexStore;
  static std::string key(const std::string& a, const std::string& b) { return a + '\x1f' + b; }

  std::vector<RepoRow> repos_;
  std::vector<FileRecord> files_;
  std::vector<SymbolRecord> symbols_;
  std::vector<ImportRecord> imports_;
  std::unordered_map<std::string, std::string> contents_;  // key(repo, rel_path)
  std::unordered_map<std::string, std::size_t> file_by_path_, file_by_module_, symbol_by_fq_;
  std::unordered_map<std::string, std::vector<std::size_t>> symbols_by_module_, imports_by_module_, by_name_;
};

// Exact matches on fq_name (or "repo:fq_name") first, then suffix matches
// on a dotted boundary; each tier ordered by (repo priority, fq_name, repo).
std::vector<SymbolRecord> lookup_symbol(const IndexView& view, const std::string& name);

}  // namespace blockforge
