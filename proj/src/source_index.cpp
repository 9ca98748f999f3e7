#include "blockforge/source_index.hpp"

#include <omp.h>
#include <sqlite3.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <nlohmann/json.hpp>

#include "blockforge/error.hpp"
#include "blockforge/hashing.hpp"
#include "blockforge/python/parser.hpp"

namespace blockforge {
namespace py = python;
using json = nlohmann::json;

namespace {

std::atomic<std::uint64_t> g_parses{0};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool is_literal(const py::Node& n) {
  switch (n.kind) {
    case py::NodeKind::Constant:
      return true;
    case py::NodeKind::Tuple:
    case py::NodeKind::List:
    case py::NodeKind::Set:
    case py::NodeKind::UnaryOp:
    case py::NodeKind::BinOp:
      return std::all_of(n.kids.begin(), n.kids.end(), [](const py::NodePtr& k) { return is_literal(*k); });
    case py::NodeKind::Dict:
      return std::all_of(n.kids.begin(), n.kids.end(), [](const py::NodePtr& k) { return is_literal(*k); });
    default:
      return false;  // an Empty dict key (**spread) lands here too
  }
}

class Extractor {
 public:
  Extractor(FileAnalysis& out, std::string_view src) : out_(out), src_(src) {
    line_starts_.push_back(0);
    for (std::uint32_t i = 0; i < src.size(); ++i)
      if (src[i] == '\n') line_starts_.push_back(i + 1);
  }

  void run(const py::Node& module) {
    for (const auto& stmt : module.kids) {
      definition(*stmt);
      imports(*stmt, ImportGuard::None, nullptr);
    }
    for (auto& s : symbols_) out_.symbols.push_back(std::move(s));
    std::sort(out_.symbols.begin(), out_.symbols.end(), [](const SymbolRecord& a, const SymbolRecord& b) {
      return std::tie(a.span.start, a.name) < std::tie(b.span.start, b.name);
    });
  }

 private:
  std::string text(const py::Node& n) const { return std::string(src_.substr(n.begin, n.end - n.begin)); }
  std::uint32_t line_of(std::uint32_t off) const {
    return static_cast<std::uint32_t>(std::upper_bound(line_starts_.begin(), line_starts_.end(), off) -
                                      line_starts_.begin());
  }

  SymbolRecord base_record(const std::string& name, SymbolKind kind, const py::Node& stmt) const {
    SymbolRecord s;
    s.name = name;
    s.fq_name = out_.file.module.empty() ? name : out_.file.module + "." + name;
    s.kind = kind;
    s.repo_name = out_.file.repo_name;
    s.rel_path = out_.file.rel_path;
    s.module = out_.file.module;
    s.file_sha1 = out_.file.content_sha1;
    s.span = Span{stmt.begin, stmt.end};
    s.line = line_of(stmt.begin);
    return s;
  }

  void add(SymbolRecord s) {
    auto it = std::find_if(symbols_.begin(), symbols_.end(), [&](const SymbolRecord& o) { return o.name == s.name; });
    if (it != symbols_.end()) {
      s.shadow_count = it->shadow_count + 1;
      symbols_.erase(it);
    }
    symbols_.push_back(std::move(s));
  }

  void definition(const py::Node& stmt) {
    switch (stmt.kind) {
      case py::NodeKind::ClassDef: {
        SymbolRecord s = base_record(stmt.value, SymbolKind::Class, stmt);
        for (const auto& d : stmt.kid(0).kids) s.decorators.push_back(text(*d));
        for (const auto& a : stmt.kid(1).kids) {
          if (a->kind == py::NodeKind::Keyword) {
            if (a->value == "metaclass") s.metaclass = text(a->kid(0));
            continue;
          }
          if (a->kind == py::NodeKind::Starred || a->kind == py::NodeKind::DoubleStarred ||
              py::dotted_name(*a).empty())
            s.dynamic = true;
          s.bases.push_back(text(*a));
        }
        add(std::move(s));
        break;
      }
      case py::NodeKind::FunctionDef: {
        SymbolRecord s = base_record(stmt.value, SymbolKind::Function, stmt);
        for (const auto& d : stmt.kid(0).kids) s.decorators.push_back(text(*d));
        add(std::move(s));
        break;
      }
      case py::NodeKind::Assign: {
        const py::Node& value = *stmt.kids.back();
        for (std::size_t i = 0; i + 1 < stmt.kids.size(); ++i) assignment(stmt, *stmt.kids[i], value, false);
        break;
      }
      case py::NodeKind::AnnAssign:
        if (stmt.kids.size() == 3) assignment(stmt, stmt.kid(0), stmt.kid(2), false);
        break;
      default:
        break;
    }
  }

  void assignment(const py::Node& stmt, const py::Node& target, const py::Node& value, bool unpacked) {
    if (target.kind == py::NodeKind::Name) {
      bool alias = !unpacked && !py::dotted_name(value).empty();
      SymbolRecord s = base_record(target.value, alias ? SymbolKind::Alias : SymbolKind::Constant, stmt);
      s.dynamic = unpacked || (!alias && !is_literal(value));
      s.value_text = text(value);
      add(std::move(s));
    } else if (target.kind == py::NodeKind::Tuple || target.kind == py::NodeKind::List) {
      for (const auto& k : target.kids) assignment(stmt, *k, value, true);
    } else if (target.kind == py::NodeKind::Starred) {
      assignment(stmt, target.kid(0), value, true);
    }
  }

  static bool type_checking_test(const py::Node& test) {
    std::string d = py::dotted_name(test);
    return d == "TYPE_CHECKING" || d == "typing.TYPE_CHECKING";
  }

  void imports(const py::Node& stmt, ImportGuard guard, const py::Node* try_stmt) {
    switch (stmt.kind) {
      case py::NodeKind::Import:
        for (const auto& a : stmt.kids) {
          ImportRecord r = base_import(stmt, ImportForm::Plain, guard, try_stmt);
          r.source_module = a->value;
          r.bindings.emplace_back(a->value, a->extra);
          out_.imports.push_back(std::move(r));
        }
        break;
      case py::NodeKind::ImportFrom: {
        ImportRecord r = base_import(stmt, ImportForm::FromImport, guard, try_stmt);
        r.source_module = stmt.value;
        r.relative_level = stmt.flags;
        for (const auto& a : stmt.kids) r.bindings.emplace_back(a->value, a->extra);
        out_.imports.push_back(std::move(r));
        break;
      }
      case py::NodeKind::Try: {
        const py::Node* outer = try_stmt ? try_stmt : &stmt;
        for (const auto& k : stmt.kids) {
          if (k->empty()) continue;
          if (k->kind == py::NodeKind::ExceptHandler) {
            suite_imports(k->kid(1), ImportGuard::Try, outer);
          } else {
            suite_imports(*k, ImportGuard::Try, outer);
          }
        }
        break;
      }
      case py::NodeKind::If: {
        ImportGuard g = try_stmt                            ? ImportGuard::Try
                        : guard != ImportGuard::None        ? guard
                        : type_checking_test(stmt.kid(0))   ? ImportGuard::TypeChecking
                                                            : ImportGuard::Conditional;
        suite_imports(stmt.kid(1), g, try_stmt);
        if (!stmt.kid(2).empty()) {
          ImportGuard else_g = g == ImportGuard::TypeChecking ? ImportGuard::Conditional : g;
          suite_imports(stmt.kid(2), else_g, try_stmt);
        }
        break;
      }
      default:
        break;
    }
  }

  void suite_imports(const py::Node& suite, ImportGuard guard, const py::Node* try_stmt) {
    if (suite.kind == py::NodeKind::Suite) {
      for (const auto& s : suite.kids) imports(*s, guard, try_stmt);
    } else {
      imports(suite, guard, try_stmt);
    }
  }

  ImportRecord base_import(const py::Node& stmt, ImportForm form, ImportGuard guard, const py::Node* try_stmt) {
    ImportRecord r;
    r.importer_module = out_.file.module;
    r.repo_name = out_.file.repo_name;
    r.rel_path = out_.file.rel_path;
    r.form = form;
    r.statement_text = text(stmt);
    r.span = Span{stmt.begin, stmt.end};
    r.guard = guard;
    if (try_stmt) r.guard_text = text(*try_stmt);
    r.ordinal = static_cast<std::uint32_t>(out_.imports.size());
    return r;
  }

  FileAnalysis& out_;
  std::string_view src_;
  std::vector<std::uint32_t> line_starts_;
  std::vector<SymbolRecord> symbols_;
};

// ---- sqlite helpers ---------------------------------------------------------

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &st_, nullptr) != SQLITE_OK)
      throw Error(ErrorCode::StoreError, std::string(sqlite3_errmsg(db)) + " in: " + sql);
  }
  ~Stmt() { sqlite3_finalize(st_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, std::string_view s) {
    sqlite3_bind_text(st_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind_blob(int i, std::string_view s) {
    sqlite3_bind_blob(st_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(st_, i, v);
    return *this;
  }
  bool step() {
    int rc = sqlite3_step(st_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(ErrorCode::StoreError, sqlite3_errmsg(db_));
  }
  void run() {
    step();
    sqlite3_reset(st_);
    sqlite3_clear_bindings(st_);
  }
  void reset() {
    sqlite3_reset(st_);
    sqlite3_clear_bindings(st_);
  }
  std::int64_t i64(int c) const { return sqlite3_column_int64(st_, c); }
  std::string str(int c) const {
    auto p = reinterpret_cast<const char*>(sqlite3_column_blob(st_, c));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(st_, c))) : std::string();
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* st_ = nullptr;
};

FileRecord read_file_row(const Stmt& q, int c) {
  FileRecord f;
  f.repo_name = q.str(c);
  f.rel_path = q.str(c + 1);
  f.module = q.str(c + 2);
  f.is_package = q.i64(c + 3) != 0;
  f.content_sha1 = q.str(c + 4);
  f.size_bytes = static_cast<std::uint64_t>(q.i64(c + 5));
  f.parse_status = static_cast<ParseStatus>(q.i64(c + 6));
  f.parse_message = q.str(c + 7);
  f.indexed_at = q.i64(c + 8);
  return f;
}

constexpr const char* kFileColumns = "repo, rel_path, module, is_package, sha1, size, status, message, indexed_at";

}  // namespace

// ---- strings ----------------------------------------------------------------

std::string_view to_string(ParseStatus s) { return s == ParseStatus::Parsed ? "Parsed" : "SyntaxError"; }

std::string_view to_string(SymbolKind k) {
  switch (k) {
    case SymbolKind::Class: return "Class";
    case SymbolKind::Function: return "Function";
    case SymbolKind::Constant: return "Constant";
    case SymbolKind::Alias: return "Alias";
  }
  return "?";
}

std::string_view to_string(ImportForm f) { return f == ImportForm::Plain ? "Plain" : "FromImport"; }

std::string_view to_string(ImportGuard g) {
  switch (g) {
    case ImportGuard::None: return "None";
    case ImportGuard::Try: return "Try";
    case ImportGuard::TypeChecking: return "TypeChecking";
    case ImportGuard::Conditional: return "Conditional";
  }
  return "?";
}

IndexPolicy parse_index_policy(std::string_view s) {
  if (s == "missing") return IndexPolicy::Missing;
  if (s == "force") return IndexPolicy::Force;
  throw Error(ErrorCode::ConfigError, "index policy must be missing or force, got '" + std::string(s) + "'");
}

std::vector<std::string> ImportRecord::local_names() const {
  std::vector<std::string> out;
  for (const auto& [name, alias] : bindings) {
    if (name == "*") continue;
    if (!alias.empty()) {
      out.push_back(alias);
    } else if (form == ImportForm::Plain) {
      out.push_back(name.substr(0, name.find('.')));
    } else {
      out.push_back(name);
    }
  }
  return out;
}

std::string module_name_for(std::string_view rel_path) {
  std::string m(rel_path);
  if (m.size() >= 3 && m.compare(m.size() - 3, 3, ".py") == 0) m.resize(m.size() - 3);
  if (m == "__init__") return "";
  if (m.size() > 9 && m.compare(m.size() - 9, 9, "/__init__") == 0) m.resize(m.size() - 9);
  std::replace(m.begin(), m.end(), '/', '.');
  return m;
}

// ---- analysis ---------------------------------------------------------------

FileAnalysis analyze_source(const std::string& repo, const std::string& rel_path, std::string_view bytes) {
  g_parses.fetch_add(1, std::memory_order_relaxed);
  FileAnalysis a;
  a.file.repo_name = repo;
  a.file.rel_path = rel_path;
  a.file.module = module_name_for(rel_path);
  a.file.is_package = rel_path == "__init__.py" ||
                      (rel_path.size() >= 12 && rel_path.compare(rel_path.size() - 12, 12, "/__init__.py") == 0);
  a.file.content_sha1 = sha1_hex(bytes);
  a.file.size_bytes = bytes.size();
  try {
    py::NodePtr mod = py::parse_module(bytes);
    Extractor(a, bytes).run(*mod);
  } catch (const py::SyntaxError& e) {
    a.file.parse_status = ParseStatus::SyntaxError;
    a.file.parse_message = e.what();
    a.symbols.clear();
    a.imports.clear();
  } catch (const std::exception& e) {
    a.file.parse_status = ParseStatus::SyntaxError;
    a.file.parse_message = std::string("parser failure: ") + e.what();
    a.symbols.clear();
    a.imports.clear();
  }
  return a;
}

std::uint64_t parse_counter() noexcept { return g_parses.load(std::memory_order_relaxed); }

std::vector<FileAnalysis> analyze_sources_serial(const std::vector<AnalysisInput>& inputs) {
  std::vector<FileAnalysis> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(analyze_source(in.repo, in.rel_path, in.bytes));
  return out;
}

std::vector<FileAnalysis> analyze_sources_parallel(const std::vector<AnalysisInput>& inputs, int workers) {
  std::vector<FileAnalysis> out(inputs.size());
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic, 2) num_threads(std::max(1, workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& in = inputs[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = analyze_source(in.repo, in.rel_path, in.bytes);
  }
  return out;
}

// ---- store ------------------------------------------------------------------

IndexStore::IndexStore(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(ErrorCode::StoreError, "cannot open " + path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 30'000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=NORMAL");
  exec("PRAGMA foreign_keys=ON");
  int version = 0;
  bool has_tables = false;
  {
    Stmt q(db_, "PRAGMA user_version");
    if (q.step()) version = static_cast<int>(q.i64(0));
    Stmt t(db_, "SELECT count(*) FROM sqlite_master WHERE type='table'");
    if (t.step()) has_tables = t.i64(0) > 0;
  }
  if (version != kSchemaVersion) {
    if (has_tables) {
      rebuilt_ = true;
      exec("PRAGMA foreign_keys=OFF");
      exec("DROP TABLE IF EXISTS constants; DROP TABLE IF EXISTS imports; DROP TABLE IF EXISTS symbols;"
           "DROP TABLE IF EXISTS files; DROP TABLE IF EXISTS repos;");
      exec("PRAGMA foreign_keys=ON");
    }
    create_schema();
  }
}

IndexStore::~IndexStore() { sqlite3_close(db_); }

void IndexStore::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::StoreError, msg);
  }
}

void IndexStore::create_schema() {
  exec(R"sql(
    BEGIN;
    CREATE TABLE repos (
      name TEXT PRIMARY KEY,
      priority INTEGER NOT NULL,
      url TEXT NOT NULL,
      head_commit TEXT NOT NULL
    );
    CREATE TABLE files (
      id INTEGER PRIMARY KEY,
      repo TEXT NOT NULL,
      rel_path TEXT NOT NULL,
      module TEXT NOT NULL,
      is_package INTEGER NOT NULL,
      sha1 TEXT NOT NULL,
      size INTEGER NOT NULL,
      status INTEGER NOT NULL,
      message TEXT NOT NULL,
      indexed_at INTEGER NOT NULL,
      content BLOB NOT NULL,
      UNIQUE (repo, rel_path)
    );
    CREATE INDEX files_sha1 ON files (sha1);
    CREATE TABLE symbols (
      id INTEGER PRIMARY KEY,
      file_id INTEGER NOT NULL REFERENCES files (id) ON DELETE CASCADE,
      repo TEXT NOT NULL,
      fq_name TEXT NOT NULL,
      name TEXT NOT NULL,
      kind INTEGER NOT NULL,
      span_start INTEGER NOT NULL,
      span_end INTEGER NOT NULL,
      line INTEGER NOT NULL,
      decorators TEXT NOT NULL,
      bases TEXT NOT NULL,
      metaclass TEXT NOT NULL,
      dynamic INTEGER NOT NULL,
      shadow_count INTEGER NOT NULL,
      UNIQUE (repo, fq_name)
    );
    CREATE INDEX symbols_name ON symbols (name);
    CREATE TABLE constants (
      symbol_id INTEGER PRIMARY KEY REFERENCES symbols (id) ON DELETE CASCADE,
      value_text TEXT NOT NULL,
      literal INTEGER NOT NULL
    );
    CREATE TABLE imports (
      id INTEGER PRIMARY KEY,
      file_id INTEGER NOT NULL REFERENCES files (id) ON DELETE CASCADE,
      ordinal INTEGER NOT NULL,
      form INTEGER NOT NULL,
      source_module TEXT NOT NULL,
      relative_level INTEGER NOT NULL,
      bindings TEXT NOT NULL,
      statement_text TEXT NOT NULL,
      span_start INTEGER NOT NULL,
      span_end INTEGER NOT NULL,
      guard INTEGER NOT NULL,
      guard_text TEXT NOT NULL
    );
    COMMIT;
  )sql");
  exec(("PRAGMA user_version=" + std::to_string(kSchemaVersion)).c_str());
}

void IndexStore::upsert_repo(const RepoRow& repo) {
  std::lock_guard lock(mu_);
  Stmt q(db_,
         "INSERT INTO repos (name, priority, url, head_commit) VALUES (?1, ?2, ?3, ?4) "
         "ON CONFLICT (name) DO UPDATE SET priority=?2, url=?3, head_commit=?4");
  q.bind(1, repo.name).bind(2, std::int64_t{repo.priority}).bind(3, repo.url).bind(4, repo.head_commit).run();
}

std::optional<FileRecord> IndexStore::find_file(const std::string& repo, const std::string& rel_path) const {
  std::lock_guard lock(mu_);
  std::string sql = std::string("SELECT ") + kFileColumns + " FROM files WHERE repo=?1 AND rel_path=?2";
  Stmt q(db_, sql.c_str());
  q.bind(1, repo).bind(2, rel_path);
  if (!q.step()) return std::nullopt;
  return read_file_row(q, 0);
}

std::map<std::string, std::string> IndexStore::file_digests(const std::string& repo) const {
  std::lock_guard lock(mu_);
  Stmt q(db_, "SELECT rel_path, sha1 FROM files WHERE repo=?1");
  q.bind(1, repo);
  std::map<std::string, std::string> out;
  while (q.step()) out.emplace(q.str(0), q.str(1));
  return out;
}

void IndexStore::replace_files(const std::vector<FileAnalysis>& analyses, const std::vector<std::string_view>& contents) {
  if (analyses.size() != contents.size()) throw Error(ErrorCode::StoreError, "analysis/content count mismatch");
  if (analyses.empty()) return;
  std::lock_guard lock(mu_);
  exec("BEGIN IMMEDIATE");
  try {
    Stmt del(db_, "DELETE FROM files WHERE repo=?1 AND rel_path=?2");
    Stmt ins_file(db_,
                  "INSERT INTO files (repo, rel_path, module, is_package, sha1, size, status, message, indexed_at, "
                  "content) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)");
    Stmt ins_sym(db_,
                 "INSERT OR REPLACE INTO symbols (file_id, repo, fq_name, name, kind, span_start, span_end, line, "
                 "decorators, bases, metaclass, dynamic, shadow_count) "
                 "VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)");
    Stmt ins_const(db_, "INSERT INTO constants (symbol_id, value_text, literal) VALUES (?1, ?2, ?3)");
    Stmt ins_imp(db_,
                 "INSERT INTO imports (file_id, ordinal, form, source_module, relative_level, bindings, "
                 "statement_text, span_start, span_end, guard, guard_text) "
                 "VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)");
    std::int64_t stamp = now_ms();
    for (std::size_t i = 0; i < analyses.size(); ++i) {
      const FileAnalysis& a = analyses[i];
      const FileRecord& f = a.file;
      del.bind(1, f.repo_name).bind(2, f.rel_path).run();
      ins_file.bind(1, f.repo_name)
          .bind(2, f.rel_path)
          .bind(3, f.module)
          .bind(4, std::int64_t{f.is_package})
          .bind(5, f.content_sha1)
          .bind(6, static_cast<std::int64_t>(f.size_bytes))
          .bind(7, static_cast<std::int64_t>(f.parse_status))
          .bind(8, f.parse_message)
          .bind(9, stamp)
          .bind_blob(10, contents[i])
          .run();
      std::int64_t file_id = sqlite3_last_insert_rowid(db_);
      for (const SymbolRecord& s : a.symbols) {
        ins_sym.bind(1, file_id)
            .bind(2, s.repo_name)
            .bind(3, s.fq_name)
            .bind(4, s.name)
            .bind(5, static_cast<std::int64_t>(s.kind))
            .bind(6, std::int64_t{s.span.start})
            .bind(7, std::int64_t{s.span.end})
            .bind(8, std::int64_t{s.line})
            .bind(9, json(s.decorators).dump())
            .bind(10, json(s.bases).dump())
            .bind(11, s.metaclass)
            .bind(12, std::int64_t{s.dynamic})
            .bind(13, std::int64_t{s.shadow_count})
            .run();
        if (s.kind == SymbolKind::Constant || s.kind == SymbolKind::Alias) {
          ins_const.bind(1, sqlite3_last_insert_rowid(db_)).bind(2, s.value_text).bind(3, std::int64_t{!s.dynamic}).run();
        }
      }
      for (const ImportRecord& r : a.imports) {
        ins_imp.bind(1, file_id)
            .bind(2, std::int64_t{r.ordinal})
            .bind(3, static_cast<std::int64_t>(r.form))
            .bind(4, r.source_module)
            .bind(5, std::int64_t{r.relative_level})
            .bind(6, json(r.bindings).dump())
            .bind(7, r.statement_text)
            .bind(8, std::int64_t{r.span.start})
            .bind(9, std::int64_t{r.span.end})
            .bind(10, static_cast<std::int64_t>(r.guard))
            .bind(11, r.guard_text)
            .run();
      }
    }
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
}

std::size_t IndexStore::prune(const std::string& repo, const std::vector<std::string>& keep) {
  std::vector<std::string> doomed;
  for (const auto& [rel, digest] : file_digests(repo))
    if (!std::binary_search(keep.begin(), keep.end(), rel)) doomed.push_back(rel);
  if (doomed.empty()) return 0;
  std::lock_guard lock(mu_);
  exec("BEGIN IMMEDIATE");
  Stmt del(db_, "DELETE FROM files WHERE repo=?1 AND rel_path=?2");
  for (const auto& rel : doomed) del.bind(1, repo).bind(2, rel).run();
  exec("COMMIT");
  return doomed.size();
}

IndexView IndexStore::snapshot() const {
  std::lock_guard lock(mu_);
  IndexView view;
  {
    Stmt q(db_, "SELECT name, priority, url, head_commit FROM repos ORDER BY name");
    while (q.step()) view.repos_.push_back(RepoRow{q.str(0), static_cast<int>(q.i64(1)), q.str(2), q.str(3)});
  }
  std::unordered_map<std::int64_t, std::size_t> file_index;
  {
    std::string sql = std::string("SELECT id, ") + kFileColumns + ", content FROM files ORDER BY repo, rel_path";
    Stmt q(db_, sql.c_str());
    while (q.step()) {
      file_index[q.i64(0)] = view.files_.size();
      FileRecord f = read_file_row(q, 1);
      view.contents_[IndexView::key(f.repo_name, f.rel_path)] = q.str(10);
      view.files_.push_back(std::move(f));
    }
  }
  {
    Stmt q(db_,
           "SELECT s.file_id, s.fq_name, s.name, s.kind, s.span_start, s.span_end, s.line, s.decorators, s.bases, "
           "s.metaclass, s.dynamic, s.shadow_count, coalesce(c.value_text, '') FROM symbols s "
           "JOIN files f ON f.id = s.file_id LEFT JOIN constants c ON c.symbol_id = s.id "
           "ORDER BY f.repo, f.rel_path, s.span_start, s.name");
    while (q.step()) {
      const FileRecord& f = view.files_[file_index.at(q.i64(0))];
      SymbolRecord s;
      s.fq_name = q.str(1);
      s.name = q.str(2);
      s.kind = static_cast<SymbolKind>(q.i64(3));
      s.repo_name = f.repo_name;
      s.rel_path = f.rel_path;
      s.module = f.module;
      s.file_sha1 = f.content_sha1;
      s.span = Span{static_cast<std::uint32_t>(q.i64(4)), static_cast<std::uint32_t>(q.i64(5))};
      s.line = static_cast<std::uint32_t>(q.i64(6));
      s.decorators = json::parse(q.str(7)).get<std::vector<std::string>>();
      s.bases = json::parse(q.str(8)).get<std::vector<std::string>>();
      s.metaclass = q.str(9);
      s.dynamic = q.i64(10) != 0;
      s.shadow_count = static_cast<std::uint32_t>(q.i64(11));
      s.value_text = q.str(12);
      view.symbols_.push_back(std::move(s));
    }
  }
  {
    Stmt q(db_,
           "SELECT i.file_id, i.ordinal, i.form, i.source_module, i.relative_level, i.bindings, i.statement_text, "
           "i.span_start, i.span_end, i.guard, i.guard_text FROM imports i JOIN files f ON f.id = i.file_id "
           "ORDER BY f.repo, f.rel_path, i.ordinal");
    while (q.step()) {
      const FileRecord& f = view.files_[file_index.at(q.i64(0))];
      ImportRecord r;
      r.importer_module = f.module;
      r.repo_name = f.repo_name;
      r.rel_path = f.rel_path;
      r.ordinal = static_cast<std::uint32_t>(q.i64(1));
      r.form = static_cast<ImportForm>(q.i64(2));
      r.source_module = q.str(3);
      r.relative_level = static_cast<std::uint32_t>(q.i64(4));
      r.bindings = json::parse(q.str(5)).get<std::vector<std::pair<std::string, std::string>>>();
      r.statement_text = q.str(6);
      r.span = Span{static_cast<std::uint32_t>(q.i64(7)), static_cast<std::uint32_t>(q.i64(8))};
      r.guard = static_cast<ImportGuard>(q.i64(9));
      r.guard_text = q.str(10);
      view.imports_.push_back(std::move(r));
    }
  }
  view.finalize();
  return view;
}

// ---- indexing ---------------------------------------------------------------

IndexOutcome index_file(IndexStore& store, const std::string& repo, const std::string& rel_path,
                        std::string_view bytes, IndexPolicy policy) {
  if (policy == IndexPolicy::Missing) {
    auto existing = store.find_file(repo, rel_path);
    if (existing && existing->content_sha1 == sha1_hex(bytes)) return IndexOutcome{*existing, false};
  }
  FileAnalysis a = analyze_source(repo, rel_path, bytes);
  store.replace_files({a}, {bytes});
  auto rec = store.find_file(repo, rel_path);
  return IndexOutcome{rec ? *rec : a.file, true};
}

IndexStats index_files(IndexStore& store, const std::string& repo, const std::vector<SourceFile>& files,
                       IndexPolicy policy, int workers) {
  IndexStats stats;
  stats.files = files.size();
  auto digests = store.file_digests(repo);
  std::vector<AnalysisInput> todo;
  std::vector<std::string> keep;
  keep.reserve(files.size());
  for (const auto& f : files) {
    keep.push_back(f.rel_path);
    if (policy == IndexPolicy::Missing) {
      auto it = digests.find(f.rel_path);
      if (it != digests.end() && it->second == sha1_hex(f.bytes)) {
        ++stats.reused;
        continue;
      }
    }
    todo.push_back(AnalysisInput{repo, f.rel_path, f.bytes});
  }
  std::vector<FileAnalysis> analyses =
      workers > 1 ? analyze_sources_parallel(todo, workers) : analyze_sources_serial(todo);
  stats.parsed = analyses.size();
  constexpr std::size_t kBatch = 256;
  for (std::size_t b = 0; b < analyses.size(); b += kBatch) {
    std::size_t e = std::min(analyses.size(), b + kBatch);
    std::vector<FileAnalysis> chunk(std::make_move_iterator(analyses.begin() + static_cast<std::ptrdiff_t>(b)),
                                    std::make_move_iterator(analyses.begin() + static_cast<std::ptrdiff_t>(e)));
    std::vector<std::string_view> contents;
    for (std::size_t i = b; i < e; ++i) contents.push_back(todo[i].bytes);
    for (const auto& a : chunk) stats.parse_failures += a.file.parse_status == ParseStatus::SyntaxError;
    store.replace_files(chunk, contents);
  }
  std::sort(keep.begin(), keep.end());
  stats.pruned = store.prune(repo, keep);
  return stats;
}

// ---- view -------------------------------------------------------------------

void IndexView::add(FileAnalysis analysis, std::string content) {
  contents_[key(analysis.file.repo_name, analysis.file.rel_path)] = std::move(content);
  files_.push_back(std::move(analysis.file));
  for (auto& s : analysis.symbols) symbols_.push_back(std::move(s));
  for (auto& i : analysis.imports) imports_.push_back(std::move(i));
}

void IndexView::add_repo(RepoRow repo) {
  auto it = std::find_if(repos_.begin(), repos_.end(), [&](const RepoRow& r) { return r.name == repo.name; });
  if (it != repos_.end()) {
    *it = std::move(repo);
  } else {
    repos_.push_back(std::move(repo));
  }
}

void IndexView::finalize() {
  file_by_path_.clear();
  file_by_module_.clear();
  symbol_by_fq_.clear();
  symbols_by_module_.clear();
  imports_by_module_.clear();
  by_name_.clear();
  for (std::size_t i = 0; i < files_.size(); ++i) {
    file_by_path_[key(files_[i].repo_name, files_[i].rel_path)] = i;
    // a package directory's __init__ wins over a same-named module file
    auto [it, fresh] = file_by_module_.emplace(key(files_[i].repo_name, files_[i].module), i);
    if (!fresh && files_[i].is_package) it->second = i;
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto& s = symbols_[i];
    symbol_by_fq_[key(s.repo_name, s.fq_name)] = i;
    symbols_by_module_[key(s.repo_name, s.module)].push_back(i);
    by_name_[s.name].push_back(i);
  }
  for (std::size_t i = 0; i < imports_.size(); ++i)
    imports_by_module_[key(imports_[i].repo_name, imports_[i].importer_module)].push_back(i);
}

int IndexView::priority(const std::string& repo) const {
  const RepoRow* r = this->repo(repo);
  return r ? r->priority : 2;
}

const RepoRow* IndexView::repo(const std::string& name) const {
  for (const auto& r : repos_)
    if (r.name == name) return &r;
  return nullptr;
}

const FileRecord* IndexView::file(const std::string& repo, const std::string& rel_path) const {
  auto it = file_by_path_.find(key(repo, rel_path));
  return it == file_by_path_.end() ? nullptr : &files_[it->second];
}

const FileRecord* IndexView::module_file(const std::string& repo, const std::string& module) const {
  auto it = file_by_module_.find(key(repo, module));
  return it == file_by_module_.end() ? nullptr : &files_[it->second];
}

std::string_view IndexView::content(const std::string& repo, const std::string& rel_path) const {
  auto it = contents_.find(key(repo, rel_path));
  return it == contents_.end() ? std::string_view() : std::string_view(it->second);
}

std::string_view IndexView::slice(const SymbolRecord& s) const {
  std::string_view c = content(s.repo_name, s.rel_path);
  if (s.span.end > c.size() || s.span.start > s.span.end) return {};
  return c.substr(s.span.start, s.span.end - s.span.start);
}

const SymbolRecord* IndexView::symbol(const std::string& repo, const std::string& fq_name) const {
  auto it = symbol_by_fq_.find(key(repo, fq_name));
  return it == symbol_by_fq_.end() ? nullptr : &symbols_[it->second];
}

std::vector<const SymbolRecord*> IndexView::module_symbols(const std::string& repo, const std::string& module) const {
  std::vector<const SymbolRecord*> out;
  auto it = symbols_by_module_.find(key(repo, module));
  if (it != symbols_by_module_.end())
    for (auto i : it->second) out.push_back(&symbols_[i]);
  return out;
}

std::vector<const ImportRecord*> IndexView::module_imports(const std::string& repo, const std::string& module) const {
  std::vector<const ImportRecord*> out;
  auto it = imports_by_module_.find(key(repo, module));
  if (it != imports_by_module_.end())
    for (auto i : it->second) out.push_back(&imports_[i]);
  return out;
}

const std::vector<std::size_t>& IndexView::by_name(const std::string& name) const {
  static const std::vector<std::size_t> none;
  auto it = by_name_.find(name);
  return it == by_name_.end() ? none : it->second;
}

std::vector<SymbolRecord> lookup_symbol(const IndexView& view, const std::string& name) {
  std::string repo_filter;
  std::string query = name;
  if (auto colon = name.find(':'); colon != std::string::npos) {
    repo_filter = name.substr(0, colon);
    query = name.substr(colon + 1);
  }
  std::vector<std::pair<int, const SymbolRecord*>> hits;
  const std::string suffix = "." + query;
  for (const auto& s : view.symbols()) {
    if (!repo_filter.empty() && s.repo_name != repo_filter) continue;
    if (s.fq_name == query) {
      hits.emplace_back(0, &s);
    } else if (s.fq_name.size() > suffix.size() &&
               s.fq_name.compare(s.fq_name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      hits.emplace_back(1, &s);
    }
  }
  std::sort(hits.begin(), hits.end(), [&](const auto& a, const auto& b) {
    return std::make_tuple(a.first, view.priority(a.second->repo_name), a.second->fq_name, a.second->repo_name) <
           std::make_tuple(b.first, view.priority(b.second->repo_name), b.second->fq_name, b.second->repo_name);
  });
  std::vector<SymbolRecord> out;
  for (const auto& [tier, s] : hits) out.push_back(*s);
  return out;
}

}  // namespace blockforge
