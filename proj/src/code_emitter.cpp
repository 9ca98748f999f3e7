#include "blockforge/code_emitter.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <tuple>
#include <unordered_map>

#include "blockforge/error.hpp"
#include "blockforge/hashing.hpp"
#include "blockforge/import_graph.hpp"

namespace blockforge {
namespace {

// sys.stdlib_module_names of CPython 3.10, sorted bytewise.
constexpr std::array kStdlib = {
    "__future__", "_abc", "_aix_support", "_ast", "_asyncio", "_bisect", "_blake2", "_bootsubprocess", "_bz2",
    "_codecs", "_codecs_cn", "_codecs_hk", "_codecs_iso2022", "_codecs_jp", "_codecs_kr", "_codecs_tw",
    "_collections", "_collections_abc", "_compat_pickle", "_compression", "_contextvars", "_crypt", "_csv",
    "_ctypes", "_curses", "_curses_panel", "_datetime", "_dbm", "_decimal", "_elementtree",
    "_frozen_importlib", "_frozen_importlib_external", "_functools", "_gdbm", "_hashlib", "_heapq", "_imp",
    "_io", "_json", "_locale", "_lsprof", "_lzma", "_markupbase", "_md5", "_msi", "_multibytecodec",
    "_multiprocessing", "_opcode", "_operator", "_osx_support", "_overlapped", "_pickle", "_posixshmem",
    "_posixsubprocess", "_py_abc", "_pydecimal", "_pyio", "_queue", "_random", "_scproxy", "_sha1", "_sha256",
    "_sha3", "_sha512", "_signal", "_sitebuiltins", "_socket", "_sqlite3", "_sre", "_ssl", "_stat",
    "_statistics", "_string", "_strptime", "_struct", "_symtable", "_thread", "_threading_local", "_tkinter",
    "_tracemalloc", "_uuid", "_warnings", "_weakref", "_weakrefset", "_winapi", "_zoneinfo", "abc", "aifc",
    "antigravity", "argparse", "array", "ast", "asynchat", "asyncio", "asyncore", "atexit", "audioop",
    "base64", "bdb", "binascii", "binhex", "bisect", "builtins", "bz2", "cProfile", "calendar", "cgi",
    "cgitb", "chunk", "cmath", "cmd", "code", "codecs", "codeop", "collections", "colorsys", "compileall",
    "concurrent", "configparser", "contextlib", "contextvars", "copy", "copyreg", "crypt", "csv", "ctypes",
    "curses", "dataclasses", "datetime", "dbm", "decimal", "difflib", "dis", "distutils", "doctest", "email",
    "encodings", "ensurepip", "enum", "errno", "faulthandler", "fcntl", "filecmp", "fileinput", "fnmatch",
    "fractions", "ftplib", "functools", "gc", "genericpath", "getopt", "getpass", "gettext", "glob",
    "graphlib", "grp", "gzip", "hashlib", "heapq", "hmac", "html", "http", "idlelib", "imaplib", "imghdr",
    "imp", "importlib", "inspect", "io", "ipaddress", "itertools", "json", "keyword", "lib2to3", "linecache",
    "locale", "logging", "lzma", "mailbox", "mailcap", "marshal", "math", "mimetypes", "mmap", "modulefinder",
    "msilib", "msvcrt", "multiprocessing", "netrc", "nis", "nntplib", "nt", "ntpath", "nturl2path", "numbers",
    "opcode", "operator", "optparse", "os", "ossaudiodev", "pathlib", "pdb", "pickle", "pickletools", "pipes",
    "pkgutil", "platform", "plistlib", "poplib", "posix", "posixpath", "pprint", "profile", "pstats", "pty",
    "pwd", "py_compile", "pyclbr", "pydoc", "pydoc_data", "pyexpat", "queue", "quopri", "random", "re",
    "readline", "reprlib", "resource", "rlcompleter", "runpy", "sched", "secrets", "select", "selectors",
    "shelve", "shlex", "shutil", "signal", "site", "smtpd", "smtplib", "sndhdr", "socket", "socketserver",
    "spwd", "sqlite3", "sre_compile", "sre_constants", "sre_parse", "ssl", "stat", "statistics", "string",
    "stringprep", "struct", "subprocess", "sunau", "symtable", "sys", "sysconfig", "syslog", "tabnanny",
    "tarfile", "telnetlib", "tempfile", "termios", "textwrap", "this", "threading", "time", "timeit",
    "tkinter", "token", "tokenize", "trace", "traceback", "tracemalloc", "tty", "turtle", "turtledemo",
    "types", "typing", "unicodedata", "unittest", "urllib", "uu", "uuid", "venv", "warnings", "wave",
    "weakref", "webbrowser", "winreg", "winsound", "wsgiref", "xdrlib", "xml", "xmlrpc", "zipapp", "zipfile",
    "zipimport", "zlib", "zoneinfo",
};

bool ends_with_newline(std::string_view s) { return !s.empty() && s.back() == '\n'; }

std::string iso8601(std::int64_t unix_ms) {
  std::time_t secs = static_cast<std::time_t>(unix_ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(unix_ms % 1000));
  return out;
}

}  // namespace

bool is_stdlib_module(std::string_view top_level) {
  return std::binary_search(kStdlib.begin(), kStdlib.end(), top_level,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

ImportGroup import_group(const ImportRecord& imp, const IndexView* view) {
  if (imp.is_future()) return ImportGroup::Future;
  if (imp.guard == ImportGuard::Try) return ImportGroup::Guarded;
  if (imp.relative_level > 0) return ImportGroup::Internal;
  // Plain imports name one module per binding; the first decides the group.
  std::string module = imp.form == ImportForm::Plain && !imp.bindings.empty() ? imp.bindings[0].first : imp.source_module;
  if (view && internal_prefix(*view, imp.repo_name, module)) return ImportGroup::Internal;
  std::string top = module.substr(0, module.find('.'));
  return is_stdlib_module(top) ? ImportGroup::Stdlib : ImportGroup::ThirdParty;
}

std::vector<std::size_t> order_units(const std::vector<std::vector<std::size_t>>& deps,
                                     const std::vector<OrderKey>& keys, const std::vector<std::ptrdiff_t>& follows) {
  const std::size_t n = deps.size();
  if (keys.size() != n) throw Error(ErrorCode::DomainError, "order_units: one key per unit required");
  auto comps = strongly_connected(deps);
  std::vector<std::size_t> comp_of(n);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (auto u : comps[c]) comp_of[u] = c;

  auto file_pos = [&](std::size_t u) { return std::tie(keys[u].repo, keys[u].rel_path, keys[u].start); };
  struct CompKey {
    int rank;
    std::string repo, rel_path;
    std::uint32_t start;
    std::size_t first;
    auto operator<=>(const CompKey&) const = default;
  };
  std::vector<CompKey> ckey(comps.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    auto& members = comps[c];
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return std::make_tuple(file_pos(a), a) < std::make_tuple(file_pos(b), b);
    });
    int rank = 0;
    for (auto u : members) rank = std::max(rank, keys[u].rank);
    const OrderKey& k = keys[members[0]];
    ckey[c] = CompKey{rank, k.repo, k.rel_path, k.start, members[0]};
    if (follows.empty()) continue;
    for (auto u : std::vector<std::size_t>(members)) {
      if (u >= follows.size() || follows[u] < 0) continue;
      auto t = static_cast<std::size_t>(follows[u]);
      if (t >= n || comp_of[t] != c || t == u) continue;
      members.erase(std::find(members.begin(), members.end(), u));
      members.insert(std::find(members.begin(), members.end(), t) + 1, u);
    }
  }

  std::vector<std::set<std::size_t>> needs(comps.size());
  std::vector<std::vector<std::size_t>> dependents(comps.size());
  for (std::size_t u = 0; u < n; ++u)
    for (auto v : deps[u])
      if (comp_of[u] != comp_of[v] && needs[comp_of[u]].insert(comp_of[v]).second)
        dependents[comp_of[v]].push_back(comp_of[u]);

  auto later = [&](std::size_t a, std::size_t b) { return ckey[b] < ckey[a]; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(later)> ready(later);
  std::vector<std::size_t> waiting(comps.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    waiting[c] = needs[c].size();
    if (waiting[c] == 0) ready.push(c);
  }
  std::vector<std::size_t> out;
  out.reserve(n);
  while (!ready.empty()) {
    std::size_t c = ready.top();
    ready.pop();
    out.insert(out.end(), comps[c].begin(), comps[c].end());
    for (auto d : dependents[c])
      if (--waiting[d] == 0) ready.push(d);
  }
  return out;
}

std::vector<std::size_t> order_definitions(const ClosureResult& closure) {
  const auto& members = closure.members;
  std::vector<std::vector<std::size_t>> deps;
  std::vector<OrderKey> keys;
  std::vector<std::ptrdiff_t> follows(members.size(), -1);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const SymbolRecord& s = members[i].symbol;
    deps.push_back(members[i].deps);
    bool constant = s.kind == SymbolKind::Constant || s.kind == SymbolKind::Alias;
    keys.push_back(OrderKey{constant ? 0 : 1, s.repo_name, s.rel_path, s.span.start});
    if (members[i].synthetic_alias && !members[i].deps.empty())
      follows[i] = static_cast<std::ptrdiff_t>(members[i].deps[0]);
  }
  return order_units(deps, keys, follows);
}

GeneratedModule emit(const ClosureResult& closure, const std::vector<std::size_t>& order, const IndexView& view) {
  GeneratedModule out;
  out.block_name = closure.root.class_name;
  out.repo_name = closure.root.repo_name;
  const RepoRow* repo = view.repo(closure.root.repo_name);
  out.source_commit = repo && !repo->head_commit.empty() ? repo->head_commit : "unknown";

  // Definitions, deduplicated by source statement.
  std::vector<std::size_t> picked;
  std::set<std::tuple<std::string, std::string, std::uint32_t, std::uint32_t>> statements;
  std::set<std::string> synthetic_lines;
  std::map<std::string, std::size_t> binder;
  for (std::size_t i : order) {
    if (i >= closure.members.size()) throw Error(ErrorCode::DomainError, "definition order names an unknown member");
    const ClosureMember& m = closure.members[i];
    const SymbolRecord& s = m.symbol;
    bool fresh = m.synthetic_alias ? synthetic_lines.insert(m.text).second
                                   : statements.emplace(s.repo_name, s.rel_path, s.span.start, s.span.end).second;
    auto [it, first_binding] = binder.emplace(s.name, i);
    if (!first_binding && fresh)
      throw Error(ErrorCode::EmitCollision,
                  out.block_name + ": '" + s.name + "' is defined by both " +
                      closure.members[it->second].symbol.repo_name + ":" + closure.members[it->second].symbol.fq_name +
                      " and " + s.repo_name + ":" + s.fq_name);
    if (fresh) picked.push_back(i);
  }

  std::set<std::pair<std::string, std::string>> files;
  for (auto i : picked)
    if (!closure.members[i].synthetic_alias)
      files.emplace(closure.members[i].symbol.repo_name, closure.members[i].symbol.rel_path);

  std::string& text = out.text;
  text += "# blockforge: " + out.block_name + " extracted from " + out.repo_name + "@" + out.source_commit +
          " files=" + std::to_string(files.size()) + "\n";
  for (auto i : picked) {
    const ClosureMember& m = closure.members[i];
    if (m.synthetic_alias) continue;
    const SymbolRecord& s = m.symbol;
    text += "# source: " + s.repo_name + "/" + s.rel_path + "@" + s.file_sha1 + " bytes " +
            std::to_string(s.span.start) + "-" + std::to_string(s.span.end) + " " + s.fq_name + "\n";
  }

  std::array<std::vector<const ImportRecord*>, 5> groups;
  std::set<std::string> seen_imports;
  for (const ImportRecord& imp : closure.preserved_imports)
    if (seen_imports.insert(imp.emit_text()).second)
      groups[static_cast<std::size_t>(import_group(imp, &view))].push_back(&imp);
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(), [](const ImportRecord* a, const ImportRecord* b) {
      return std::tie(a->repo_name, a->rel_path, a->ordinal) < std::tie(b->repo_name, b->rel_path, b->ordinal);
    });
    if (g.empty()) continue;
    text += "\n";
    for (const ImportRecord* imp : g) {
      const std::string& stmt = imp->emit_text();
      out.imports.push_back(stmt);
      text += stmt;
      if (!ends_with_newline(stmt)) text += "\n";
    }
  }

  bool prev_constant = false;
  for (std::size_t k = 0; k < picked.size(); ++k) {
    const ClosureMember& m = closure.members[picked[k]];
    const SymbolRecord& s = m.symbol;
    bool constant = s.kind == SymbolKind::Constant || s.kind == SymbolKind::Alias;
    text += k > 0 && constant && prev_constant ? "" : "\n\n";
    prev_constant = constant;
    out.definition_offsets.push_back(static_cast<std::uint32_t>(text.size()));
    out.provenance.push_back(ProvenanceEntry{s.fq_name, s.kind, s.repo_name, s.rel_path, s.file_sha1, s.span,
                                             m.synthetic_alias});
    text += m.text;
    if (!ends_with_newline(m.text)) text += "\n";
  }

  out.sha256 = sha256_hex(text);
  out.emitted_at = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  return out;
}

std::string provenance_json(const GeneratedModule& m) {
  using oj = nlohmann::ordered_json;
  oj defs = oj::array();
  for (const auto& p : m.provenance)
    defs.push_back({{"fq_name", p.fq_name},
                    {"kind", to_string(p.kind)},
                    {"repo", p.repo_name},
                    {"path", p.rel_path},
                    {"content_sha1", p.content_sha1},
                    {"span", {p.span.start, p.span.end}},
                    {"synthetic", p.synthetic}});
  oj doc{{"block", m.block_name},
         {"repo", m.repo_name},
         {"commit", m.source_commit},
         {"sha256", m.sha256},
         {"emitted_at", iso8601(m.emitted_at)},
         {"imports", m.imports},
         {"definitions", defs}};
  return doc.dump(2) + "\n";
}

void write_generated(const GeneratedModule& module, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::filesystem::path tmp = p;
    tmp += ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f || !(f << body) || !f.flush()) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
  };
  write(dir / (module.block_name + ".py"), module.text);
  write(dir / (module.block_name + ".provenance.json"), provenance_json(module));
}

}  // namespace blockforge
