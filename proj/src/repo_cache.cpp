#include "blockforge/repo_cache.hpp"

#include <fcntl.h>
#include <fnmatch.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "blockforge/error.hpp"
#include "blockforge/hashing.hpp"
#include "blockforge/sandbox.hpp"

extern char** environ;

namespace blockforge {
namespace fs = std::filesystem;
namespace {

constexpr const char* kMetaFile = ".blockforge_head";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

class FileLock {
 public:
  explicit FileLock(const fs::path& p) {
    fs::create_directories(p.parent_path());
    fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0 || flock(fd_, LOCK_EX) != 0) throw Error(ErrorCode::IoError, "cannot lock " + p.string());
  }
  ~FileLock() {
    if (fd_ >= 0) {
      flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

struct Meta {
  std::string head;
  std::int64_t last_sync_ms = 0;
};

std::optional<Meta> load_meta(const fs::path& dir) {
  fs::path p = dir / kMetaFile;
  if (!fs::exists(p)) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(read_file(p));
    return Meta{j.at("head_commit").get<std::string>(), j.value("last_sync_ms", std::int64_t{0})};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::chrono::system_clock::time_point from_ms(std::int64_t ms) {
  return std::chrono::system_clock::time_point(std::chrono::milliseconds(ms));
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void store_meta(const fs::path& dir, const RepoSpec& spec, const std::string& head, std::int64_t ms) {
  nlohmann::json j{{"repo", spec.name}, {"url", spec.url}, {"head_commit", head}, {"last_sync_ms", ms}};
  write_file(dir / kMetaFile, j.dump(2) + "\n");
}

bool is_local_directory(const std::string& url) {
  if (url.find("://") != std::string::npos || url.rfind("git@", 0) == 0) return false;
  std::error_code ec;
  return fs::is_directory(url, ec) && !fs::exists(fs::path(url) / ".git", ec);
}

std::vector<std::string> git_environment() {
  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) env.emplace_back(*e);
  env.emplace_back("GIT_TERMINAL_PROMPT=0");
  env.emplace_back("GIT_LFS_SKIP_SMUDGE=1");
  return env;
}

ProcessResult git(const std::vector<std::string>& args) {
  std::vector<std::string> argv{"git"};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessOptions opt;
  opt.env = git_environment();
  opt.timeout = std::chrono::minutes(10);
  try {
    return run_process(argv, opt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InterpreterMissing) throw Error(ErrorCode::CloneFailed, "git is not installed");
    throw;
  }
}

std::string first_word(const std::string& s) {
  auto end = s.find_first_of(" \t\n");
  return s.substr(0, end);
}

}  // namespace

void RepoSpec::check() const {
  auto slash = name.find('/');
  if (name.empty() || slash == std::string::npos || slash == 0 || slash + 1 == name.size() ||
      name.find('/', slash + 1) != std::string::npos)
    throw Error(ErrorCode::ConfigError, "repo name must be owner/repo: '" + name + "'");
  if (priority != 1 && priority != 2) throw Error(ErrorCode::ConfigError, name + ": priority must be 1 or 2");
  if (url.empty()) throw Error(ErrorCode::ConfigError, name + ": url is empty");
}

const std::vector<std::string>& default_deny_extensions() {
  static const std::vector<std::string> deny{".pt", ".pth", ".ckpt", ".onnx", ".bin", ".safetensors", ".npz", ".h5"};
  return deny;
}

fs::path default_cache_root() {
  if (const char* env = std::getenv("BLOCKFORGE_CACHE"); env && *env) return env;
  return fs::path(".blockforge") / "cache";
}

RepoCache::RepoCache(fs::path root, std::vector<std::string> deny) : root_(std::move(root)), deny_(std::move(deny)) {}

fs::path RepoCache::entry_dir(const RepoSpec& spec) const {
  auto slash = spec.name.find('/');
  return root_ / (spec.name.substr(0, slash) + "__" + spec.name.substr(slash + 1));
}

bool RepoCache::denied(const fs::path& p) const {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::find(deny_.begin(), deny_.end(), ext) != deny_.end();
}

CacheEntry RepoCache::sync_repo(const RepoSpec& spec) const {
  spec.check();
  fs::create_directories(root_);
  FileLock lock(fs::path(entry_dir(spec).string() + ".lock"));
  if (is_local_directory(spec.url)) return sync_directory(spec, spec.url);
  return sync_git(spec);
}

CacheEntry RepoCache::sync_directory(const RepoSpec& spec, const fs::path& src) const {
  std::map<std::string, std::string> listing;  // rel path -> sha1
  std::map<std::string, fs::path> sources;
  for (auto it = fs::recursive_directory_iterator(src); it != fs::recursive_directory_iterator(); ++it) {
    const auto& p = it->path();
    if (it->is_directory() && (p.filename() == ".git" || p.filename() == "__pycache__")) {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file() || denied(p) || p.filename() == kMetaFile) continue;
    std::string rel = fs::relative(p, src).generic_string();
    listing[rel] = sha1_hex(read_file(p));
    sources[rel] = p;
  }
  std::string manifest;
  for (const auto& [rel, digest] : listing) manifest += rel + '\0' + digest + '\n';
  std::string head = sha1_hex(manifest);

  fs::path dest = entry_dir(spec);
  CacheEntry entry{spec, dest, head, {}, 1, 0, false};
  auto meta = load_meta(dest);
  if (meta && meta->head == head) {
    entry.last_sync = from_ms(meta->last_sync_ms);
    return entry;
  }
  fs::create_directories(dest);
  for (const auto& [rel, digest] : listing) {
    fs::path target = dest / rel;
    if (fs::exists(target) && sha1_hex(read_file(target)) == digest) continue;
    write_file(target, read_file(sources[rel]));
    ++entry.files_rewritten;
  }
  std::vector<fs::path> stale;
  for (auto it = fs::recursive_directory_iterator(dest); it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file() || it->path().filename() == kMetaFile) continue;
    if (!listing.count(fs::relative(it->path(), dest).generic_string())) stale.push_back(it->path());
  }
  for (const auto& p : stale) fs::remove(p);
  std::int64_t ms = now_ms();
  store_meta(dest, spec, head, ms);
  entry.last_sync = from_ms(ms);
  return entry;
}

CacheEntry RepoCache::sync_git(const RepoSpec& spec) const {
  fs::path dest = entry_dir(spec);
  auto meta = load_meta(dest);
  bool have_checkout = meta && fs::exists(dest / ".git");

  ProcessResult remote = git({"ls-remote", spec.url, "HEAD"});
  std::string remote_head = remote.ok() ? first_word(remote.out) : "";
  if (remote_head.empty()) {
    if (have_checkout) return CacheEntry{spec, dest, meta->head, from_ms(meta->last_sync_ms), 1, 0, true};
    throw Error(ErrorCode::NetworkUnavailable, spec.url + ": " + remote.err);
  }
  if (have_checkout && meta->head == remote_head)
    return CacheEntry{spec, dest, meta->head, from_ms(meta->last_sync_ms), 1, 0, false};

  auto checked = [&](const std::vector<std::string>& args) {
    ProcessResult r = git(args);
    if (!r.ok()) throw Error(ErrorCode::CloneFailed, spec.url + ": git " + args.front() + ": " + r.err);
    return r;
  };
  std::string d = dest.string();
  if (!have_checkout) {
    fs::remove_all(dest);
    checked({"clone", "--quiet", "--depth", "1", "--no-checkout", spec.url, d});
    checked({"-C", d, "config", "core.sparseCheckout", "true"});
    std::string patterns = "/*\n";
    for (const auto& ext : deny_) patterns += "!*" + ext + "\n";
    write_file(dest / ".git" / "info" / "sparse-checkout", patterns);
    checked({"-C", d, "read-tree", "-mu", "HEAD"});
  } else {
    checked({"-C", d, "fetch", "--quiet", "--depth", "1", "origin", "HEAD"});
    checked({"-C", d, "reset", "--quiet", "--hard", "FETCH_HEAD"});
  }
  std::string head = first_word(checked({"-C", d, "rev-parse", "HEAD"}).out);
  std::int64_t ms = now_ms();
  store_meta(dest, spec, head, ms);
  // git rewrites whatever changed; not tracked file by file here.
  return CacheEntry{spec, dest, head, from_ms(ms), 1, 1, false};
}

std::vector<SourceFile> RepoCache::enumerate_sources(const CacheEntry& entry, const RepoSpec& spec) const {
  std::vector<std::string> rels;
  if (!fs::is_directory(entry.local_path)) return {};
  for (auto it = fs::recursive_directory_iterator(entry.local_path); it != fs::recursive_directory_iterator(); ++it) {
    const auto& p = it->path();
    if (it->is_directory() && (p.filename() == ".git" || p.filename() == "__pycache__")) {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file() || p.extension() != ".py" || denied(p)) continue;
    std::string rel = fs::relative(p, entry.local_path).generic_string();
    if (!spec.path_globs.empty() &&
        std::none_of(spec.path_globs.begin(), spec.path_globs.end(),
                     [&](const std::string& g) { return fnmatch(g.c_str(), rel.c_str(), 0) == 0; }))
      continue;
    rels.push_back(std::move(rel));
  }
  std::sort(rels.begin(), rels.end());
  std::vector<SourceFile> out;
  out.reserve(rels.size());
  for (auto& rel : rels) {
    std::string bytes = read_file(entry.local_path / rel);
    out.push_back(SourceFile{std::move(rel), std::move(bytes)});
  }
  return out;
}

}  // namespace blockforge
