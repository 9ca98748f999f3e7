#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace blockforge {

enum class FetchPolicy { CodeOnly };

struct RepoSpec {
  std::string name;  // owner/repo
  std::string url;   // git URL, or a plain local directory
  int priority = 1;  // 1 or 2
  std::vector<std::string> path_globs;
  std::vector<std::string> symbol_patterns;
  FetchPolicy fetch_policy = FetchPolicy::CodeOnly;

  void check() const;  // throws Error{ConfigError}
};

struct CacheEntry {
  RepoSpec repo;
  std::filesystem::path local_path;
  std::string head_commit;
  std::chrono::system_clock::time_point last_sync;
  int clone_depth = 1;
  std::size_t files_rewritten = 0;  // by the sync that produced this entry
  bool stale = false;               // remote unreachable, served from cache
};

struct SourceFile {
  std::string rel_path;  // '/'-separated
  std::string bytes;
};

const std::vector<std::string>& default_deny_extensions();

// BLOCKFORGE_CACHE, else ./.blockforge/cache
std::filesystem::path default_cache_root();

class RepoCache {
 public:
  explicit RepoCache(std::filesystem::path root, std::vector<std::string> deny = default_deny_extensions());

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path entry_dir(const RepoSpec& spec) const;

  CacheEntry sync_repo(const RepoSpec& spec) const;
  std::vector<SourceFile> enumerate_sources(const CacheEntry& entry, const RepoSpec& spec) const;

  bool denied(const std::filesystem::path& p) const;

 private:
  CacheEntry sync_directory(const RepoSpec& spec, const std::filesystem::path& src) const;
  CacheEntry sync_git(const RepoSpec& spec) const;

  std::filesystem::path root_;
  std::vector<std::string> deny_;
};

}  // namespace blockforge
