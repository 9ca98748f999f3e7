#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "blockforge/source_index.hpp"

namespace blockforge {

struct BlockCandidate {
  std::string class_name;
  std::string fq_name;
  std::string repo_name;
  std::string rel_path;
  std::vector<std::string> base_chain;  // followed bases, terminal is torch.nn.Module
  bool has_forward = false;
  bool abstract = false;

  bool operator==(const BlockCandidate&) const = default;
};

struct DiscoveryDiagnostic {
  std::string repo_name;
  std::string fq_name;
  std::string reason;
  bool dynamic = false;  // base only resolvable at runtime
};

struct DiscoveryResult {
  std::vector<BlockCandidate> candidates;
  std::vector<DiscoveryDiagnostic> diagnostics;  // Module subclasses left out, with why
};

// repo name -> symbol patterns. A pattern made only of identifier
// characters is a class-name prefix; anything else is a regex searched in
// the name. Repos without an entry (or with an empty list) accept all.
using SymbolFilters = std::map<std::string, std::vector<std::string>>;

bool matches_symbol_patterns(const std::string& class_name, const std::vector<std::string>& patterns);

DiscoveryResult discover_blocks(const IndexView& view, const SymbolFilters& filters = {});

bool is_abstract(const SymbolRecord& class_record, const IndexView& view);

// Writes nn_block_names.json (unique names, discovery order) and the
// nn_block_index.json sidecar (name -> [{fq_name, repo, path}]).
void write_candidate_files(const std::vector<BlockCandidate>& candidates, const std::filesystem::path& dir);

}  // namespace blockforge
