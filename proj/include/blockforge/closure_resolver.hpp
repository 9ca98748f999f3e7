#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockforge/block_discovery.hpp"
#include "blockforge/python/scope.hpp"
#include "blockforge/source_index.hpp"

namespace blockforge {

using python::FreeName;

enum class Confidence { DirectImport, QualifiedName, HeuristicMatch };
enum class TargetKind { Symbol, Import, Builtin };

std::string_view to_string(Confidence c);
std::string_view to_string(TargetKind k);

struct Resolution {
  FreeName name;
  std::string repo;
  std::string module;  // where the name was read
  TargetKind target = TargetKind::Builtin;
  const SymbolRecord* symbol = nullptr;  // TargetKind::Symbol
  // DirectImport: the import binding the name. TargetKind::Import: the
  // statement preserved verbatim.
  const ImportRecord* import = nullptr;
  Confidence confidence = Confidence::DirectImport;
  // Name the target binds when it differs from the identifier, i.e. an
  // aliased import of a corpus definition ("from .layers import a as b").
  std::string bound_as;
  bool module_object = false;  // the import binds a corpus module, kept verbatim
};

struct Unresolved {
  FreeName name;
  std::string repo;
  std::string module;
  std::string reason;
  std::vector<std::string> candidates;  // ambiguous heuristic matches
  const ImportRecord* preserve = nullptr;  // a broken internal import kept verbatim
};

struct ResolveOptions {
  bool strip_type_checking = false;
};

// Free names of an indexed top-level definition (use sites are file offsets).
std::vector<FreeName> free_names(const SymbolRecord& symbol, const IndexView& view);

// Tiered resolution of one free name read inside `context`: import binding,
// then module global (or dotted qualified name), then builtins, then a
// unique corpus suffix match preferring the same repo.
std::variant<Resolution, Unresolved> resolve(const FreeName& name, const SymbolRecord& context, const IndexView& view,
                                             const ResolveOptions& options = {});

struct ClosureMember {
  SymbolRecord symbol;
  bool synthetic_alias = false;  // `alias = target` standing in for an aliased import
  std::string text;              // verbatim slice, or the synthetic line
  std::vector<std::size_t> deps;  // members this one references
};

struct ClosureResult {
  BlockCandidate root;
  std::vector<ClosureMember> members;  // members[0] is the root
  std::vector<ImportRecord> preserved_imports;
  std::vector<std::vector<std::size_t>> scc_groups;  // member indices of each dependency cycle
  std::vector<Resolution> resolutions;
  std::vector<Unresolved> unresolved;

  std::vector<SymbolRecord> internal_defs() const;  // classes and functions, root included
  std::vector<SymbolRecord> constants() const;      // constants and aliases
  std::vector<std::string> scc_member_names() const;
};

ClosureResult close(const BlockCandidate& root, const IndexView& view, const ResolveOptions& options = {});

// Strongly connected components of members under `deps`, each listed in
// member order; components are returned dependencies-first.
std::vector<std::vector<std::size_t>> strongly_connected(const std::vector<std::vector<std::size_t>>& deps);

nlohmann::ordered_json closure_to_json(const ClosureResult& closure);
void write_closure_report(const ClosureResult& closure, const std::filesystem::path& reports_dir);

}  // namespace blockforge
