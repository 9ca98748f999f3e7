#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "blockforge/source_index.hpp"

namespace blockforge {

// Absolute dotted module an import refers to, after applying its relative
// level against the importer's package. nullopt when the level climbs above
// the top of the repo.
std::optional<std::string> absolute_module(const FileRecord& importer, const ImportRecord& imp);

// Longest corpus-internal module named by `dotted` or one of its prefixes.
std::optional<std::string> internal_prefix(const IndexView& view, const std::string& repo, const std::string& dotted);

// What a name refers to in a module's global namespace, following
// corpus-internal re-exports.
struct ModuleBinding {
  enum class Kind {
    None,              // not bound by any import or top-level definition
    Symbol,            // a corpus definition (possibly re-exported)
    ExternalImport,    // bound by an import of a module outside the corpus
    ExternalStar,      // possibly supplied by `from <external> import *`
    InternalModule,    // a corpus module object (`from . import layers`)
    UnresolvedImport,  // an internal import whose target cannot be found
  };
  Kind kind = Kind::None;
  const SymbolRecord* symbol = nullptr;
  // The import in the queried module that introduces the name (null when
  // the module defines it itself).
  const ImportRecord* via = nullptr;
  // The import statement that ultimately binds an external name; differs
  // from `via` when the name is re-exported through corpus modules.
  const ImportRecord* origin = nullptr;
  std::string bound_as;   // name the origin import (or definition) binds
  std::string dotted;     // ExternalImport/ExternalStar: full path; InternalModule: module
  std::string message;    // UnresolvedImport
};

struct BindOptions {
  bool strip_type_checking = false;
};

ModuleBinding lookup_binding(const IndexView& view, const std::string& repo, const std::string& module,
                             const std::string& name, const BindOptions& options = {});

struct ModuleNode {
  std::string repo;    // empty for external boundary nodes
  std::string module;  // dotted
  bool external = false;
};

struct ImportEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t import_index = 0;  // into IndexView::imports()
};

struct ImportDiagnostic {
  std::string repo;
  std::string module;
  std::string statement_text;
  std::string message;
};

struct ImportGraph {
  std::vector<ModuleNode> nodes;
  std::vector<ImportEdge> edges;  // sorted, no duplicates per (from, to)
  std::vector<ImportDiagnostic> diagnostics;  // UnresolvableRelativeImport

  std::optional<std::size_t> find(const std::string& repo, const std::string& module) const;
  bool has_edge(std::size_t from, std::size_t to) const;

 private:
  friend ImportGraph build_import_graph(const IndexView& view);
  std::unordered_map<std::string, std::size_t> index_;
};

ImportGraph build_import_graph(const IndexView& view);

}  // namespace blockforge
