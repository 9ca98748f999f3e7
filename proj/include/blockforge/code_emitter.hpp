#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "blockforge/closure_resolver.hpp"

namespace blockforge {

struct ProvenanceEntry {
  std::string fq_name;
  SymbolKind kind = SymbolKind::Class;
  std::string repo_name;
  std::string rel_path;
  std::string content_sha1;
  Span span;
  bool synthetic = false;  // alias line written by the emitter, span is the import it replaces
};

struct GeneratedModule {
  std::string block_name;
  std::string repo_name;
  std::string source_commit;
  std::string text;
  std::string sha256;
  std::vector<ProvenanceEntry> provenance;  // emission order
  std::vector<std::string> imports;          // emitted import texts, emission order
  std::vector<std::uint32_t> definition_offsets;  // parallel to provenance: offset in text
  std::int64_t emitted_at = 0;  // unix ms; kept out of `text`
};

enum class ImportGroup { Future, Stdlib, ThirdParty, Internal, Guarded };

bool is_stdlib_module(std::string_view top_level);
ImportGroup import_group(const ImportRecord& imp, const IndexView* view = nullptr);

// Ordering key of a definition unit: constants (rank 0) ahead of code
// (rank 1) when topology allows, then file position.
struct OrderKey {
  int rank = 1;
  std::string repo;
  std::string rel_path;
  std::uint32_t start = 0;

  auto operator<=>(const OrderKey&) const = default;
};

// Kahn's algorithm over the SCC condensation of `deps` (u depends on each
// v in deps[u]); ready components are taken smallest key first and the
// members of a component appear in key order. `follows[u]`, when set, pins
// u directly after that member inside a shared component.
std::vector<std::size_t> order_units(const std::vector<std::vector<std::size_t>>& deps,
                                     const std::vector<OrderKey>& keys,
                                     const std::vector<std::ptrdiff_t>& follows = {});

// Definition-before-use order of closure members (indices into members).
std::vector<std::size_t> order_definitions(const ClosureResult& closure);

// Throws Error{EmitCollision} when two included definitions bind the same
// top-level name.
GeneratedModule emit(const ClosureResult& closure, const std::vector<std::size_t>& order, const IndexView& view);

std::string provenance_json(const GeneratedModule& module);

// generated/<Block>.py and generated/<Block>.provenance.json
void write_generated(const GeneratedModule& module, const std::filesystem::path& dir);

}  // namespace blockforge
