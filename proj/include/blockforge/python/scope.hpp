#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "blockforge/python/ast.hpp"

namespace blockforge::python {

enum class ScopeKind : std::uint8_t { Module, Function, Class, Lambda, Comprehension };

std::string_view to_string(ScopeKind kind) noexcept;

struct ScopeDescriptor {
  ScopeKind kind;
  std::string name;
};

// An identifier read inside a top-level statement that no local or enclosing
// function scope binds: it must come from a module global, an import, or the
// builtins table.
struct FreeName {
  std::string identifier;
  std::uint32_t use_site = 0;  // byte offset of the identifier
  std::vector<ScopeDescriptor> enclosing_scopes;  // innermost first, module last
  std::string dotted;  // full attribute chain at the use ("cfg.MODEL"), or the identifier
  bool in_header = false;  // decorator or base-class expression of the definition itself
};

// LEGB free-name analysis of one top-level statement (def, class, assignment).
// Class bodies are invisible to nested functions; comprehension targets bind
// in the comprehension; walrus targets bind in the nearest non-comprehension
// scope; decorators, defaults, annotations and bases are read at definition
// time in the module scope.
std::vector<FreeName> free_names(const Node& statement);

// Names a top-level statement binds in the module namespace.
std::vector<std::string> module_bindings(const Node& statement);

bool is_builtin(std::string_view name) noexcept;

}  // namespace blockforge::python
