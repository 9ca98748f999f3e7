#pragma once

#include <string_view>

#include "blockforge/python/ast.hpp"
#include "blockforge/python/tokenizer.hpp"

namespace blockforge::python {

// Parses a complete module. Throws SyntaxError with the byte offset and line
// of the first offending token. Node spans index into `source`.
NodePtr parse_module(std::string_view source);

// Parses a single expression (used for f-string replacement fields).
NodePtr parse_expression(std::string_view source);

}  // namespace blockforge::python
