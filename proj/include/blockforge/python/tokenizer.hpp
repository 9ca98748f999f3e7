#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blockforge::python {

enum class TokenKind : std::uint8_t {
  Name,
  Number,
  String,
  Op,
  Newline,
  Indent,
  Dedent,
  EndMarker,
  Comment,  // only with TokenizeOptions::keep_comments
  NonLogicalNewline,
};

struct Token {
  TokenKind kind;
  std::uint32_t begin = 0;  // byte offsets into the tokenized source
  std::uint32_t end = 0;
  std::uint32_t line = 1;
  std::string_view text;  // views the source buffer
};

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& msg, std::uint32_t offset, std::uint32_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), offset_(offset), line_(line) {}
  std::uint32_t offset() const noexcept { return offset_; }
  std::uint32_t line() const noexcept { return line_; }

 private:
  std::uint32_t offset_;
  std::uint32_t line_;
};

struct TokenizeOptions {
  bool keep_comments = false;
};

// Full Python 3 lexical grammar: indentation tracking, implicit line joining
// inside brackets, backslash continuations, every string prefix form.
// The returned tokens view `source`, which must outlive them.
std::vector<Token> tokenize(std::string_view source, TokenizeOptions options = {});

bool is_keyword(std::string_view word) noexcept;

}  // namespace blockforge::python
