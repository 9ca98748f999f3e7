#include "blockforge/python/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace blockforge::python {
namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",     "assert", "async", "await", "break",
    "class", "continue", "def",   "del",      "elif",   "else",   "except", "finally", "for",
    "from",  "global", "if",      "import",   "in",     "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise",   "return",   "try",    "while",  "with",  "yield"};

constexpr std::array<std::string_view, 5> kOps3 = {"**=", "//=", "...", ">>=", "<<="};
constexpr std::array<std::string_view, 19> kOps2 = {
    "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "->", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", ":="};

bool ident_start(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
bool digit(unsigned char c) { return c >= '0' && c <= '9'; }

bool string_prefix(std::string_view w) {
  if (w.size() > 2) return false;
  std::string lower;
  for (char c : w) lower.push_back(static_cast<char>(c | 0x20));
  static constexpr std::array<std::string_view, 10> kPrefixes = {"r", "u", "b", "f", "br", "rb", "fr", "rf"};
  return std::find(kPrefixes.begin(), kPrefixes.end(), lower) != kPrefixes.end();
}

class Lexer {
 public:
  Lexer(std::string_view src, TokenizeOptions opts) : src_(src), opts_(opts) {}

  std::vector<Token> run() {
    if (src_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
    indents_.push_back(0);
    bool at_line_start = true;
    while (pos_ < src_.size()) {
      if (at_line_start && depth_ == 0) {
        if (!handle_indentation()) continue;  // blank/comment line consumed
        at_line_start = false;
      }
      unsigned char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\f') {
        ++pos_;
      } else if (c == '\\') {
        std::size_t n = pos_ + 1;
        if (n < src_.size() && src_[n] == '\r') ++n;
        if (n < src_.size() && src_[n] == '\n') {
          pos_ = n + 1;
          ++line_;
        } else if (n >= src_.size()) {
          fail("unexpected EOF after line continuation");
        } else {
          fail("unexpected character after line continuation");
        }
      } else if (c == '#') {
        lex_comment();
      } else if (c == '\n' || c == '\r') {
        std::uint32_t b = static_cast<std::uint32_t>(pos_);
        if (c == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') ++pos_;
        ++pos_;
        if (depth_ > 0) {
          push(TokenKind::NonLogicalNewline, b, static_cast<std::uint32_t>(pos_));
        } else {
          push(TokenKind::Newline, b, static_cast<std::uint32_t>(pos_));
          at_line_start = true;
        }
        ++line_;
      } else if (ident_start(c)) {
        lex_name_or_prefixed_string();
      } else if (digit(c) || (c == '.' && pos_ + 1 < src_.size() && digit(src_[pos_ + 1]))) {
        lex_number();
      } else if (c == '"' || c == '\'') {
        lex_string(pos_, pos_);
      } else {
        lex_op();
      }
    }
    if (depth_ > 0)
      throw SyntaxError(std::string("'") + open_.back().bracket + "' was never closed", open_.back().offset,
                        open_.back().line);
    if (line_has_tokens_) {
      push(TokenKind::Newline, static_cast<std::uint32_t>(pos_), static_cast<std::uint32_t>(pos_));
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(TokenKind::Dedent, static_cast<std::uint32_t>(pos_), static_cast<std::uint32_t>(pos_));
    }
    push(TokenKind::EndMarker, static_cast<std::uint32_t>(pos_), static_cast<std::uint32_t>(pos_));
    return std::move(toks_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    throw SyntaxError(msg, static_cast<std::uint32_t>(pos_), line_);
  }

  void push(TokenKind k, std::uint32_t b, std::uint32_t e) {
    if (k == TokenKind::Name || k == TokenKind::Number || k == TokenKind::String || k == TokenKind::Op) {
      line_has_tokens_ = true;
    } else if (k == TokenKind::Newline) {
      line_has_tokens_ = false;
    }
    toks_.push_back(Token{k, b, e, line_, src_.substr(b, e - b)});
  }

  // Returns false when the whole line was blank or comment-only.
  bool handle_indentation() {
    std::size_t col = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      char c = src_[p];
      if (c == ' ') {
        ++col;
      } else if (c == '\t') {
        col = (col / 8 + 1) * 8;
      } else if (c == '\f') {
        col = 0;
      } else {
        break;
      }
      ++p;
    }
    if (p >= src_.size()) {
      pos_ = p;
      return false;
    }
    char c = src_[p];
    if (c == '#' || c == '\n' || c == '\r') {
      pos_ = p;
      if (c == '#') lex_comment();
      if (pos_ < src_.size()) {
        std::uint32_t b = static_cast<std::uint32_t>(pos_);
        if (src_[pos_] == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') ++pos_;
        ++pos_;
        if (opts_.keep_comments) push(TokenKind::NonLogicalNewline, b, static_cast<std::uint32_t>(pos_));
        ++line_;
      }
      return false;
    }
    pos_ = p;
    std::uint32_t at = static_cast<std::uint32_t>(pos_);
    if (col > indents_.back()) {
      indents_.push_back(col);
      push(TokenKind::Indent, at, at);
    } else {
      while (col < indents_.back()) {
        indents_.pop_back();
        push(TokenKind::Dedent, at, at);
      }
      if (col != indents_.back()) fail("unindent does not match any outer indentation level");
    }
    return true;
  }

  void lex_comment() {
    std::size_t b = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') ++pos_;
    if (opts_.keep_comments) push(TokenKind::Comment, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(pos_));
  }

  void lex_name_or_prefixed_string() {
    std::size_t b = pos_;
    while (pos_ < src_.size() && ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    std::string_view word = src_.substr(b, pos_ - b);
    if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') && string_prefix(word)) {
      lex_string(b, pos_);
      return;
    }
    push(TokenKind::Name, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(pos_));
  }

  void lex_number() {
    std::size_t b = pos_;
    auto take_digits = [&](auto pred) {
      while (pos_ < src_.size() && (pred(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    };
    if (src_[pos_] == '0' && pos_ + 1 < src_.size() &&
        std::string_view("xXoObB").find(src_[pos_ + 1]) != std::string_view::npos) {
      pos_ += 2;
      take_digits([](unsigned char c) { return std::isxdigit(c) != 0; });
    } else {
      take_digits(digit);
      if (pos_ < src_.size() && src_[pos_] == '.') {
        ++pos_;
        take_digits(digit);
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t save = pos_;
        ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
        if (pos_ < src_.size() && digit(src_[pos_])) {
          take_digits(digit);
        } else {
          pos_ = save;
        }
      }
      if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) ++pos_;
    }
    if (pos_ < src_.size() && ident_start(static_cast<unsigned char>(src_[pos_]))) fail("invalid numeric literal");
    push(TokenKind::Number, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(pos_));
  }

  // `begin` is the start of the prefix, `quote_at` the first quote char.
  void lex_string(std::size_t begin, std::size_t quote_at) {
    pos_ = quote_at;
    char q = src_[pos_];
    bool triple = pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q;
    pos_ += triple ? 3 : 1;
    std::uint32_t start_line = line_;
    while (true) {
      if (pos_ >= src_.size()) {
        line_ = start_line;
        fail(triple ? "unterminated triple-quoted string literal" : "unterminated string literal");
      }
      char c = src_[pos_];
      if (c == '\\') {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') ++line_;
        pos_ += 2;
        continue;
      }
      if (c == '\n') {
        if (!triple) fail("unterminated string literal");
        ++line_;
      }
      if (c == q) {
        if (!triple) {
          ++pos_;
          break;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q) {
          pos_ += 3;
          break;
        }
      }
      ++pos_;
    }
    std::uint32_t saved = line_;
    line_ = start_line;
    push(TokenKind::String, static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(pos_));
    line_ = saved;
  }

  void lex_op() {
    std::string_view rest = src_.substr(pos_);
    std::size_t len = 0;
    for (auto op : kOps3) {
      if (rest.substr(0, 3) == op) len = 3;
    }
    if (len == 0) {
      for (auto op : kOps2) {
        if (op.size() == 2 && rest.substr(0, 2) == op) len = 2;
      }
    }
    if (len == 0) {
      char c = rest[0];
      if (std::string_view("+-*/%@&|^~<>()[]{},:;.=!").find(c) == std::string_view::npos) {
        fail(std::string("invalid character '") + c + "'");
      }
      len = 1;
      if (c == '(' || c == '[' || c == '{') {
        open_.push_back({c, static_cast<std::uint32_t>(pos_), line_});
        ++depth_;
      }
      if (c == ')' || c == ']' || c == '}') {
        if (depth_ == 0) fail(std::string("unmatched '") + c + "'");
        char want = open_.back().bracket == '(' ? ')' : open_.back().bracket == '[' ? ']' : '}';
        if (c != want)
          fail(std::string("closing parenthesis '") + c + "' does not match opening parenthesis '" +
               open_.back().bracket + "'");
        open_.pop_back();
        --depth_;
      }
    }
    push(TokenKind::Op, static_cast<std::uint32_t>(pos_), static_cast<std::uint32_t>(pos_ + len));
    pos_ += len;
  }

  std::string_view src_;
  TokenizeOptions opts_;
  std::size_t pos_ = 0;
  std::uint32_t line_ = 1;
  int depth_ = 0;
  struct Open {
    char bracket;
    std::uint32_t offset;
    std::uint32_t line;
  };
  std::vector<Open> open_;
  bool line_has_tokens_ = false;
  std::vector<std::size_t> indents_;
  std::vector<Token> toks_;
};

}  // namespace

bool is_keyword(std::string_view word) noexcept {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view source, TokenizeOptions options) {
  return Lexer(source, options).run();
}

}  // namespace blockforge::python
