#include "blockforge/python/parser.hpp"

#include <algorithm>
#include <cctype>
#include <array>
#include <functional>

namespace blockforge::python {
namespace {

constexpr std::array<std::string_view, 13> kAugOps = {"+=", "-=", "*=", "/=", "//=", "%=", "@=",
                                                      "&=", "|=", "^=", ">>=", "<<=", "**="};

NodePtr make(NodeKind kind, std::uint32_t begin = 0, std::uint32_t end = 0) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  n->begin = begin;
  n->end = end;
  return n;
}

NodePtr empty_node(std::uint32_t at) { return make(NodeKind::Empty, at, at); }

std::string_view describe(NodeKind k) {
  switch (k) {
    case NodeKind::Call: return "function call";
    case NodeKind::Constant: return "literal";
    case NodeKind::JoinedStr: return "f-string expression";
    case NodeKind::Yield: case NodeKind::YieldFrom: return "yield expression";
    case NodeKind::Await: return "await expression";
    case NodeKind::ListComp: return "list comprehension";
    case NodeKind::SetComp: return "set comprehension";
    case NodeKind::DictComp: return "dict comprehension";
    case NodeKind::GeneratorExp: return "generator expression";
    case NodeKind::Dict: return "dict literal";
    case NodeKind::Set: return "set display";
    case NodeKind::Lambda: return "lambda";
    case NodeKind::IfExp: return "conditional expression";
    case NodeKind::NamedExpr: return "named expression";
    case NodeKind::Compare: return "comparison";
    case NodeKind::Tuple: return "tuple";
    case NodeKind::List: return "list";
    case NodeKind::Starred: return "starred";
    default: return "expression";
  }
}

bool hex_run(std::string_view s, std::size_t at, std::size_t n) {
  if (at + n > s.size()) return false;
  for (std::size_t i = at; i < at + n; ++i)
    if (!std::isxdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

// Error text for an invalid escape or character in a non-raw literal body.
std::string literal_problem(std::string_view body, bool bytes, bool raw) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(body[i]);
    if (bytes && c >= 0x80) return "bytes can only contain ASCII literal characters";
    if (raw || c != '\\' || i + 1 >= body.size()) continue;
    char e = body[++i];
    if (e == 'x' && !hex_run(body, i + 1, 2)) return "truncated \\xXX escape";
    if (bytes) continue;
    if (e == 'u' && !hex_run(body, i + 1, 4)) return "truncated \\uXXXX escape";
    if (e == 'U') {
      if (!hex_run(body, i + 1, 8)) return "truncated \\UXXXXXXXX escape";
      if (std::stoul(std::string(body.substr(i + 1, 8)), nullptr, 16) > 0x10FFFF) return "illegal Unicode character";
    }
    if (e == 'N') {
      std::size_t close = body.find('}', i);
      if (i + 1 >= body.size() || body[i + 1] != '{' || close == std::string_view::npos || close == i + 2)
        return "malformed \\N character escape";
    }
  }
  return {};
}

void shift_spans(Node& n, std::int64_t delta) {
  n.begin = static_cast<std::uint32_t>(n.begin + delta);
  n.end = static_cast<std::uint32_t>(n.end + delta);
  for (auto& k : n.kids) shift_spans(*k, delta);
}

NodePtr parse_expression_at(std::string_view text, std::uint32_t base, std::uint32_t line);

class Parser {
 public:
  explicit Parser(std::string_view src, std::uint32_t line_offset = 0) : src_(src), line_offset_(line_offset) {
    for (const Token& t : tokenize(src)) {
      if (t.kind != TokenKind::Comment && t.kind != TokenKind::NonLogicalNewline) toks_.push_back(t);
    }
  }

  NodePtr file() {
    auto mod = make(NodeKind::Module, 0, static_cast<std::uint32_t>(src_.size()));
    while (!at(TokenKind::EndMarker)) {
      if (at(TokenKind::Newline)) {
        ++i_;
        continue;
      }
      statement(mod->kids);
    }
    return mod;
  }

  NodePtr single_expression() {
    auto e = star_expressions();
    while (at(TokenKind::Newline)) ++i_;
    if (!at(TokenKind::EndMarker)) fail("unexpected token after expression");
    return e;
  }

 private:
  // ---- token helpers -------------------------------------------------------

  const Token& peek(std::size_t k = 0) const {
    std::size_t j = std::min(i_ + k, toks_.size() - 1);
    return toks_[j];
  }
  bool at(TokenKind k) const { return peek().kind == k; }
  bool at_op(std::string_view s, std::size_t k = 0) const {
    const Token& t = peek(k);
    return t.kind == TokenKind::Op && t.text == s;
  }
  bool at_kw(std::string_view s, std::size_t k = 0) const {
    const Token& t = peek(k);
    return t.kind == TokenKind::Name && t.text == s;
  }
  const Token& next() {
    const Token& t = toks_[i_];
    if (i_ + 1 < toks_.size()) ++i_;
    if (t.kind != TokenKind::Newline && t.kind != TokenKind::Indent && t.kind != TokenKind::Dedent &&
        t.kind != TokenKind::NonLogicalNewline && t.kind != TokenKind::EndMarker)
      last_end_ = t.end;
    return t;
  }
  [[noreturn]] void fail_at(std::uint32_t offset, const std::string& msg) const {
    auto upto = src_.substr(0, std::min<std::size_t>(offset, src_.size()));
    auto line = static_cast<std::uint32_t>(1 + std::count(upto.begin(), upto.end(), '\n'));
    throw SyntaxError(msg, offset, line + line_offset_);
  }

  // Assignment, for, with and comprehension targets; del targets with `del`.
  void check_store(const Node& t, bool del) const {
    switch (t.kind) {
      case NodeKind::Name:
      case NodeKind::Attribute:
      case NodeKind::Subscript:
        return;
      case NodeKind::Tuple:
      case NodeKind::List:
        for (const auto& k : t.kids) check_store(*k, del);
        return;
      case NodeKind::Starred:
        if (del) fail_at(t.begin, "cannot delete starred");
        return check_store(t.kid(0), del);
      default:
        fail_at(t.begin, std::string(del ? "cannot delete " : "cannot assign to ") + std::string(describe(t.kind)));
    }
  }

  static bool single_target(const Node& t) {
    return t.kind == NodeKind::Name || t.kind == NodeKind::Attribute || t.kind == NodeKind::Subscript;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    throw SyntaxError(msg + (t.text.empty() ? std::string() : " near '" + std::string(t.text) + "'"), t.begin,
                      t.line + line_offset_);
  }
  void expect_op(std::string_view s) {
    if (!at_op(s)) fail("expected '" + std::string(s) + "'");
    next();
  }
  void expect_kw(std::string_view s) {
    if (!at_kw(s)) fail("expected '" + std::string(s) + "'");
    next();
  }
  std::string expect_name() {
    const Token& t = peek();
    if (t.kind != TokenKind::Name || is_keyword(t.text)) fail("expected identifier");
    next();
    return std::string(t.text);
  }
  std::uint32_t here() const { return peek().begin; }
  NodePtr finish(NodePtr n) {
    n->end = last_end_;
    return n;
  }

  bool can_start_expression() const {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::Name:
        if (!is_keyword(t.text)) return true;
        return t.text == "None" || t.text == "True" || t.text == "False" || t.text == "not" ||
               t.text == "lambda" || t.text == "await" || t.text == "yield";
      case TokenKind::Number:
      case TokenKind::String:
        return true;
      case TokenKind::Op:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" || t.text == "+" ||
               t.text == "~" || t.text == "*" || t.text == "...";
      default:
        return false;
    }
  }

  // ---- statements -----------------------------------------------------------

  void statement(std::vector<NodePtr>& out) {
    const Token& t = peek();
    if (t.kind == TokenKind::Op && t.text == "@") {
      out.push_back(decorated());
      return;
    }
    if (t.kind == TokenKind::Name) {
      std::string_view w = t.text;
      if (w == "def") return out.push_back(funcdef(make(NodeKind::Decorators, t.begin, t.begin), 0, t.begin));
      if (w == "class") return out.push_back(classdef(make(NodeKind::Decorators, t.begin, t.begin), t.begin));
      if (w == "if") return out.push_back(if_stmt());
      if (w == "while") return out.push_back(while_stmt());
      if (w == "for") return out.push_back(for_stmt(0, t.begin));
      if (w == "try") return out.push_back(try_stmt());
      if (w == "with") return out.push_back(with_stmt(0, t.begin));
      if (w == "async") {
        std::uint32_t b = t.begin;
        next();
        if (at_kw("def")) return out.push_back(funcdef(make(NodeKind::Decorators, b, b), kAsync, b));
        if (at_kw("for")) return out.push_back(for_stmt(kAsync, b));
        if (at_kw("with")) return out.push_back(with_stmt(kAsync, b));
        fail("invalid syntax after 'async'");
      }
      if (w == "match") {
        std::size_t save = i_;
        std::uint32_t save_end = last_end_;
        try {
          out.push_back(match_stmt());
          return;
        } catch (const SyntaxError&) {
          i_ = save;
          last_end_ = save_end;
        }
      }
    }
    simple_stmt(out);
  }

  void simple_stmt(std::vector<NodePtr>& out) {
    while (true) {
      out.push_back(small_stmt());
      if (at_op(";")) {
        next();
        if (at(TokenKind::Newline)) break;
        continue;
      }
      break;
    }
    if (!at(TokenKind::Newline)) fail("invalid syntax");
    next();
  }

  NodePtr small_stmt() {
    const Token& t = peek();
    std::uint32_t b = t.begin;
    if (t.kind == TokenKind::Name) {
      std::string_view w = t.text;
      if (w == "pass" || w == "break" || w == "continue") {
        next();
        return finish(make(w == "pass" ? NodeKind::Pass : w == "break" ? NodeKind::Break : NodeKind::Continue, b));
      }
      if (w == "return") {
        next();
        auto n = make(NodeKind::Return, b);
        if (can_start_expression()) n->kids.push_back(star_expressions());
        return finish(std::move(n));
      }
      if (w == "raise") {
        next();
        auto n = make(NodeKind::Raise, b);
        if (can_start_expression()) {
          n->kids.push_back(test());
          if (at_kw("from")) {
            next();
            n->kids.push_back(test());
          } else {
            n->kids.push_back(empty_node(last_end_));
          }
        } else {
          n->kids.push_back(empty_node(last_end_));
          n->kids.push_back(empty_node(last_end_));
        }
        return finish(std::move(n));
      }
      if (w == "global" || w == "nonlocal") {
        next();
        auto n = make(w == "global" ? NodeKind::Global : NodeKind::Nonlocal, b);
        do {
          std::uint32_t nb = here();
          auto nm = make(NodeKind::Name, nb);
          nm->value = expect_name();
          n->kids.push_back(finish(std::move(nm)));
        } while (at_op(",") && (next(), true));
        return finish(std::move(n));
      }
      if (w == "del") {
        next();
        auto n = make(NodeKind::Delete, b);
        auto targets = target_list();
        check_store(*targets, true);
        if (targets->kind == NodeKind::Tuple && src_[targets->begin] != '(') {
          for (auto& k : targets->kids) n->kids.push_back(std::move(k));
        } else {
          n->kids.push_back(std::move(targets));
        }
        return finish(std::move(n));
      }
      if (w == "assert") {
        next();
        auto n = make(NodeKind::Assert, b);
        n->kids.push_back(test());
        if (at_op(",")) {
          next();
          n->kids.push_back(test());
        } else {
          n->kids.push_back(empty_node(last_end_));
        }
        return finish(std::move(n));
      }
      if (w == "import") return import_stmt();
      if (w == "from") return from_stmt();
    }
    return expr_stmt();
  }

  NodePtr expr_stmt() {
    std::uint32_t b = here();
    auto first = at_kw("yield") ? yield_expr() : star_expressions();
    if (at_op(":")) {
      next();
      auto n = make(NodeKind::AnnAssign, b);
      if (first->kind == NodeKind::Tuple || first->kind == NodeKind::List)
        fail_at(first->begin, "only single target (not " + std::string(describe(first->kind)) + ") can be annotated");
      if (!single_target(*first)) fail_at(first->begin, "illegal target for annotation");
      n->kids.push_back(std::move(first));
      n->kids.push_back(test());
      if (at_op("=")) {
        next();
        n->kids.push_back(at_kw("yield") ? yield_expr() : star_expressions());
      }
      return finish(std::move(n));
    }
    for (auto op : kAugOps) {
      if (at_op(op)) {
        next();
        auto n = make(NodeKind::AugAssign, b);
        if (!single_target(*first))
          fail_at(first->begin, "'" + std::string(describe(first->kind)) + "' is an illegal expression for augmented assignment");
        n->value = std::string(op);
        n->kids.push_back(std::move(first));
        n->kids.push_back(at_kw("yield") ? yield_expr() : star_expressions());
        return finish(std::move(n));
      }
    }
    if (at_op("=")) {
      auto n = make(NodeKind::Assign, b);
      n->kids.push_back(std::move(first));
      while (at_op("=")) {
        check_store(*n->kids.back(), false);
        next();
        n->kids.push_back(at_kw("yield") ? yield_expr() : star_expressions());
      }
      return finish(std::move(n));
    }
    auto n = make(NodeKind::ExprStmt, b);
    n->kids.push_back(std::move(first));
    return finish(std::move(n));
  }

  NodePtr import_stmt() {
    std::uint32_t b = here();
    expect_kw("import");
    auto n = make(NodeKind::Import, b);
    do {
      std::uint32_t ab = here();
      auto a = make(NodeKind::ImportAlias, ab);
      a->value = dotted();
      if (at_kw("as")) {
        next();
        a->extra = expect_name();
      }
      n->kids.push_back(finish(std::move(a)));
    } while (at_op(",") && (next(), true));
    return finish(std::move(n));
  }

  std::string dotted() {
    std::string s = expect_name();
    while (at_op(".")) {
      next();
      s += ".";
      s += expect_name();
    }
    return s;
  }

  NodePtr from_stmt() {
    std::uint32_t b = here();
    expect_kw("from");
    auto n = make(NodeKind::ImportFrom, b);
    std::uint32_t level = 0;
    while (at_op(".") || at_op("...")) level += static_cast<std::uint32_t>(next().text.size());
    n->flags = level;
    if (!at_kw("import")) n->value = dotted();
    if (level == 0 && n->value.empty()) fail("expected module name");
    expect_kw("import");
    if (at_op("*")) {
      std::uint32_t sb = here();
      next();
      auto a = make(NodeKind::ImportAlias, sb);
      a->value = "*";
      n->kids.push_back(finish(std::move(a)));
      return finish(std::move(n));
    }
    bool paren = at_op("(");
    if (paren) next();
    while (true) {
      std::uint32_t ab = here();
      auto a = make(NodeKind::ImportAlias, ab);
      a->value = expect_name();
      if (at_kw("as")) {
        next();
        a->extra = expect_name();
      }
      n->kids.push_back(finish(std::move(a)));
      if (!at_op(",")) break;
      next();
      if (paren && at_op(")")) break;
      if (!paren && !at(TokenKind::Name)) fail("trailing comma not allowed without surrounding parentheses");
    }
    if (paren) expect_op(")");
    return finish(std::move(n));
  }

  NodePtr suite() {
    expect_op(":");
    auto s = make(NodeKind::Suite, here());
    if (at(TokenKind::Newline)) {
      next();
      if (!at(TokenKind::Indent)) fail("expected an indented block");
      next();
      s->begin = here();
      while (!at(TokenKind::Dedent) && !at(TokenKind::EndMarker)) {
        if (at(TokenKind::Newline)) {
          next();
          continue;
        }
        statement(s->kids);
      }
      std::uint32_t e = last_end_;
      if (at(TokenKind::Dedent)) next();
      s->end = e;
      last_end_ = e;
      return s;
    }
    simple_stmt(s->kids);
    s->end = s->kids.empty() ? s->begin : s->kids.back()->end;
    last_end_ = s->end;
    return s;
  }

  // Ends a compound statement at its final child, not at trailing newlines.
  NodePtr close_compound(NodePtr n) {
    const Node* last = n->kids.empty() ? nullptr : n->kids.back().get();
    for (auto it = n->kids.rbegin(); it != n->kids.rend(); ++it) {
      if (!(*it)->empty()) {
        last = it->get();
        break;
      }
    }
    n->end = last ? std::max(last->end, n->begin) : last_end_;
    return n;
  }

  NodePtr decorated() {
    std::uint32_t b = here();
    auto decos = make(NodeKind::Decorators, b);
    while (at_op("@")) {
      next();
      decos->kids.push_back(named_expr_test());
      if (!at(TokenKind::Newline)) fail("expected newline after decorator");
      next();
    }
    decos->end = last_end_;
    if (at_kw("def")) return funcdef(std::move(decos), 0, b);
    if (at_kw("class")) return classdef(std::move(decos), b);
    if (at_kw("async") && at_kw("def", 1)) {
      next();
      return funcdef(std::move(decos), kAsync, b);
    }
    fail("expected function or class definition after decorator");
  }

  NodePtr funcdef(NodePtr decos, std::uint32_t flags, std::uint32_t b) {
    expect_kw("def");
    auto n = make(NodeKind::FunctionDef, b);
    n->flags = flags;
    n->value = expect_name();
    expect_op("(");
    n->kids.push_back(std::move(decos));
    n->kids.push_back(parameters(true, ")"));
    expect_op(")");
    if (at_op("->")) {
      next();
      n->kids.push_back(test());
    } else {
      n->kids.push_back(empty_node(last_end_));
    }
    n->kids.push_back(suite());
    return close_compound(std::move(n));
  }

  NodePtr parameters(bool annotations, std::string_view closer) {
    auto args = make(NodeKind::Arguments, here());
    ParamKind kind = ParamKind::Normal;
    bool seen_default = false;
    while (!at_op(closer)) {
      std::uint32_t pb = here();
      if (at_op("/")) {
        next();
        for (auto& p : args->kids) p->flags = static_cast<std::uint32_t>(ParamKind::PositionalOnly);
      } else if (at_op("*") || at_op("**")) {
        bool dbl = next().text == "**";
        if (!dbl && (at_op(",") || at_op(closer))) {
          kind = ParamKind::KeywordOnly;
        } else {
          auto p = make(NodeKind::Param, pb);
          p->value = expect_name();
          p->flags = static_cast<std::uint32_t>(dbl ? ParamKind::VarKeywords : ParamKind::VarArgs);
          if (annotations && at_op(":")) {
            next();
            p->kids.push_back(at_op("*") ? star_expr() : test());
          } else {
            p->kids.push_back(empty_node(last_end_));
          }
          p->kids.push_back(empty_node(last_end_));
          args->kids.push_back(finish(std::move(p)));
          if (!dbl) kind = ParamKind::KeywordOnly;
        }
      } else {
        auto p = make(NodeKind::Param, pb);
        p->value = expect_name();
        p->flags = static_cast<std::uint32_t>(kind);
        if (annotations && at_op(":")) {
          next();
          p->kids.push_back(test());
        } else {
          p->kids.push_back(empty_node(last_end_));
        }
        if (at_op("=")) {
          next();
          p->kids.push_back(test());
          seen_default = true;
        } else {
          if (seen_default && kind == ParamKind::Normal) fail("non-default argument follows default argument");
          p->kids.push_back(empty_node(last_end_));
        }
        args->kids.push_back(finish(std::move(p)));
      }
      if (!at_op(",")) break;
      next();
    }
    return finish(std::move(args));
  }

  NodePtr classdef(NodePtr decos, std::uint32_t b) {
    expect_kw("class");
    auto n = make(NodeKind::ClassDef, b);
    n->value = expect_name();
    n->kids.push_back(std::move(decos));
    if (at_op("(")) {
      next();
      n->kids.push_back(arglist(here()));
      expect_op(")");
    } else {
      n->kids.push_back(make(NodeKind::ArgList, last_end_, last_end_));
    }
    n->kids.push_back(suite());
    return close_compound(std::move(n));
  }

  NodePtr if_stmt() {
    std::uint32_t b = here();
    next();  // 'if' or 'elif'
    auto n = make(NodeKind::If, b);
    n->kids.push_back(named_expr_test());
    n->kids.push_back(suite());
    if (at_kw("elif")) {
      auto orelse = make(NodeKind::Suite, here());
      orelse->kids.push_back(if_stmt());
      orelse->end = orelse->kids.back()->end;
      n->kids.push_back(std::move(orelse));
    } else if (at_kw("else")) {
      next();
      n->kids.push_back(suite());
    } else {
      n->kids.push_back(empty_node(last_end_));
    }
    return close_compound(std::move(n));
  }

  NodePtr while_stmt() {
    std::uint32_t b = here();
    next();
    auto n = make(NodeKind::While, b);
    n->kids.push_back(named_expr_test());
    n->kids.push_back(suite());
    n->kids.push_back(else_suite());
    return close_compound(std::move(n));
  }

  NodePtr else_suite() {
    if (at_kw("else")) {
      next();
      return suite();
    }
    return empty_node(last_end_);
  }

  NodePtr for_stmt(std::uint32_t flags, std::uint32_t b) {
    expect_kw("for");
    auto n = make(NodeKind::For, b);
    n->flags = flags;
    n->kids.push_back(target_list());
    check_store(*n->kids.back(), false);
    expect_kw("in");
    n->kids.push_back(star_expressions());
    n->kids.push_back(suite());
    n->kids.push_back(else_suite());
    return close_compound(std::move(n));
  }

  NodePtr try_stmt() {
    std::uint32_t b = here();
    expect_kw("try");
    auto n = make(NodeKind::Try, b);
    n->kids.push_back(suite());
    bool any_handler = false;
    while (at_kw("except")) {
      any_handler = true;
      std::uint32_t hb = here();
      next();
      auto h = make(NodeKind::ExceptHandler, hb);
      if (at_op("*")) {
        next();
        n->flags |= kTryStar;
      }
      if (!at_op(":")) {
        h->kids.push_back(test());
        if (at_op(",")) {
          auto tup = make(NodeKind::Tuple, h->kids.back()->begin);
          tup->kids.push_back(std::move(h->kids.back()));
          while (at_op(",")) {
            next();
            tup->kids.push_back(test());
          }
          h->kids.back() = finish(std::move(tup));
        }
        if (at_kw("as")) {
          next();
          h->value = expect_name();
        }
      } else {
        h->kids.push_back(empty_node(last_end_));
      }
      h->kids.push_back(suite());
      n->kids.push_back(close_compound(std::move(h)));
    }
    n->kids.push_back(else_suite());
    if (at_kw("finally")) {
      next();
      n->kids.push_back(suite());
    } else {
      if (!any_handler) fail("expected 'except' or 'finally' block");
      n->kids.push_back(empty_node(last_end_));
    }
    return close_compound(std::move(n));
  }

  NodePtr with_stmt(std::uint32_t flags, std::uint32_t b) {
    expect_kw("with");
    auto n = make(NodeKind::With, b);
    n->flags = flags;
    bool parsed = false;
    if (at_op("(")) {
      std::size_t save = i_;
      std::uint32_t save_end = last_end_;
      try {
        next();
        std::vector<NodePtr> items;
        while (!at_op(")")) {
          items.push_back(with_item());
          if (!at_op(",")) break;
          next();
        }
        expect_op(")");
        if (!at_op(":")) fail("not a parenthesized with-item list");
        for (auto& it : items) n->kids.push_back(std::move(it));
        parsed = true;
      } catch (const SyntaxError&) {
        i_ = save;
        last_end_ = save_end;
        n->kids.clear();
      }
    }
    if (!parsed) {
      do {
        n->kids.push_back(with_item());
      } while (at_op(",") && (next(), true));
    }
    n->kids.push_back(suite());
    return close_compound(std::move(n));
  }

  NodePtr with_item() {
    auto it = make(NodeKind::WithItem, here());
    it->kids.push_back(test());
    if (at_kw("as")) {
      next();
      it->kids.push_back(target());
      check_store(*it->kids.back(), false);
    } else {
      it->kids.push_back(empty_node(last_end_));
    }
    return finish(std::move(it));
  }

  // ---- match statement ------------------------------------------------------

  NodePtr match_stmt() {
    std::uint32_t b = here();
    next();  // 'match'
    auto n = make(NodeKind::Match, b);
    n->kids.push_back(star_named_expressions());
    expect_op(":");
    if (!at(TokenKind::Newline)) fail("expected newline after match subject");
    next();
    if (!at(TokenKind::Indent)) fail("expected indented case block");
    next();
    while (at_kw("case")) {
      std::uint32_t cb = here();
      next();
      auto c = make(NodeKind::MatchCase, cb);
      c->kids.push_back(patterns());
      if (at_kw("if")) {
        next();
        c->kids.push_back(named_expr_test());
      } else {
        c->kids.push_back(empty_node(last_end_));
      }
      c->kids.push_back(suite());
      n->kids.push_back(close_compound(std::move(c)));
      while (at(TokenKind::Newline)) next();
    }
    if (n->kids.size() < 2) fail("match statement requires at least one case");
    if (!at(TokenKind::Dedent)) fail("expected 'case'");
    next();
    return close_compound(std::move(n));
  }

  NodePtr patterns() {
    std::uint32_t b = here();
    auto first = as_pattern(true);
    if (!at_op(",")) return first;
    auto seq = make(NodeKind::PatternSequence, b);
    seq->kids.push_back(std::move(first));
    while (at_op(",")) {
      next();
      if (at_op(":") || at_kw("if")) break;
      seq->kids.push_back(as_pattern(true));
    }
    return finish(std::move(seq));
  }

  NodePtr as_pattern(bool allow_star) {
    std::uint32_t b = here();
    if (allow_star && at_op("*")) {
      next();
      auto s = make(NodeKind::PatternStar, b);
      s->value = expect_name();
      return finish(std::move(s));
    }
    auto p = or_pattern();
    if (at_kw("as")) {
      next();
      auto a = make(NodeKind::PatternAs, b);
      a->kids.push_back(std::move(p));
      a->value = expect_name();
      return finish(std::move(a));
    }
    return p;
  }

  NodePtr or_pattern() {
    std::uint32_t b = here();
    auto first = closed_pattern();
    if (!at_op("|")) return first;
    auto o = make(NodeKind::PatternOr, b);
    o->kids.push_back(std::move(first));
    while (at_op("|")) {
      next();
      o->kids.push_back(closed_pattern());
    }
    return finish(std::move(o));
  }

  NodePtr closed_pattern() {
    std::uint32_t b = here();
    const Token& t = peek();
    if (t.kind == TokenKind::Number || t.kind == TokenKind::String || at_op("-") || at_kw("None") ||
        at_kw("True") || at_kw("False")) {
      auto lit = make(NodeKind::PatternLiteral, b);
      lit->kids.push_back(arith());
      return finish(std::move(lit));
    }
    if (t.kind == TokenKind::Name && !is_keyword(t.text)) {
      std::string name = std::string(next().text);
      auto expr = make(NodeKind::Name, b);
      expr->value = name;
      expr = finish(std::move(expr));
      bool dotted_value = false;
      while (at_op(".")) {
        next();
        auto attr = make(NodeKind::Attribute, b);
        attr->value = expect_name();
        attr->kids.push_back(std::move(expr));
        expr = finish(std::move(attr));
        dotted_value = true;
      }
      if (at_op("(")) return class_pattern(std::move(expr), b);
      if (dotted_value) {
        auto v = make(NodeKind::PatternValue, b);
        v->kids.push_back(std::move(expr));
        return finish(std::move(v));
      }
      auto cap = make(NodeKind::PatternCapture, b);
      cap->value = name;
      return finish(std::move(cap));
    }
    if (at_op("(") || at_op("[")) {
      std::string close = at_op("(") ? ")" : "]";
      bool paren = close == ")";
      next();
      auto seq = make(NodeKind::PatternSequence, b);
      bool comma = false;
      while (!at_op(close)) {
        seq->kids.push_back(as_pattern(true));
        if (!at_op(",")) break;
        next();
        comma = true;
      }
      expect_op(close);
      if (paren && !comma && seq->kids.size() == 1 && seq->kids[0]->kind != NodeKind::PatternStar) {
        return std::move(seq->kids[0]);
      }
      return finish(std::move(seq));
    }
    if (at_op("{")) {
      next();
      auto m = make(NodeKind::PatternMapping, b);
      while (!at_op("}")) {
        if (at_op("**")) {
          next();
          m->extra = expect_name();
        } else {
          auto key = closed_pattern();
          expect_op(":");
          m->kids.push_back(std::move(key));
          m->kids.push_back(as_pattern(false));
        }
        if (!at_op(",")) break;
        next();
      }
      expect_op("}");
      return finish(std::move(m));
    }
    fail("invalid pattern");
  }

  NodePtr class_pattern(NodePtr cls, std::uint32_t b) {
    expect_op("(");
    auto c = make(NodeKind::PatternClass, b);
    c->kids.push_back(std::move(cls));
    while (!at_op(")")) {
      if (peek().kind == TokenKind::Name && at_op("=", 1)) {
        auto kw = make(NodeKind::PatternKeyword, here());
        kw->value = expect_name();
        next();
        kw->kids.push_back(as_pattern(false));
        c->kids.push_back(finish(std::move(kw)));
      } else {
        c->kids.push_back(as_pattern(false));
      }
      if (!at_op(",")) break;
      next();
    }
    expect_op(")");
    return finish(std::move(c));
  }

  // ---- expressions ----------------------------------------------------------

  NodePtr tuple_of(NodePtr first, std::uint32_t b, const std::function<NodePtr()>& element) {
    if (!at_op(",")) return first;
    auto tup = make(NodeKind::Tuple, b);
    tup->kids.push_back(std::move(first));
    while (at_op(",")) {
      next();
      if (!can_start_expression()) break;
      tup->kids.push_back(element());
    }
    return finish(std::move(tup));
  }

  NodePtr star_or_test() { return at_op("*") ? star_expr() : test(); }
  NodePtr star_or_named() { return at_op("*") ? star_expr() : named_expr_test(); }

  NodePtr star_expressions() {
    std::uint32_t b = here();
    return tuple_of(star_or_test(), b, [this] { return star_or_test(); });
  }

  NodePtr star_named_expressions() {
    std::uint32_t b = here();
    return tuple_of(star_or_named(), b, [this] { return star_or_named(); });
  }

  NodePtr target() { return at_op("*") ? star_expr() : bitor_expr(); }

  NodePtr target_list() {
    std::uint32_t b = here();
    return tuple_of(target(), b, [this] { return target(); });
  }

  NodePtr star_expr() {
    std::uint32_t b = here();
    expect_op("*");
    auto s = make(NodeKind::Starred, b);
    s->kids.push_back(bitor_expr());
    return finish(std::move(s));
  }

  NodePtr named_expr_test() {
    if (peek().kind == TokenKind::Name && at_op(":=", 1) && !is_keyword(peek().text)) {
      std::uint32_t b = here();
      auto target = make(NodeKind::Name, b);
      target->value = std::string(next().text);
      target = finish(std::move(target));
      next();
      auto n = make(NodeKind::NamedExpr, b);
      n->kids.push_back(std::move(target));
      n->kids.push_back(test());
      return finish(std::move(n));
    }
    return test();
  }

  NodePtr test() {
    if (at_kw("lambda")) return lambda(true);
    std::uint32_t b = here();
    auto body = or_test();
    if (at_kw("if")) {
      next();
      auto n = make(NodeKind::IfExp, b);
      auto cond = or_test();
      expect_kw("else");
      n->kids.push_back(std::move(body));
      n->kids.push_back(std::move(cond));
      n->kids.push_back(test());
      return finish(std::move(n));
    }
    return body;
  }

  NodePtr test_nocond() { return at_kw("lambda") ? lambda(false) : or_test(); }

  NodePtr lambda(bool allow_cond) {
    std::uint32_t b = here();
    expect_kw("lambda");
    auto n = make(NodeKind::Lambda, b);
    n->kids.push_back(parameters(false, ":"));
    expect_op(":");
    n->kids.push_back(allow_cond ? test() : test_nocond());
    return finish(std::move(n));
  }

  NodePtr bool_chain(std::string_view op, NodePtr (Parser::*sub)()) {
    std::uint32_t b = here();
    auto first = (this->*sub)();
    if (!at_kw(op)) return first;
    auto n = make(NodeKind::BoolOp, b);
    n->value = std::string(op);
    n->kids.push_back(std::move(first));
    while (at_kw(op)) {
      next();
      n->kids.push_back((this->*sub)());
    }
    return finish(std::move(n));
  }

  NodePtr or_test() { return bool_chain("or", &Parser::and_test); }
  NodePtr and_test() { return bool_chain("and", &Parser::not_test); }

  NodePtr not_test() {
    if (at_kw("not")) {
      std::uint32_t b = here();
      next();
      auto n = make(NodeKind::UnaryOp, b);
      n->value = "not";
      n->kids.push_back(not_test());
      return finish(std::move(n));
    }
    return comparison();
  }

  std::string comp_op() {
    const Token& t = peek();
    if (t.kind == TokenKind::Op &&
        (t.text == "<" || t.text == ">" || t.text == "==" || t.text == ">=" || t.text == "<=" || t.text == "!=")) {
      return std::string(t.text);
    }
    if (at_kw("in")) return "in";
    if (at_kw("not") && at_kw("in", 1)) return "not in";
    if (at_kw("is")) return at_kw("not", 1) ? "is not" : "is";
    return {};
  }

  NodePtr comparison() {
    std::uint32_t b = here();
    auto first = bitor_expr();
    std::string op = comp_op();
    if (op.empty()) return first;
    auto n = make(NodeKind::Compare, b);
    n->kids.push_back(std::move(first));
    while (!op.empty()) {
      next();
      if (op == "not in" || op == "is not") next();
      if (!n->extra.empty()) n->extra += ",";
      n->extra += op;
      n->kids.push_back(bitor_expr());
      op = comp_op();
    }
    return finish(std::move(n));
  }

  NodePtr binary(std::initializer_list<std::string_view> ops, NodePtr (Parser::*sub)()) {
    std::uint32_t b = here();
    auto left = (this->*sub)();
    while (true) {
      const Token& t = peek();
      if (t.kind != TokenKind::Op || std::find(ops.begin(), ops.end(), t.text) == ops.end()) break;
      next();
      auto n = make(NodeKind::BinOp, b);
      n->value = std::string(t.text);
      n->kids.push_back(std::move(left));
      n->kids.push_back((this->*sub)());
      left = finish(std::move(n));
    }
    return left;
  }

  NodePtr bitor_expr() { return binary({"|"}, &Parser::xor_expr); }
  NodePtr xor_expr() { return binary({"^"}, &Parser::and_expr); }
  NodePtr and_expr() { return binary({"&"}, &Parser::shift_expr); }
  NodePtr shift_expr() { return binary({"<<", ">>"}, &Parser::arith); }
  NodePtr arith() { return binary({"+", "-"}, &Parser::term); }
  NodePtr term() { return binary({"*", "@", "/", "%", "//"}, &Parser::factor); }

  NodePtr factor() {
    if (at_op("+") || at_op("-") || at_op("~")) {
      std::uint32_t b = here();
      auto n = make(NodeKind::UnaryOp, b);
      n->value = std::string(next().text);
      n->kids.push_back(factor());
      return finish(std::move(n));
    }
    return power();
  }

  NodePtr power() {
    std::uint32_t b = here();
    NodePtr base;
    if (at_kw("await")) {
      next();
      auto n = make(NodeKind::Await, b);
      n->kids.push_back(primary());
      base = finish(std::move(n));
    } else {
      base = primary();
    }
    if (at_op("**")) {
      next();
      auto n = make(NodeKind::BinOp, b);
      n->value = "**";
      n->kids.push_back(std::move(base));
      n->kids.push_back(factor());
      return finish(std::move(n));
    }
    return base;
  }

  NodePtr primary() {
    std::uint32_t b = here();
    auto e = atom();
    while (true) {
      if (at_op("(")) {
        next();
        auto call = make(NodeKind::Call, b);
        call->kids.push_back(std::move(e));
        call->kids.push_back(arglist(here()));
        expect_op(")");
        e = finish(std::move(call));
      } else if (at_op("[")) {
        next();
        auto sub = make(NodeKind::Subscript, b);
        sub->kids.push_back(std::move(e));
        sub->kids.push_back(subscripts());
        expect_op("]");
        e = finish(std::move(sub));
      } else if (at_op(".")) {
        next();
        auto attr = make(NodeKind::Attribute, b);
        attr->value = expect_name();
        attr->kids.push_back(std::move(e));
        e = finish(std::move(attr));
      } else {
        break;
      }
    }
    return e;
  }

  NodePtr arglist(std::uint32_t b) {
    auto args = make(NodeKind::ArgList, b, b);
    bool keyword = false, unpacked = false;
    const Node* bare_generator = nullptr;
    while (!at_op(")")) {
      std::uint32_t ab = here();
      if (at_op("*")) {
        if (unpacked) fail("iterable argument unpacking follows keyword argument unpacking");
        args->kids.push_back(star_expr_test());
      } else if (at_op("**")) {
        unpacked = true;
        next();
        auto d = make(NodeKind::DoubleStarred, ab);
        d->kids.push_back(test());
        args->kids.push_back(finish(std::move(d)));
      } else if (peek().kind == TokenKind::Name && at_op("=", 1) && !is_keyword(peek().text)) {
        keyword = true;
        auto kw = make(NodeKind::Keyword, ab);
        kw->value = std::string(next().text);
        next();
        kw->kids.push_back(test());
        args->kids.push_back(finish(std::move(kw)));
      } else {
        if (unpacked) fail("positional argument follows keyword argument unpacking");
        if (keyword) fail("positional argument follows keyword argument");
        auto e = named_expr_test();
        if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
          auto gen = make(NodeKind::GeneratorExp, ab);
          gen->kids.push_back(std::move(e));
          comprehension_clauses(*gen);
          e = finish(std::move(gen));
          bare_generator = e.get();
        }
        args->kids.push_back(std::move(e));
      }
      if (!at_op(",")) break;
      next();
    }
    if (bare_generator && (args->kids.size() > 1 || at_op(",")))
      fail_at(bare_generator->begin, "Generator expression must be parenthesized");
    args->end = last_end_;
    return args;
  }

  NodePtr star_expr_test() {
    std::uint32_t b = here();
    expect_op("*");
    auto s = make(NodeKind::Starred, b);
    s->kids.push_back(test());
    return finish(std::move(s));
  }

  NodePtr subscripts() {
    std::uint32_t b = here();
    auto first = subscript();
    if (!at_op(",")) return first;
    auto tup = make(NodeKind::Tuple, b);
    tup->kids.push_back(std::move(first));
    while (at_op(",")) {
      next();
      if (at_op("]")) break;
      tup->kids.push_back(subscript());
    }
    return finish(std::move(tup));
  }

  NodePtr subscript() {
    std::uint32_t b = here();
    if (at_op("*")) return star_expr();
    NodePtr lower = at_op(":") ? empty_node(b) : named_expr_test();
    if (!at_op(":")) return lower;
    next();
    auto sl = make(NodeKind::Slice, b);
    sl->kids.push_back(std::move(lower));
    sl->kids.push_back(at_op("]") || at_op(",") || at_op(":") ? empty_node(last_end_) : test());
    if (at_op(":")) {
      next();
      sl->kids.push_back(at_op("]") || at_op(",") ? empty_node(last_end_) : test());
    } else {
      sl->kids.push_back(empty_node(last_end_));
    }
    return finish(std::move(sl));
  }

  void comprehension_clauses(Node& comp) {
    while (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      std::uint32_t cb = here();
      auto c = make(NodeKind::Comprehension, cb);
      if (at_kw("async")) {
        next();
        c->flags |= kAsync;
      }
      expect_kw("for");
      c->kids.push_back(target_list());
      check_store(*c->kids.back(), false);
      expect_kw("in");
      c->kids.push_back(or_test());
      while (at_kw("if")) {
        next();
        c->kids.push_back(test_nocond());
      }
      comp.kids.push_back(finish(std::move(c)));
    }
  }

  bool at_comp_for() const { return at_kw("for") || (at_kw("async") && at_kw("for", 1)); }

  NodePtr yield_expr() {
    std::uint32_t b = here();
    expect_kw("yield");
    if (at_kw("from")) {
      next();
      auto n = make(NodeKind::YieldFrom, b);
      n->kids.push_back(test());
      return finish(std::move(n));
    }
    auto n = make(NodeKind::Yield, b);
    if (can_start_expression()) n->kids.push_back(star_expressions());
    return finish(std::move(n));
  }

  NodePtr atom() {
    const Token& t = peek();
    std::uint32_t b = t.begin;
    switch (t.kind) {
      case TokenKind::Name: {
        if (t.text == "None" || t.text == "True" || t.text == "False") {
          next();
          auto c = make(NodeKind::Constant, b, t.end);
          c->value = std::string(t.text);
          c->flags = static_cast<std::uint32_t>(t.text == "None"   ? ConstKind::None
                                                : t.text == "True" ? ConstKind::True
                                                                   : ConstKind::False);
          return c;
        }
        if (is_keyword(t.text)) fail("invalid syntax");
        next();
        auto n = make(NodeKind::Name, b, t.end);
        n->value = std::string(t.text);
        return n;
      }
      case TokenKind::Number: {
        next();
        auto c = make(NodeKind::Constant, b, t.end);
        c->value = std::string(t.text);
        c->flags = static_cast<std::uint32_t>(ConstKind::Number);
        return c;
      }
      case TokenKind::String:
        return strings();
      case TokenKind::Op:
        break;
      default:
        fail("invalid syntax");
    }
    if (at_op("...")) {
      next();
      auto c = make(NodeKind::Constant, b, last_end_);
      c->value = "...";
      c->flags = static_cast<std::uint32_t>(ConstKind::Ellipsis);
      return c;
    }
    if (at_op("(")) {
      next();
      if (at_op(")")) {
        next();
        return finish(make(NodeKind::Tuple, b));
      }
      if (at_kw("yield")) {
        auto y = yield_expr();
        expect_op(")");
        return y;
      }
      auto first = star_or_named();
      if (at_comp_for()) {
        auto gen = make(NodeKind::GeneratorExp, b);
        gen->kids.push_back(std::move(first));
        comprehension_clauses(*gen);
        expect_op(")");
        return finish(std::move(gen));
      }
      if (at_op(",")) {
        auto tup = make(NodeKind::Tuple, b);
        tup->kids.push_back(std::move(first));
        while (at_op(",")) {
          next();
          if (at_op(")")) break;
          tup->kids.push_back(star_or_named());
        }
        expect_op(")");
        return finish(std::move(tup));
      }
      if (first->kind == NodeKind::Starred) fail_at(first->begin, "cannot use starred expression here");
      expect_op(")");
      return first;
    }
    if (at_op("[")) {
      next();
      auto list = make(NodeKind::List, b);
      if (at_op("]")) {
        next();
        return finish(std::move(list));
      }
      auto first = star_or_named();
      if (at_comp_for()) {
        auto comp = make(NodeKind::ListComp, b);
        comp->kids.push_back(std::move(first));
        comprehension_clauses(*comp);
        expect_op("]");
        return finish(std::move(comp));
      }
      list->kids.push_back(std::move(first));
      while (at_op(",")) {
        next();
        if (at_op("]")) break;
        list->kids.push_back(star_or_named());
      }
      expect_op("]");
      return finish(std::move(list));
    }
    if (at_op("{")) return braces();
    fail("invalid syntax");
  }

  NodePtr braces() {
    std::uint32_t b = here();
    expect_op("{");
    if (at_op("}")) {
      next();
      return finish(make(NodeKind::Dict, b));
    }
    auto dict_item = [this](Node& d) {
      if (at_op("**")) {
        std::uint32_t sb = here();
        next();
        d.kids.push_back(empty_node(sb));
        d.kids.push_back(bitor_expr());
        return;
      }
      d.kids.push_back(test());
      expect_op(":");
      d.kids.push_back(test());
    };
    if (at_op("**")) {
      auto d = make(NodeKind::Dict, b);
      dict_item(*d);
      while (at_op(",")) {
        next();
        if (at_op("}")) break;
        dict_item(*d);
      }
      expect_op("}");
      return finish(std::move(d));
    }
    auto first = star_or_named();
    if (at_op(":")) {
      next();
      auto value = test();
      if (at_comp_for()) {
        auto comp = make(NodeKind::DictComp, b);
        comp->kids.push_back(std::move(first));
        comp->kids.push_back(std::move(value));
        comprehension_clauses(*comp);
        expect_op("}");
        return finish(std::move(comp));
      }
      auto d = make(NodeKind::Dict, b);
      d->kids.push_back(std::move(first));
      d->kids.push_back(std::move(value));
      while (at_op(",")) {
        next();
        if (at_op("}")) break;
        dict_item(*d);
      }
      expect_op("}");
      return finish(std::move(d));
    }
    if (at_comp_for()) {
      auto comp = make(NodeKind::SetComp, b);
      comp->kids.push_back(std::move(first));
      comprehension_clauses(*comp);
      expect_op("}");
      return finish(std::move(comp));
    }
    auto s = make(NodeKind::Set, b);
    s->kids.push_back(std::move(first));
    while (at_op(",")) {
      next();
      if (at_op("}")) break;
      s->kids.push_back(star_or_named());
    }
    expect_op("}");
    return finish(std::move(s));
  }

  NodePtr strings() {
    std::uint32_t b = here();
    std::vector<NodePtr> fields;
    bool fstring = false;
    bool bytes = false, text = false;
    while (at(TokenKind::String)) {
      const Token& t = next();
      std::size_t q = t.text.find_first_of("'\"");
      std::string_view prefix = t.text.substr(0, q);
      bool is_f = prefix.find_first_of("fF") != std::string_view::npos;
      bool is_b = prefix.find_first_of("bB") != std::string_view::npos;
      bool raw = prefix.find_first_of("rR") != std::string_view::npos;
      (is_b ? bytes : text) = true;
      if (bytes && text) fail_at(t.begin, "cannot mix bytes and nonbytes literals");
      bool triple = t.text.size() >= q + 6 && t.text[q + 1] == t.text[q] && t.text[q + 2] == t.text[q];
      std::size_t quote = triple ? 3 : 1;
      std::string problem = literal_problem(t.text.substr(q + quote, t.text.size() - q - 2 * quote), is_b, raw);
      if (!problem.empty()) fail_at(t.begin, problem);
      if (is_f) {
        fstring = true;
        fstring_fields(t, fields, raw);
      }
    }
    auto n = make(fstring ? NodeKind::JoinedStr : NodeKind::Constant, b, last_end_);
    n->value = std::string(src_.substr(b, last_end_ - b));
    n->flags = static_cast<std::uint32_t>(bytes ? ConstKind::Bytes : ConstKind::String);
    n->kids = std::move(fields);
    return n;
  }

  // Embedded expressions of one f-string token, with spans mapped back to
  // the enclosing source.
  void fstring_fields(const Token& t, std::vector<NodePtr>& out, bool raw) {
    std::string_view text = t.text;
    std::size_t q = text.find_first_of("'\"");
    char quote = text[q];
    bool triple = text.size() >= q + 6 && text[q + 1] == quote && text[q + 2] == quote;
    std::size_t body_begin = q + (triple ? 3 : 1);
    std::size_t body_end = text.size() - (triple ? 3 : 1);
    std::string_view body = text.substr(0, body_end);
    std::size_t i = body_begin;
    while (i < body.size()) {
      if (!raw && body[i] == '\\' && i + 1 < body.size()) {
        if (body[i + 1] == 'N' && i + 2 < body.size() && body[i + 2] == '{') i = body.find('}', i) + 1;
        else i += body[i + 1] == '\\' ? 2 : 1;
        continue;
      }
      if (body[i] == '{') {
        if (i + 1 < body.size() && body[i + 1] == '{') {
          i += 2;
          continue;
        }
        i = fstring_field(body, i + 1, t, out, 0);
      } else {
        ++i;
      }
    }
  }

  std::size_t fstring_field(std::string_view body, std::size_t start, const Token& t, std::vector<NodePtr>& out,
                            int nesting) {
    if (nesting >= 2) throw SyntaxError("f-string: expressions nested too deeply", t.begin, t.line + line_offset_);
    int depth = 0;
    std::size_t i = start;
    while (i < body.size()) {
      char c = body[i];
      if (c == '\'' || c == '"') {
        bool tri = i + 2 < body.size() && body[i + 1] == c && body[i + 2] == c;
        std::size_t j = i + (tri ? 3 : 1);
        while (j < body.size()) {
          if (body[j] == '\\') {
            j += 2;
            continue;
          }
          if (tri ? body.substr(j, 3) == std::string(3, c) : body[j] == c) break;
          ++j;
        }
        i = j + (tri ? 3 : 1);
        continue;
      }
      if (c == '(' || c == '[' || c == '{') ++depth;
      if ((c == ')' || c == ']' || c == '}') && depth > 0) {
        --depth;
        ++i;
        continue;
      }
      if (depth == 0 && (c == '}' || c == ':' || (c == '!' && (i + 1 >= body.size() || body[i + 1] != '=')))) break;
      ++i;
    }
    if (i >= body.size()) throw SyntaxError("f-string: expecting '}'", t.begin, t.line + line_offset_);
    std::string_view expr = body.substr(start, i - start);
    std::size_t trimmed = expr.find_last_not_of(" \t\r\n");
    if (trimmed != std::string_view::npos && expr[trimmed] == '=' &&
        (trimmed == 0 || std::string_view("=!<>").find(expr[trimmed - 1]) == std::string_view::npos)) {
      expr = expr.substr(0, trimmed);
    }
    if (expr.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      throw SyntaxError("f-string: empty expression not allowed", t.begin, t.line + line_offset_);
    }
    out.push_back(parse_expression_at(expr, static_cast<std::uint32_t>(t.begin + start), t.line + line_offset_));
    if (body[i] == '!') {
      if (i + 2 >= body.size() || std::string_view("sra").find(body[i + 1]) == std::string_view::npos ||
          (body[i + 2] != ':' && body[i + 2] != '}'))
        throw SyntaxError("f-string: invalid conversion character: expected 's', 'r', or 'a'", t.begin,
                          t.line + line_offset_);
      i += 2;
    }
    if (i < body.size() && body[i] == ':') {
      ++i;
      while (i < body.size() && body[i] != '}') {
        if (body[i] == '{') {
          i = fstring_field(body, i + 1, t, out, nesting + 1);
        } else {
          ++i;
        }
      }
    }
    if (i >= body.size() || body[i] != '}') throw SyntaxError("f-string: expecting '}'", t.begin, t.line + line_offset_);
    return i + 1;
  }

  std::string_view src_;
  std::uint32_t line_offset_;
  std::vector<Token> toks_;
  std::size_t i_ = 0;
  std::uint32_t last_end_ = 0;
};

NodePtr parse_expression_at(std::string_view text, std::uint32_t base, std::uint32_t line) {
  std::string wrapped;
  wrapped.reserve(text.size() + 2);
  wrapped += '(';
  wrapped += text;
  wrapped += ')';
  Parser p(wrapped, line > 0 ? line - 1 : 0);
  NodePtr e;
  try {
    e = p.single_expression();
  } catch (const SyntaxError& err) {
    throw SyntaxError(std::string("f-string: ") + err.what(), base, line);
  }
  shift_spans(*e, static_cast<std::int64_t>(base) - 1);
  return e;
}

}  // namespace

NodePtr parse_module(std::string_view source) { return Parser(source).file(); }

NodePtr parse_expression(std::string_view source) { return parse_expression_at(source, 0, 1); }

std::string_view kind_name(NodeKind kind) noexcept {
  static constexpr std::string_view kNames[] = {
      "Module", "Suite", "FunctionDef", "ClassDef", "Return", "Delete", "Assign", "AugAssign", "AnnAssign",
      "For", "While", "If", "With", "WithItem", "Raise", "Try", "ExceptHandler", "Assert", "Import", "ImportFrom",
      "ImportAlias", "Global", "Nonlocal", "ExprStmt", "Pass", "Break", "Continue", "Match", "MatchCase",
      "PatternValue", "PatternLiteral", "PatternCapture", "PatternSequence", "PatternStar", "PatternMapping",
      "PatternClass", "PatternKeyword", "PatternOr", "PatternAs",
      "BoolOp", "NamedExpr", "BinOp", "UnaryOp", "Lambda", "IfExp", "Dict", "Set", "List", "Tuple",
      "ListComp", "SetComp", "DictComp", "GeneratorExp", "Comprehension", "Await", "Yield", "YieldFrom",
      "Compare", "Call", "ArgList", "Keyword", "JoinedStr", "Constant", "Attribute", "Subscript", "Slice",
      "Starred", "DoubleStarred", "Name", "Arguments", "Param", "Decorators", "Empty"};
  static_assert(std::size(kNames) == static_cast<std::size_t>(NodeKind::Empty) + 1);
  return kNames[static_cast<std::size_t>(kind)];
}

const Node* docstring_of(const Node& body) noexcept {
  if (body.kids.empty()) return nullptr;
  const Node& first = *body.kids.front();
  if (first.kind != NodeKind::ExprStmt || first.kids.empty()) return nullptr;
  const Node& e = *first.kids.front();
  if (e.kind == NodeKind::Constant && e.flags == static_cast<std::uint32_t>(ConstKind::String)) return &first;
  return nullptr;
}

std::string dotted_name(const Node& expr) {
  if (expr.kind == NodeKind::Name) return expr.value;
  if (expr.kind == NodeKind::Attribute && !expr.kids.empty()) {
    std::string base = dotted_name(*expr.kids[0]);
    if (base.empty()) return {};
    return base + "." + expr.value;
  }
  return {};
}

}  // namespace blockforge::python
