#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace blockforge::python {

// Syntax tree node kinds. Child layouts (kids) per kind:
//
//   Module            statements...
//   Suite             statements...
//   FunctionDef       [Decorators, Arguments, returns|Empty, Suite]     value=name, flags&kAsync
//   ClassDef          [Decorators, ArgList, Suite]                       value=name
//   Return            [value]?
//   Delete            targets...
//   Assign            [target..., value]
//   AugAssign         [target, value]                                    value=operator
//   AnnAssign         [target, annotation, value?]
//   For               [target, iter, Suite, orelse|Empty]                flags&kAsync
//   While             [test, Suite, orelse|Empty]
//   If                [test, Suite, orelse|Empty]      elif is an orelse Suite holding one If
//   With              [WithItem..., Suite]                               flags&kAsync
//   WithItem          [context, target|Empty]
//   Raise             [exc|Empty, cause|Empty]
//   Try               [Suite, ExceptHandler..., orelse|Empty, finally|Empty]
//   ExceptHandler     [type|Empty, Suite]                                value=bound name or ""
//   Assert            [test, msg|Empty]
//   Import            ImportAlias...
//   ImportFrom        ImportAlias...                                     value=module, flags=level
//   ImportAlias       -                                                  value=dotted name, extra=asname
//   Global, Nonlocal  Name...
//   ExprStmt          [expr]
//   Pass, Break, Continue
//   Match             [subject, MatchCase...]
//   MatchCase         [pattern, guard|Empty, Suite]
//   Pattern*          see parser.cpp; PatternCapture/PatternStar/PatternAs bind `value`
//   BoolOp            operands...                                        value="and"/"or"
//   NamedExpr         [Name, value]
//   BinOp             [left, right]                                      value=operator
//   UnaryOp           [operand]                                          value=operator
//   Lambda            [Arguments, body]
//   IfExp             [body, test, orelse]
//   Dict              [key|Empty, value]...           Empty key means **value
//   Set, List, Tuple  elements...
//   ListComp, SetComp, GeneratorExp  [elt, Comprehension...]
//   DictComp          [key, value, Comprehension...]
//   Comprehension     [target, iter, ifs...]                             flags&kAsync
//   Await, YieldFrom  [value]
//   Yield             [value]?
//   Compare           operands...                                        extra=ops joined by ','
//   Call              [func, ArgList]
//   ArgList           exprs | Keyword | Starred | DoubleStarred
//   Keyword           [value]                                            value=arg name
//   JoinedStr         embedded expressions...                            value=source text
//   Constant          -                                                  value=source text, flags=ConstKind
//   Attribute         [object]                                           value=attr
//   Subscript         [object, index]
//   Slice             [lower|Empty, upper|Empty, step|Empty]
//   Starred, DoubleStarred  [value]
//   Name              -                                                  value=identifier
//   Arguments         Param...
//   Param             [annotation|Empty, default|Empty]                  value=name, flags=ParamKind
//   Decorators        exprs...
enum class NodeKind : std::uint8_t {
  Module, Suite, FunctionDef, ClassDef, Return, Delete, Assign, AugAssign, AnnAssign,
  For, While, If, With, WithItem, Raise, Try, ExceptHandler, Assert, Import, ImportFrom,
  ImportAlias, Global, Nonlocal, ExprStmt, Pass, Break, Continue, Match, MatchCase,
  PatternValue, PatternLiteral, PatternCapture, PatternSequence, PatternStar, PatternMapping,
  PatternClass, PatternKeyword, PatternOr, PatternAs,
  BoolOp, NamedExpr, BinOp, UnaryOp, Lambda, IfExp, Dict, Set, List, Tuple,
  ListComp, SetComp, DictComp, GeneratorExp, Comprehension, Await, Yield, YieldFrom,
  Compare, Call, ArgList, Keyword, JoinedStr, Constant, Attribute, Subscript, Slice,
  Starred, DoubleStarred, Name, Arguments, Param, Decorators, Empty,
};

std::string_view kind_name(NodeKind kind) noexcept;

enum NodeFlags : std::uint32_t {
  kAsync = 1u << 0,
  kTryStar = 1u << 1,
};

enum class ConstKind : std::uint32_t { Number, String, Bytes, None, True, False, Ellipsis };
enum class ParamKind : std::uint32_t { PositionalOnly, Normal, VarArgs, KeywordOnly, VarKeywords };

struct Node;
using NodePtr = std::unique_ptr<Node>;

struct Node {
  NodeKind kind = NodeKind::Empty;
  std::uint32_t flags = 0;
  std::uint32_t begin = 0;  // byte span in the parsed source
  std::uint32_t end = 0;
  std::string value;
  std::string extra;
  std::vector<NodePtr> kids;

  bool empty() const noexcept { return kind == NodeKind::Empty; }
  const Node& kid(std::size_t i) const { return *kids.at(i); }
};

inline bool is_statement(NodeKind k) noexcept {
  return k >= NodeKind::FunctionDef && k <= NodeKind::Match && k != NodeKind::WithItem &&
         k != NodeKind::ExceptHandler && k != NodeKind::ImportAlias;
}

inline bool is_pattern(NodeKind k) noexcept {
  return k >= NodeKind::PatternValue && k <= NodeKind::PatternAs;
}

// Docstring position: a body whose first statement is a bare string constant.
const Node* docstring_of(const Node& suite_or_module) noexcept;

// Dotted text for Name/Attribute chains ("torch.nn.Module"); empty otherwise.
std::string dotted_name(const Node& expr);

}  // namespace blockforge::python
