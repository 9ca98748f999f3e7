#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "blockforge/python/parser.hpp"
#include "blockforge/python/scope.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;
using namespace blockforge::python;
using blockforge::testing::read_file;

namespace {

void collect_names(const Node& n, std::vector<std::pair<std::string, std::uint32_t>>& out) {
  if (n.kind == NodeKind::Global || n.kind == NodeKind::Nonlocal) return;
  if (n.kind == NodeKind::Name) out.emplace_back(n.value, n.begin);
  for (const auto& k : n.kids) collect_names(*k, out);
}

bool parses(std::string_view src) {
  try {
    parse_module(src);
    return true;
  } catch (const SyntaxError&) {
    return false;
  }
}

bool valid_utf8(const std::string& s) {
  try {
    (void)nlohmann::json(s).dump();
    return true;
  } catch (const nlohmann::json::exception&) {
    return false;
  }
}

nlohmann::json oracle(const nlohmann::json& cases) {
  auto r = blockforge::testing::run_oracle("ast_oracle.py", cases.dump());
  if (!r.ok()) throw std::runtime_error("ast oracle failed: " + r.err);
  return nlohmann::json::parse(r.out);
}

std::vector<fs::path> reference_sources() {
  std::vector<fs::path> out;
  fs::path stdlib = "/usr/lib/python3.10";
  if (fs::exists(stdlib))
    for (const auto& e : fs::directory_iterator(stdlib))
      if (e.path().extension() == ".py") out.push_back(e.path());
  for (const auto& e : fs::recursive_directory_iterator(blockforge::testing::corpus_dir()))
    if (e.path().extension() == ".py") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Parser, AgreesWithCPythonOnReferenceSources) {
  auto files = reference_sources();
  ASSERT_GT(files.size(), 20u);
  nlohmann::json cases = nlohmann::json::array();
  std::vector<std::string> texts;
  for (const auto& f : files) {
    std::string t = read_file(f);
    if (!valid_utf8(t)) continue;
    cases.push_back({{"id", f.string()}, {"text", t}});
    texts.push_back(std::move(t));
  }
  auto ref = oracle(cases);
  ASSERT_EQ(ref.size(), texts.size());
  std::size_t compared = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& r = ref[i];
    SCOPED_TRACE(r["id"].get<std::string>());
    bool ours = parses(texts[i]);
    ASSERT_EQ(ours, r["ok"].get<bool>());
    if (!ours) continue;
    NodePtr mod = parse_module(texts[i]);
    ASSERT_EQ(mod->kids.size(), r["stmts"].size());
    for (std::size_t s = 0; s < mod->kids.size(); ++s) {
      const Node& st = *mod->kids[s];
      EXPECT_EQ(kind_name(st.kind), r["stmts"][s][0].get<std::string>()) << "statement " << s;
      EXPECT_EQ(st.begin, r["stmts"][s][1].get<std::uint32_t>()) << "statement " << s;
      EXPECT_EQ(st.end, r["stmts"][s][2].get<std::uint32_t>()) << "statement " << s;
    }
    std::vector<std::pair<std::string, std::uint32_t>> names;
    collect_names(*mod, names);
    std::sort(names.begin(), names.end());
    std::vector<std::pair<std::string, std::uint32_t>> want;
    for (const auto& n : r["names"]) want.emplace_back(n[0].get<std::string>(), n[1].get<std::uint32_t>());
    EXPECT_EQ(names, want);
    ++compared;
  }
  EXPECT_GT(compared, 20u);
}

// Random single-token damage to valid sources: accept/reject must agree.
TEST(Parser, MutationsAgreeWithCPython) {
  auto files = reference_sources();
  std::mt19937_64 rng(7);
  const std::vector<std::string> junk = {":", ")", "(", "def", "=", "]", "\n    ", "lambda", ",", "@", "else", "'"};
  nlohmann::json cases = nlohmann::json::array();
  std::vector<std::string> texts;
  for (const auto& f : files) {
    std::string t = read_file(f);
    if (!valid_utf8(t) || t.size() < 200 || !parses(t)) continue;
    for (int m = 0; m < 4; ++m) {
      std::string v = t;
      std::size_t at = std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
      if (m % 2 == 0) v.insert(at, junk[rng() % junk.size()]);
      else v.erase(at, 1 + rng() % 3);
      if (!valid_utf8(v)) continue;
      cases.push_back({{"id", f.string() + "#" + std::to_string(m)}, {"text", v}});
      texts.push_back(std::move(v));
    }
  }
  auto ref = oracle(cases);
  std::size_t agree = 0, rejected = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    bool want = ref[i]["ok"].get<bool>();
    rejected += !want;
    if (parses(texts[i]) == want) ++agree;
    else ADD_FAILURE() << ref[i]["id"].get<std::string>() << " cpython: " << ref[i].value("error", "accepted");
  }
  EXPECT_GT(rejected, texts.size() / 4);
  EXPECT_EQ(agree, texts.size());
}

TEST(Parser, ReportsOffendingLine) {
  try {
    parse_module("x = 1\ndef f(:\n    pass\n");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Parser, ModernSyntax) {
  const char* src =
      "match cmd:\n"
      "    case [x, *rest] if x > 0:\n"
      "        pass\n"
      "    case {'k': v, **kw}:\n"
      "        pass\n"
      "    case Point(x=0) | None as p:\n"
      "        pass\n"
      "if (n := len(a)) > 10:\n"
      "    print(f\"{n!r:>{width}} {a[0]=}\")\n"
      "async def g():\n"
      "    async with a as b, c:\n"
      "        await b\n"
      "    return [y async for y in z]\n"
      "def h(a, /, b=1, *args, c, **kw) -> int:\n"
      "    return lambda q=b: q\n"
      "x = r'\\d' '\\n' \\\n"
      "    'tail'\n";
  NodePtr mod = parse_module(src);
  ASSERT_EQ(mod->kids.size(), 5u);
  EXPECT_EQ(mod->kids[0]->kind, NodeKind::Match);
  EXPECT_EQ(mod->kids[2]->kind, NodeKind::FunctionDef);
  EXPECT_TRUE(mod->kids[2]->flags & kAsync);
  EXPECT_EQ(mod->kids[2]->value, "g");
}

TEST(Parser, DecoratedSpanStartsAtDecorator) {
  std::string src = "import x\n\n@x.register()\nclass A(x.Base, metaclass=M):\n    y = 1\n";
  NodePtr mod = parse_module(src);
  const Node& cls = *mod->kids[1];
  EXPECT_EQ(cls.kind, NodeKind::ClassDef);
  EXPECT_EQ(src.substr(cls.begin, cls.end - cls.begin), "@x.register()\nclass A(x.Base, metaclass=M):\n    y = 1");
  EXPECT_EQ(dotted_name(cls.kid(1).kid(0)), "x.Base");
}

TEST(Parser, DocstringDetection) {
  NodePtr mod = parse_module("'''doc'''\nclass A:\n    \"\"\"inner\"\"\"\n    x = 1\n");
  ASSERT_NE(docstring_of(*mod), nullptr);
  const Node& suite = mod->kid(1).kid(2);
  ASSERT_NE(docstring_of(suite), nullptr);
  EXPECT_EQ(docstring_of(suite)->kid(0).value, "\"\"\"inner\"\"\"");
}

TEST(Parser, GrammarEdgeCasesAgreeWithCPython) {
  const std::vector<std::string> cases = {
      R"(f(a=1, a=2))", R"(a, *b, *c = x)", R"(*a = x)", R"(f(**k, *b))", R"(f(x for x in y, 1))",
      R"(f(x for x in y))", R"(del *a,)", R"(x: int, y: int = 1,2)", R"((a) = 1)", R"([a, (b, c)] = d)",
      R"(for f() in x: pass)", R"(with a as f(): pass)", R"(f"{a!x}")", R"(b"ሴ")", R"(b"é")",
      R"(del (a, [b]))", R"(del f())", R"(a.b += 1)", R"((a, b) += 1)", R"(def f(a, a): pass)",
      R"(x = yield)", R"([x for x in *a])", R"(f(*a, b))", R"(f(a=1, *b))", R"(f(a=1, b))",
      R"(f(**k, b))", R"("\x4")", R"("\u12")", R"("\U00110000")", R"("\U0010FFFF")", R"(b"\u12")",
      R"(b"\x4")", R"(r"\x4")", R"(f"{a\n}")", R"(None = 1)", R"((yield) = 1)", R"(x.y: int)",
      R"((x): int = 1)", R"([x]: int)", R"(a + 1 = 2)", R"(f"{}")", R"(f"{a b}")", R"(u'x' b'y')",
      R"(f'{x:{y:{z}}}')", R"("\q")", R"([a for a in b] = c)", R"(a, b += 1)", R"((a for a in b) = c)",
      R"(f(a)[0] = 1)", R"(a.b, c[d] = e)", R"(for (a, *b) in c: pass)", R"(del a.b, c[0])",
      R"(lambda: (yield))", R"(x = *a, *b)", R"(f"{x!r:>10}")", R"(f"{x=}")", R"(True = 1)",
      R"(... = 1)", R"(f() += 1)", R"(x: int = yield)", R"(with (a, b) as (c, d): pass)",
      R"((*a) = b)", R"([*a] = b)", R"(a if b else c = d)", R"({a: b} = c)", R"(f"{a:{b}}")",
  };
  nlohmann::json in = nlohmann::json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) in.push_back({{"id", std::to_string(i)}, {"text", cases[i]}});
  auto ref = oracle(in);
  for (std::size_t i = 0; i < cases.size(); ++i)
    EXPECT_EQ(parses(cases[i]), ref[i]["ok"].get<bool>()) << cases[i] << "  cpython: " << ref[i].value("error", "ok");
}
