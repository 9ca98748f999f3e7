#include <gtest/gtest.h>

#include <algorithm>

#include "blockforge/closure_resolver.hpp"
#include "blockforge/error.hpp"
#include "view_builder.hpp"

using namespace blockforge;
using blockforge::testing::make_view;

namespace {

const char* kUtil =
    "import math\n"
    "def act(x):\n"
    "    return x\n"
    "def scale(x):\n"
    "    return x * math.pi\n"
    "def shared():\n"
    "    return 1\n";

const char* kOther = "def shared():\n    return 2\ndef lonely():\n    return 3\n";

const char* kModel =
    "from __future__ import annotations\n"
    "import torch.nn.functional as F\n"
    "from torch import nn\n"
    "from .util import act, scale as rescale\n"
    "from . import util\n"
    "try:\n"
    "    import apex\n"
    "except ImportError:\n"
    "    apex = None\n"
    "from .missing import gone\n"
    "WIDTH = 4\n"
    "def ping(n):\n"
    "    return pong(n - 1) if n else 0\n"
    "def pong(n):\n"
    "    return ping(n)\n"
    "class Block(nn.Module):\n"
    "    def forward(self, x):\n"
    "        y = act(x) + rescale(x) + util.scale(x) + WIDTH + len(x)\n"
    "        return F.relu(y) + ping(2) + lonely() + apex + gone\n"
    "class Ambiguous(nn.Module):\n"
    "    def forward(self, x):\n"
    "        return shared() + nowhere\n";

IndexView corpus() {
  return make_view({{"o/r", "pkg/__init__.py", ""},
                    {"o/r", "pkg/util.py", kUtil},
                    {"o/r", "pkg/other.py", kOther},
                    {"o/r", "pkg/model.py", kModel}});
}

BlockCandidate candidate(const std::string& name) {
  BlockCandidate c;
  c.class_name = name;
  c.fq_name = "pkg.model." + name;
  c.repo_name = "o/r";
  c.rel_path = "pkg/model.py";
  return c;
}

const Resolution* find(const ClosureResult& c, const std::string& id) {
  for (const auto& r : c.resolutions)
    if (r.name.identifier == id) return &r;
  return nullptr;
}

std::vector<std::string> member_names(const ClosureResult& c) {
  std::vector<std::string> out;
  for (const auto& m : c.members) out.push_back(m.symbol.name);
  return out;
}

std::vector<std::string> imports(const ClosureResult& c) {
  std::vector<std::string> out;
  for (const auto& i : c.preserved_imports) out.push_back(i.emit_text());
  return out;
}

}  // namespace

TEST(Closure, ResolutionTiers) {
  auto view = corpus();
  auto c = close(candidate("Block"), view);
  ASSERT_NE(find(c, "act"), nullptr);
  EXPECT_EQ(find(c, "act")->confidence, Confidence::DirectImport);
  EXPECT_EQ(find(c, "act")->target, TargetKind::Symbol);
  EXPECT_EQ(find(c, "WIDTH")->confidence, Confidence::QualifiedName);
  EXPECT_EQ(find(c, "len")->target, TargetKind::Builtin);
  EXPECT_EQ(find(c, "lonely")->confidence, Confidence::HeuristicMatch);
  EXPECT_EQ(find(c, "lonely")->symbol->fq_name, "pkg.other.lonely");
  EXPECT_EQ(find(c, "F")->target, TargetKind::Import);
  EXPECT_EQ(find(c, "math")->target, TargetKind::Import);
  EXPECT_TRUE(find(c, "util")->module_object);
}

TEST(Closure, MembersAliasesAndImports) {
  auto view = corpus();
  auto c = close(candidate("Block"), view);
  auto names = member_names(c);
  EXPECT_EQ(names.front(), "Block");
  for (auto want : {"act", "scale", "rescale", "WIDTH", "ping", "pong", "lonely"})
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  EXPECT_EQ(std::count(names.begin(), names.end(), "scale"), 1);
  auto alias = std::find_if(c.members.begin(), c.members.end(), [](const auto& m) { return m.synthetic_alias; });
  ASSERT_NE(alias, c.members.end());
  EXPECT_EQ(alias->text, "rescale = scale");
  ASSERT_EQ(alias->deps.size(), 1u);
  EXPECT_EQ(c.members[alias->deps[0]].symbol.fq_name, "pkg.util.scale");

  auto imps = imports(c);
  for (auto want : {"from __future__ import annotations", "import torch.nn.functional as F", "from torch import nn",
                    "from . import util", "import math", "from .missing import gone"})
    EXPECT_NE(std::find(imps.begin(), imps.end(), want), imps.end()) << want;
  EXPECT_TRUE(std::any_of(imps.begin(), imps.end(), [](const std::string& s) { return s.rfind("try:", 0) == 0; }));

  ASSERT_EQ(c.scc_groups.size(), 1u);
  auto scc = c.scc_member_names();
  std::sort(scc.begin(), scc.end());
  EXPECT_EQ(scc, (std::vector<std::string>{"ping", "pong"}));
  EXPECT_EQ(c.internal_defs().front().name, "Block");
  EXPECT_EQ(c.constants().size(), 2u);
}

TEST(Closure, ReportsUnresolvedAndAmbiguous) {
  auto view = corpus();
  auto c = close(candidate("Ambiguous"), view);
  ASSERT_EQ(c.unresolved.size(), 2u);
  const Unresolved* amb = nullptr;
  const Unresolved* none = nullptr;
  for (const auto& u : c.unresolved) (u.name.identifier == "shared" ? amb : none) = &u;
  ASSERT_NE(amb, nullptr);
  ASSERT_NE(none, nullptr);
  EXPECT_EQ(amb->reason.rfind("AmbiguousHeuristic", 0), 0u);
  EXPECT_EQ(amb->candidates, (std::vector<std::string>{"o/r:pkg.other.shared", "o/r:pkg.util.shared"}));
  EXPECT_EQ(none->name.identifier, "nowhere");
  EXPECT_EQ(c.members.size(), 1u);
  auto json = closure_to_json(c);
  EXPECT_EQ(json["unresolved"].size(), 2u);
  EXPECT_EQ(json["block"], "Ambiguous");
}

TEST(Closure, HeuristicPrefersSameRepo) {
  auto view = make_view({{"a/one", "m.py", "from torch import nn\nclass B(nn.Module):\n    def forward(self, x):\n        return helper(x)\n"},
                         {"a/one", "h.py", "def helper(x):\n    return x\n"},
                         {"b/two", "h.py", "def helper(x):\n    return -x\n"}});
  BlockCandidate b{"B", "m.B", "a/one", "m.py", {}, true, false};
  auto c = close(b, view);
  ASSERT_EQ(c.members.size(), 2u);
  EXPECT_EQ(c.members[1].symbol.repo_name, "a/one");
}

TEST(Closure, UnknownRootThrows) {
  auto view = corpus();
  try {
    close(candidate("Nope"), view);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BlockNotFound);
  }
}

TEST(Closure, StronglyConnectedComponents) {
  // 0 -> 1 -> 2 -> 0, 3 -> 2, 4 alone
  auto comps = strongly_connected({{1}, {2}, {0}, {2}, {}});
  ASSERT_EQ(comps.size(), 3u);
  EXPECT_EQ(comps[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(comps[1], (std::vector<std::size_t>{3}));
  EXPECT_EQ(comps[2], (std::vector<std::size_t>{4}));
}
