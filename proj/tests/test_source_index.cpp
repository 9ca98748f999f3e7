#include <gtest/gtest.h>

#include <algorithm>

#include <sqlite3.h>

#include "blockforge/error.hpp"
#include "blockforge/hashing.hpp"
#include "blockforge/sandbox.hpp"
#include "blockforge/source_index.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;

namespace {

const char* kLayers =
    "import torch\n"
    "from torch import nn\n"
    "from .utils import glorot as init\n"
    "try:\n"
    "    import torch_scatter\n"
    "except ImportError:\n"
    "    torch_scatter = None\n"
    "if TYPE_CHECKING:\n"
    "    from typing import Any\n"
    "EPS = 1e-5\n"
    "act = nn.ReLU\n"
    "WIDTH = compute()\n"
    "a, b = 1, 2\n"
    "@register(\"x\")\n"
    "class Net(nn.Module, metaclass=Meta):\n"
    "    def forward(self, x):\n"
    "        return x\n"
    "def helper():\n"
    "    pass\n"
    "def helper():\n"
    "    return 2\n";

const SymbolRecord& sym(const FileAnalysis& a, const std::string& name) {
  auto it = std::find_if(a.symbols.begin(), a.symbols.end(), [&](const SymbolRecord& s) { return s.name == name; });
  if (it == a.symbols.end()) throw std::runtime_error("missing " + name);
  return *it;
}

}  // namespace

TEST(SourceIndex, ModuleNames) {
  EXPECT_EQ(module_name_for("models/resnet.py"), "models.resnet");
  EXPECT_EQ(module_name_for("pkg/__init__.py"), "pkg");
  EXPECT_EQ(module_name_for("top.py"), "top");
}

TEST(SourceIndex, AnalyzeExtractsSymbols) {
  FileAnalysis a = analyze_source("o/r", "pkg/layers.py", kLayers);
  EXPECT_EQ(a.file.parse_status, ParseStatus::Parsed);
  EXPECT_EQ(a.file.module, "pkg.layers");
  const auto& net = sym(a, "Net");
  EXPECT_EQ(net.kind, SymbolKind::Class);
  EXPECT_EQ(net.fq_name, "pkg.layers.Net");
  EXPECT_EQ(net.bases, (std::vector<std::string>{"nn.Module"}));
  EXPECT_EQ(net.metaclass, "Meta");
  EXPECT_EQ(net.decorators, (std::vector<std::string>{"register(\"x\")"}));
  EXPECT_EQ(std::string_view(kLayers).substr(net.span.start, 15), "@register(\"x\")\n");
  EXPECT_EQ(sym(a, "EPS").kind, SymbolKind::Constant);
  EXPECT_FALSE(sym(a, "EPS").dynamic);
  EXPECT_EQ(sym(a, "act").kind, SymbolKind::Alias);
  EXPECT_EQ(sym(a, "act").value_text, "nn.ReLU");
  EXPECT_TRUE(sym(a, "WIDTH").dynamic);
  EXPECT_TRUE(sym(a, "a").dynamic);
  EXPECT_EQ(sym(a, "helper").shadow_count, 1u);
  EXPECT_EQ(std::count_if(a.symbols.begin(), a.symbols.end(), [](const auto& s) { return s.name == "helper"; }), 1);
}

TEST(SourceIndex, AnalyzeExtractsImports) {
  FileAnalysis a = analyze_source("o/r", "pkg/layers.py", kLayers);
  ASSERT_EQ(a.imports.size(), 5u);
  EXPECT_EQ(a.imports[0].form, ImportForm::Plain);
  EXPECT_EQ(a.imports[2].relative_level, 1u);
  EXPECT_EQ(a.imports[2].source_module, "utils");
  EXPECT_EQ(a.imports[2].local_names(), (std::vector<std::string>{"init"}));
  EXPECT_EQ(a.imports[3].guard, ImportGuard::Try);
  EXPECT_EQ(a.imports[3].emit_text().substr(0, 4), "try:");
  EXPECT_EQ(a.imports[4].guard, ImportGuard::TypeChecking);
  for (std::size_t i = 0; i < a.imports.size(); ++i) EXPECT_EQ(a.imports[i].ordinal, i);
}

TEST(SourceIndex, SyntaxErrorsRecorded) {
  FileAnalysis a = analyze_source("o/r", "bad.py", "def f(:\n    pass\n");
  EXPECT_EQ(a.file.parse_status, ParseStatus::SyntaxError);
  EXPECT_NE(a.file.parse_message.find("line"), std::string::npos);
  EXPECT_TRUE(a.symbols.empty());
}

TEST(SourceIndex, SerialAndParallelKernelsAgree) {
  std::vector<std::string> texts;
  for (int i = 0; i < 64; ++i) texts.push_back(std::string(kLayers) + "X" + std::to_string(i) + " = " + std::to_string(i) + "\n");
  std::vector<AnalysisInput> in;
  for (int i = 0; i < 64; ++i) in.push_back({"o/r", "m" + std::to_string(i) + ".py", texts[i]});
  auto s = analyze_sources_serial(in);
  auto p = analyze_sources_parallel(in, 4);
  ASSERT_EQ(s.size(), p.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].file.indexed_at = p[i].file.indexed_at = 0;
    EXPECT_EQ(s[i], p[i]);
  }
}

TEST(IndexStore, MissingPolicySkipsUnchangedFiles) {
  ScratchDir tmp("bf-index");
  IndexStore store(tmp.path() / "index.sqlite");
  std::vector<SourceFile> files = {{"pkg/__init__.py", ""}, {"pkg/layers.py", kLayers}, {"bad.py", "def (\n"}};
  auto before = parse_counter();
  IndexStats first = index_files(store, "o/r", files, IndexPolicy::Missing, 2);
  EXPECT_EQ(first.parsed, 3u);
  EXPECT_EQ(first.parse_failures, 1u);
  EXPECT_EQ(parse_counter() - before, 3u);

  IndexStats again = index_files(store, "o/r", files, IndexPolicy::Missing, 2);
  EXPECT_EQ(again.parsed, 0u);
  EXPECT_EQ(again.reused, 3u);
  EXPECT_EQ(parse_counter() - before, 3u);

  IndexStats forced = index_files(store, "o/r", files, IndexPolicy::Force, 2);
  EXPECT_EQ(forced.parsed, 3u);

  files[1].bytes += "\nZ = 3\n";
  files.pop_back();
  IndexStats changed = index_files(store, "o/r", files, IndexPolicy::Missing, 2);
  EXPECT_EQ(changed.parsed, 1u);
  EXPECT_EQ(changed.pruned, 1u);
  EXPECT_FALSE(store.find_file("o/r", "bad.py"));
  EXPECT_EQ(store.find_file("o/r", "pkg/layers.py")->content_sha1, sha1_hex(files[1].bytes));
}

TEST(IndexStore, SnapshotRoundTripsRecords) {
  ScratchDir tmp("bf-index");
  IndexStore store(tmp.path() / "index.sqlite");
  store.upsert_repo({"o/r", 2, "url", "abc"});
  index_files(store, "o/r", {{"pkg/layers.py", kLayers}}, IndexPolicy::Missing, 1);
  FileAnalysis direct = analyze_source("o/r", "pkg/layers.py", kLayers);
  IndexView v = store.snapshot();
  EXPECT_EQ(v.priority("o/r"), 2);
  ASSERT_EQ(v.symbols().size(), direct.symbols.size());
  for (std::size_t i = 0; i < direct.symbols.size(); ++i) EXPECT_EQ(v.symbols()[i], direct.symbols[i]);
  ASSERT_EQ(v.imports().size(), direct.imports.size());
  for (std::size_t i = 0; i < direct.imports.size(); ++i) EXPECT_EQ(v.imports()[i], direct.imports[i]);
  const SymbolRecord* net = v.symbol("o/r", "pkg.layers.Net");
  ASSERT_NE(net, nullptr);
  EXPECT_EQ(v.slice(*net).substr(0, 14), "@register(\"x\")");
  EXPECT_EQ(v.module_symbols("o/r", "pkg.layers").size(), direct.symbols.size());
}

TEST(IndexStore, ReopenKeepsDataAndSchemaMismatchRebuilds) {
  ScratchDir tmp("bf-index");
  fs::path db = tmp.path() / "index.sqlite";
  {
    IndexStore store(db);
    index_files(store, "o/r", {{"a.py", "A = 1\n"}}, IndexPolicy::Missing, 1);
  }
  {
    IndexStore store(db);
    EXPECT_FALSE(store.rebuilt_on_open());
    EXPECT_TRUE(store.find_file("o/r", "a.py"));
    store.snapshot();
  }
  sqlite3* raw = nullptr;
  ASSERT_EQ(sqlite3_open(db.c_str(), &raw), SQLITE_OK);
  ASSERT_EQ(sqlite3_exec(raw, "PRAGMA user_version=1;", nullptr, nullptr, nullptr), SQLITE_OK);
  sqlite3_close(raw);
  IndexStore store(db);
  EXPECT_TRUE(store.rebuilt_on_open());
  EXPECT_FALSE(store.find_file("o/r", "a.py"));
}

TEST(LookupSymbol, ExactThenSuffixOrderedByPriority) {
  IndexView v;
  v.add_repo({"z/low", 2, "", ""});
  v.add_repo({"a/high", 1, "", ""});
  std::string src = "class Block:\n    pass\n";
  v.add(analyze_source("z/low", "nets/block.py", src), src);
  v.add(analyze_source("a/high", "nets/block.py", src), src);
  v.add(analyze_source("a/high", "other/block.py", src), src);
  v.finalize();
  auto hits = lookup_symbol(v, "block.Block");
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].repo_name, "a/high");
  EXPECT_EQ(hits[0].fq_name, "nets.block.Block");
  EXPECT_EQ(hits[1].fq_name, "other.block.Block");
  EXPECT_EQ(hits[2].repo_name, "z/low");
  auto exact = lookup_symbol(v, "z/low:nets.block.Block");
  ASSERT_EQ(exact.size(), 1u);
  EXPECT_EQ(exact[0].repo_name, "z/low");
  auto fq = lookup_symbol(v, "nets.block.Block");
  ASSERT_EQ(fq.size(), 2u);
  EXPECT_EQ(fq[0].repo_name, "a/high");
  EXPECT_TRUE(lookup_symbol(v, "lock.Block").empty());
}
