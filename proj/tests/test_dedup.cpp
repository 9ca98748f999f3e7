#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "blockforge/dedup_curator.hpp"
#include "blockforge/error.hpp"
#include "blockforge/sandbox.hpp"
#include "corpus_gen.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace blockforge;
using blockforge::testing::CorpusGenerator;
using blockforge::testing::read_file;
using blockforge::testing::write_file;

namespace {

std::vector<std::uint64_t> range(std::uint64_t lo, std::uint64_t hi) {
  std::vector<std::uint64_t> v(hi - lo);
  std::iota(v.begin(), v.end(), lo);
  return v;
}

const char* kNet =
    "import torch\n"
    "from torch import nn\n"
    "\n"
    "class Net(nn.Module):\n"
    "    def __init__(self, width=64):\n"
    "        super().__init__()\n"
    "        self.fc1 = nn.Linear(width, 128)\n"
    "        self.fc2 = nn.Linear(128, 256)\n"
    "        self.drop = nn.Dropout(0.1)\n"
    "        self.norm = nn.LayerNorm(256)\n"
    "\n"
    "    def forward(self, x):\n"
    "        x = self.fc1(x)\n"
    "        x = torch.relu(x)\n"
    "        x = self.fc2(x)\n"
    "        x = self.drop(x)\n"
    "        return self.norm(x)\n";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) s.replace(p, from.size(), to);
  return s;
}

}  // namespace

TEST(Canonicalize, StripsCosmeticsAndPrefix) {
  auto c = canonicalize(
      "# hi\nimport torch\n\ndef rag_f(a):\n    \"\"\"doc\"\"\"\n    return a+1  # c\n\n"
      "class rag_Net(nn.Module):\n    def forward(self, x):\n        return rag_f(x)\n");
  EXPECT_EQ(c.text,
            "import torch\n"
            "def f ( a ) :\n"
            " return a + 1\n"
            "class Net ( nn . Module ) :\n"
            " def forward ( self , x ) :\n"
            "  return f ( x )");
  EXPECT_EQ(c.prefix, "rag_");
  EXPECT_EQ(c.family, "net");
  EXPECT_TRUE(c.parsed);
}

TEST(Canonicalize, PrefixMustBeShared) {
  auto c = canonicalize("def rag_f():\n    pass\nclass Net:\n    pass\n");
  EXPECT_EQ(c.prefix, "");
  EXPECT_NE(c.text.find("rag_f"), std::string::npos);
}

TEST(Canonicalize, PrefixedAndPlainAreIdentical) {
  EXPECT_EQ(canonicalize(kNet).text, canonicalize(replace_all(kNet, "class Net", "class rag_Net")).text);
  EXPECT_EQ(canonicalize(replace_all(kNet, "class Net", "class rag_Net")).family, "net");
}

TEST(Canonicalize, UnparseableFallsBackToBytes) {
  auto c = canonicalize("def (:\n");
  EXPECT_FALSE(c.parsed);
  EXPECT_EQ(c.text, "def (:\n");
  EXPECT_TRUE(ast_fingerprints("def (:\n").empty());
}

TEST(Jaccard, ExactThresholdBoundary) {
  for (std::uint64_t n = 10; n <= 400; n += 10) {
    auto a = range(0, n);
    auto b = range(0, n * 9 / 10);
    EXPECT_TRUE(jaccard_at_least(a, b, 0.90)) << n;
    auto c = range(0, n * 9 / 10 - 1);
    EXPECT_FALSE(jaccard_at_least(a, c, 0.90)) << n;
  }
  EXPECT_DOUBLE_EQ(jaccard({}, {}), 1.0);
  EXPECT_TRUE(jaccard_at_least({}, {}, 1.0));
  EXPECT_DOUBLE_EQ(jaccard({1, 2}, {2, 3}), 1.0 / 3.0);
}

TEST(Kernels, ShinglesAndMinhash) {
  std::vector<std::string_view> toks = {"a", "b", "c"};
  EXPECT_EQ(shingles(toks).size(), 1u);
  std::vector<std::string_view> seven = {"a", "b", "c", "d", "e", "a", "b"};
  EXPECT_EQ(shingles(seven).size(), 3u);
  EXPECT_EQ(shingles(std::vector<std::string_view>{"a", "b", "c", "d", "e", "a", "b", "c", "d", "e"}).size(), 5u);
  auto empty = minhash({});
  ASSERT_EQ(empty.size(), static_cast<std::size_t>(kMinHashPerms));
  EXPECT_TRUE(std::all_of(empty.begin(), empty.end(), [](auto v) { return v == ~std::uint64_t{0}; }));
  auto s = shingles(canonical_tokens(canonicalize(kNet).text));
  EXPECT_EQ(minhash(s), minhash(s));
  std::vector<std::vector<std::uint64_t>> sigs = {minhash(s), minhash(range(0, 50)), minhash(s)};
  auto pairs = lsh_candidates({&sigs[0], &sigs[1], &sigs[2]});
  EXPECT_EQ(pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}}));
}

TEST(Kernels, UnionFind) {
  UnionFind uf(5);
  EXPECT_TRUE(uf.unite(0, 1));
  EXPECT_TRUE(uf.unite(3, 4));
  EXPECT_FALSE(uf.unite(1, 0));
  EXPECT_TRUE(uf.unite(1, 4));
  EXPECT_EQ(uf.find(0), uf.find(3));
  EXPECT_NE(uf.find(2), uf.find(0));
}

TEST(Kernels, SerialAndParallelFingerprintsAgree) {
  CorpusGenerator gen(11);
  auto arts = blockforge::testing::artifacts_of(gen.corpus(150));
  arts.push_back({"broken.py", "def (:\n", ""});
  EXPECT_EQ(fingerprint_serial(arts), fingerprint_parallel(arts, 4));
}

TEST(Structural, AlphaRenamingPreservesFingerprints) {
  std::string renamed = replace_all(replace_all(replace_all(kNet, "fc1", "lin_a"), "fc2", "lin_b"), "(self, x)", "(self, inp)");
  renamed = replace_all(replace_all(renamed, "x = ", "inp = "), "(x)", "(inp)");
  renamed = replace_all(renamed, "128", "96");
  EXPECT_EQ(ast_fingerprints(kNet), ast_fingerprints(renamed));
  auto a = fingerprint({"a.py", kNet, ""});
  auto b = fingerprint({"b.py", renamed, ""});
  EXPECT_FALSE(jaccard_at_least(a.token_shingles, b.token_shingles, 0.90));
}

TEST(Structural, OneExtraLayerIsDistinct) {
  std::string extra = replace_all(kNet, "        self.norm = nn.LayerNorm(256)\n",
                                  "        self.norm = nn.LayerNorm(256)\n        self.out = nn.Linear(256, 10)\n");
  extra = replace_all(extra, "return self.norm(x)", "x = self.norm(x)\n        return self.out(x)");
  auto a = ast_fingerprints(kNet);
  auto b = ast_fingerprints(extra);
  EXPECT_LT(jaccard(a, b), 0.95);
  auto r = curate({{"a.py", kNet, ""}, {"b.py", extra, ""}}, {0.90, 0.95, 1, 1});
  EXPECT_EQ(r.kept, (std::vector<std::string>{"a.py", "b.py"}));
}

TEST(Curate, HandCountedExample) {
  std::string lexical = replace_all(kNet, "width=64", "width=65");
  std::string other =
      "import torch\nfrom torch import nn\n\nclass Gate(nn.Module):\n    def __init__(self, dim=8):\n"
      "        super().__init__()\n        self.proj = nn.Conv1d(dim, dim, 1)\n        self.bn = nn.BatchNorm1d(dim)\n\n"
      "    def forward(self, x):\n        if x.dim() > 2:\n            x = x.flatten(1)\n"
      "        h = self.proj(x)\n        x = x + h\n        return torch.sigmoid(self.bn(x)) * x\n";
  std::string other_renamed = replace_all(replace_all(replace_all(other, "proj", "conv"), "bn", "norm"), "dim", "channels");
  other_renamed = replace_all(replace_all(replace_all(other_renamed, "x", "feat"), " h", " t"), "(h", "(t");
  other_renamed = replace_all(other_renamed, "feat + h", "feat + t");
  std::vector<Artifact> arts = {
      {"a0.py", kNet, "s1"},
      {"a1.py", std::string("# copy\n") + kNet, "s2"},
      {"a2.py", replace_all(kNet, "class Net", "class rag_Net"), "s1"},
      {"a3.py", lexical, "s2"},
      {"b0.py", other, "s1"},
      {"b1.py", other_renamed, "s2"},
  };
  auto r = curate(arts, {0.90, 0.95, 1, 1});
  EXPECT_EQ(r.kept, (std::vector<std::string>{"a0.py", "b0.py"}));
  EXPECT_EQ(r.report.removed_exact, 2u);
  EXPECT_EQ(r.report.removed_lexical, 1u);
  EXPECT_EQ(r.report.removed_structural, 1u);
  EXPECT_EQ(r.report.output_count, 2u);
  EXPECT_EQ(r.report.topped_up, 0u);
  EXPECT_TRUE(r.report.balanced());
  EXPECT_EQ(r.report.per_family_counts, (std::map<std::string, std::size_t>{{"gate", 1}, {"net", 1}}));
  EXPECT_EQ(r.report.per_source_counts, (std::map<std::string, std::size_t>{{"s1", 2}}));
  ASSERT_EQ(r.decisions.size(), 3u);
  for (const auto& d : r.decisions) {
    if (d.stage == DedupStage::Exact) {
      EXPECT_EQ(d.removed, (std::vector<std::string>{"a1.py", "a2.py"}));
    } else if (d.stage == DedupStage::Lexical) {
      EXPECT_EQ(d.removed, (std::vector<std::string>{"a3.py"}));
    } else {
      EXPECT_EQ(d.removed, (std::vector<std::string>{"b1.py"}));
    }
  }

  // A renamed class is its own family, which top-up refills.
  auto renamed = arts;
  renamed[5].code = replace_all(renamed[5].code, "class Gate", "class Gating");
  auto refilled = curate(renamed, {0.90, 0.95, 1, 1});
  EXPECT_EQ(refilled.topped_up, (std::vector<std::string>{"b1.py"}));
  EXPECT_EQ(refilled.report.per_family_counts.at("gating"), 1u);

  // Top-up reinstates the structural duplicate but never a lexical one.
  auto topped = curate(arts, {0.90, 0.95, 3, 1});
  EXPECT_EQ(topped.topped_up, (std::vector<std::string>{"b1.py"}));
  EXPECT_TRUE(topped.report.balanced());
  EXPECT_THROW(curate(arts, {0.0, 0.95, 1, 1}), Error);
}

TEST(Curate, LoadAndWrite) {
  ScratchDir tmp("bf-dedup");
  write_file(tmp.path() / "in" / "x" / "b.py", kNet);
  write_file(tmp.path() / "in" / "a.py", kNet);
  write_file(tmp.path() / "in" / "notes.txt", "skip");
  auto dir = load_artifacts(tmp.path() / "in");
  ASSERT_EQ(dir.size(), 2u);
  EXPECT_EQ(dir[0].id, "a.py");
  EXPECT_EQ(dir[1].id, "x/b.py");

  nlohmann::json l1 = {{"id", "z"}, {"code", kNet}, {"source", "gh"}};
  nlohmann::json l2 = {{"id", "y"}, {"code", "x = 1\n"}};
  write_file(tmp.path() / "in.jsonl", l1.dump() + "\n" + l2.dump() + "\n");
  auto lines = load_artifacts(tmp.path() / "in.jsonl");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].id, "y");
  EXPECT_EQ(lines[1].source, "gh");
  write_file(tmp.path() / "dup.jsonl", l1.dump() + "\n" + l1.dump() + "\n");
  EXPECT_THROW(load_artifacts(tmp.path() / "dup.jsonl"), Error);

  CurationParams params{0.90, 0.95, 1, 2};
  auto r = curate(dir, params);
  write_curation_output(r, dir, params, tmp.path() / "out");
  EXPECT_EQ(read_file(tmp.path() / "out" / "kept" / "a.py"), kNet);
  EXPECT_FALSE(fs::exists(tmp.path() / "out" / "kept" / "x" / "b.py"));
  auto report = nlohmann::json::parse(read_file(tmp.path() / "out" / "curation_report.json"));
  EXPECT_EQ(report["total_records_fetched"], 2);
  EXPECT_EQ(report["total_records"], 1);
  std::istringstream decisions(read_file(tmp.path() / "out" / "decisions.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(decisions, line)) {
    auto d = nlohmann::json::parse(line);
    EXPECT_EQ(d["kept"], "a.py");
    ++n;
  }
  EXPECT_EQ(n, 1u);
}
