#include "blockforge/dedup_kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <regex>
#include <unordered_map>

#include "blockforge/hashing.hpp"
#include "blockforge/python/parser.hpp"

namespace blockforge {
namespace py = python;
namespace {

void docstring_spans(const py::Node& n, std::vector<std::pair<std::uint32_t, std::uint32_t>>& out) {
  auto body = [&](const py::Node& suite) {
    if (const py::Node* d = py::docstring_of(suite)) out.emplace_back(d->begin, d->end);
  };
  if (n.kind == py::NodeKind::Module) body(n);
  if (n.kind == py::NodeKind::FunctionDef) body(n.kid(3));
  if (n.kind == py::NodeKind::ClassDef) body(n.kid(2));
  for (const auto& k : n.kids) docstring_spans(*k, out);
}

std::string family_of(const py::Node& module, const std::string& prefix) {
  std::string cls, fn;
  for (const auto& s : module.kids) {
    if (s->kind == py::NodeKind::ClassDef) cls = s->value;
    if (s->kind == py::NodeKind::FunctionDef) fn = s->value;
  }
  std::string name = !cls.empty() ? cls : fn;
  if (name.empty()) return "module";
  if (!prefix.empty() && name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0)
    name = name.substr(prefix.size());
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return name;
}

std::string common_prefix(const py::Node& module) {
  static const std::regex kPrefix(R"(^([A-Za-z0-9]+[_-]).+)");
  std::string prefix;
  bool any = false;
  for (const auto& s : module.kids) {
    if (s->kind != py::NodeKind::ClassDef && s->kind != py::NodeKind::FunctionDef) continue;
    std::smatch m;
    if (!std::regex_match(s->value, m, kPrefix)) return {};
    if (!any) prefix = m[1];
    else if (prefix != m[1]) return {};
    any = true;
  }
  return prefix;
}

std::uint64_t shape(const py::Node& n, int height, std::unordered_map<const py::Node*, std::uint64_t>* skip) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(n.kind) + 1);
  if (height <= 1) return h;
  for (const auto& k : n.kids) {
    if (skip && skip->count(k.get())) continue;
    h = hash_combine(h, shape(*k, height - 1, skip));
  }
  return hash_combine(h, n.kids.size());
}

void collect_shapes(const py::Node& n, int height, std::unordered_map<const py::Node*, std::uint64_t>& docs,
                    std::unordered_map<std::uint64_t, std::uint32_t>& counts) {
  if (n.kind == py::NodeKind::Module || n.kind == py::NodeKind::Suite) {
    if (const py::Node* d = py::docstring_of(n)) docs.emplace(d, 0);
  }
  ++counts[shape(n, height, &docs)];
  for (const auto& k : n.kids)
    if (!docs.count(k.get())) collect_shapes(*k, height, docs, counts);
}

}  // namespace

Canonical canonicalize(std::string_view text) {
  Canonical out;
  py::NodePtr module;
  std::vector<py::Token> tokens;
  try {
    module = py::parse_module(text);
    tokens = py::tokenize(text);
  } catch (const std::exception&) {
    out.parsed = false;
    out.text = std::string(text);
    out.family = "unparsed";
    return out;
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> docs;
  docstring_spans(*module, docs);
  std::sort(docs.begin(), docs.end());
  auto in_doc = [&](const py::Token& t) {
    auto it = std::upper_bound(docs.begin(), docs.end(), std::make_pair(t.begin, std::numeric_limits<std::uint32_t>::max()));
    if (it == docs.begin()) return false;
    --it;
    return t.begin >= it->first && t.end <= it->second;
  };
  out.prefix = common_prefix(*module);
  out.family = family_of(*module, out.prefix);

  std::string line;
  int level = 0;
  bool first_line = true;
  for (const py::Token& t : tokens) {
    switch (t.kind) {
      case py::TokenKind::Indent: ++level; continue;
      case py::TokenKind::Dedent: --level; continue;
      case py::TokenKind::NonLogicalNewline:
      case py::TokenKind::Comment:
      case py::TokenKind::EndMarker: continue;
      case py::TokenKind::Newline:
        if (!line.empty()) {
          if (!first_line) out.text += '\n';
          out.text.append(static_cast<std::size_t>(std::max(0, level)), ' ');
          out.text += line;
          first_line = false;
          line.clear();
        }
        continue;
      default: break;
    }
    if (in_doc(t)) continue;
    std::string_view word = t.text;
    if (t.kind == py::TokenKind::Name && !out.prefix.empty() && word.size() > out.prefix.size() &&
        word.substr(0, out.prefix.size()) == out.prefix)
      word.remove_prefix(out.prefix.size());
    if (!line.empty()) line += ' ';
    line += word;
  }
  if (!line.empty()) {
    if (!first_line) out.text += '\n';
    out.text += line;
  }
  return out;
}

std::vector<std::string_view> canonical_tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::uint64_t> shingles(const std::vector<std::string_view>& tokens, int k) {
  std::vector<std::uint64_t> out;
  if (tokens.empty()) return out;
  const std::size_t kk = static_cast<std::size_t>(std::max(1, k));
  const std::size_t windows = tokens.size() >= kk ? tokens.size() - kk + 1 : 1;
  out.reserve(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    std::uint64_t h = 0x5715;
    for (std::size_t t = w; t < std::min(tokens.size(), w + kk); ++t) h = hash_combine(h, hash_bytes(tokens[t]));
    out.push_back(h);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::uint64_t> minhash(const std::vector<std::uint64_t>& set, int perms) {
  std::vector<std::uint64_t> sig(static_cast<std::size_t>(perms), std::numeric_limits<std::uint64_t>::max());
  for (int p = 0; p < perms; ++p) {
    const std::uint64_t seed = mix64(0xb10cf0e6e0000000ULL + static_cast<std::uint64_t>(p));
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    for (std::uint64_t x : set) best = std::min(best, mix64(x ^ seed));
    sig[static_cast<std::size_t>(p)] = best;
  }
  return sig;
}

std::vector<std::uint64_t> ast_fingerprints(std::string_view text, int height) {
  py::NodePtr module;
  try {
    module = py::parse_module(text);
  } catch (const std::exception&) {
    return {};
  }
  std::unordered_map<const py::Node*, std::uint64_t> docs;
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  collect_shapes(*module, height, docs, counts);
  std::vector<std::uint64_t> out;
  for (const auto& [h, n] : counts)
    for (std::uint32_t i = 1; i <= n; ++i) out.push_back(hash_combine(h, i));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {
std::pair<std::size_t, std::size_t> inter_union(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return {inter, a.size() + b.size() - inter};
}
}  // namespace

double jaccard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  auto [inter, uni] = inter_union(a, b);
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool jaccard_at_least(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b, double tau) {
  auto [inter, uni] = inter_union(a, b);
  if (uni == 0) return true;
  return static_cast<double>(inter) >= tau * static_cast<double>(uni) - 1e-9;
}

DedupRecord fingerprint(const Artifact& a) {
  DedupRecord r;
  r.artifact_id = a.id;
  r.source = a.source;
  r.raw_bytes = a.code.size();
  Canonical c = canonicalize(a.code);
  r.canonical_text = std::move(c.text);
  r.family = std::move(c.family);
  r.parsed = c.parsed;
  r.exact_sha256 = sha256_hex(r.canonical_text);
  r.token_shingles = shingles(canonical_tokens(r.canonical_text));
  r.minhash_sig = minhash(r.token_shingles);
  if (r.parsed) {
    r.ast_fingerprints = ast_fingerprints(a.code);
    r.ast_minhash = minhash(r.ast_fingerprints);
  }
  return r;
}

std::vector<DedupRecord> fingerprint_serial(const std::vector<Artifact>& artifacts) {
  std::vector<DedupRecord> out;
  out.reserve(artifacts.size());
  for (const auto& a : artifacts) out.push_back(fingerprint(a));
  return out;
}

std::vector<DedupRecord> fingerprint_parallel(const std::vector<Artifact>& artifacts, int workers) {
  std::vector<DedupRecord> out(artifacts.size());
  const auto n = static_cast<std::ptrdiff_t>(artifacts.size());
#pragma omp parallel for schedule(dynamic, 4) num_threads(std::max(1, workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fingerprint(artifacts[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> lsh_candidates(
    const std::vector<const std::vector<std::uint64_t>*>& signatures, int bands, int rows) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t n = signatures.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (int b = 0; b < bands; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t h = mix64(static_cast<std::uint64_t>(b) + 0x1a5bULL);
      const auto& sig = *signatures[i];
      for (int r = 0; r < rows; ++r) {
        auto at = static_cast<std::size_t>(b * rows + r);
        h = hash_combine(h, at < sig.size() ? sig[at] : 0);
      }
      keyed[i] = {h, i};
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t lo = 0; lo < n;) {
      std::size_t hi = lo;
      while (hi < n && keyed[hi].first == keyed[lo].first) ++hi;
      for (std::size_t x = lo; x < hi; ++x)
        for (std::size_t y = x + 1; y < hi; ++y) pairs.emplace_back(keyed[x].second, keyed[y].second);
      lo = hi;
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

UnionFind::UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

std::size_t UnionFind::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool UnionFind::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

}  // namespace blockforge
