#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace blockforge {

inline constexpr int kShingleK = 5;
inline constexpr int kMinHashPerms = 128;
inline constexpr int kLshBands = 32;
inline constexpr int kLshRows = 4;
inline constexpr int kFingerprintHeight = 3;

struct Artifact {
  std::string id;
  std::string code;
  std::string source;  // optional provenance tag carried into the report
};

struct Canonical {
  std::string text;
  std::string prefix;  // cosmetic identifier prefix that was removed, or ""
  std::string family;
  bool parsed = true;  // false: raw bytes passed through
};

// Strips comments and docstrings, writes each logical line as its tokens
// joined by single spaces (one leading space per indent level) and removes
// a cosmetic `<word>_` prefix shared by every top-level def/class name.
Canonical canonicalize(std::string_view text);

// The whitespace-separated token stream of a canonical text.
std::vector<std::string_view> canonical_tokens(std::string_view canonical_text);

// Sorted distinct hashes of k-token windows (one window when shorter than k).
std::vector<std::uint64_t> shingles(const std::vector<std::string_view>& tokens, int k = kShingleK);

// One minimum per seeded hash function; all ones for an empty set.
std::vector<std::uint64_t> minhash(const std::vector<std::uint64_t>& set, int perms = kMinHashPerms);

// Multiset of depth-bounded subtree shapes (identifiers -> NAME, literals ->
// LIT, docstrings dropped), encoded as a sorted set of (shape, ordinal)
// hashes so set Jaccard equals multiset Jaccard. Empty when unparseable.
std::vector<std::uint64_t> ast_fingerprints(std::string_view text, int height = kFingerprintHeight);

// Jaccard of two sorted distinct sets; 1.0 when both are empty.
double jaccard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b);
// Exact threshold test on integer counts: |a∩b| >= tau * |a∪b|.
bool jaccard_at_least(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b, double tau);

struct DedupRecord {
  std::string artifact_id;
  std::string source;
  std::string canonical_text;
  std::string exact_sha256;
  std::vector<std::uint64_t> token_shingles;
  std::vector<std::uint64_t> minhash_sig;
  std::vector<std::uint64_t> ast_fingerprints;
  std::vector<std::uint64_t> ast_minhash;
  std::string family;
  bool parsed = true;
  std::size_t raw_bytes = 0;

  bool operator==(const DedupRecord&) const = default;
};

DedupRecord fingerprint(const Artifact& artifact);

// Batch kernels; identical output, input order.
std::vector<DedupRecord> fingerprint_serial(const std::vector<Artifact>& artifacts);
std::vector<DedupRecord> fingerprint_parallel(const std::vector<Artifact>& artifacts, int workers);

// Pairs (i < j) of `members` colliding in at least one LSH band of the
// given signatures; sorted, distinct, as positions into `signatures`.
std::vector<std::pair<std::size_t, std::size_t>> lsh_candidates(
    const std::vector<const std::vector<std::uint64_t>*>& signatures, int bands = kLshBands, int rows = kLshRows);

class UnionFind {
 public:
  explicit UnionFind(std::size_t n);
  std::size_t find(std::size_t x);
  bool unite(std::size_t a, std::size_t b);

 private:
  std::vector<std::size_t> parent_, rank_;
};

}  // namespace blockforge
