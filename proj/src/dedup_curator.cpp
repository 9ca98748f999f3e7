#include "blockforge/dedup_curator.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "blockforge/error.hpp"

namespace blockforge {
namespace fs = std::filesystem;
namespace {

struct Edge {
  std::size_t a, b;  // record positions
  double similarity;
};

std::vector<ClusterDecision> cluster(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                     const std::vector<std::size_t>& positions, const std::vector<Edge>& edges,
                                     DedupStage stage) {
  std::map<std::size_t, std::size_t> local;
  for (std::size_t i = 0; i < positions.size(); ++i) local[positions[i]] = i;
  UnionFind uf(positions.size());
  for (const Edge& e : edges) uf.unite(local.at(e.a), local.at(e.b));
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < positions.size(); ++i) groups[uf.find(i)].push_back(positions[i]);
  std::map<std::size_t, double> low;
  for (const Edge& e : edges) {
    std::size_t root = uf.find(local.at(e.a));
    auto [it, fresh] = low.emplace(root, e.similarity);
    if (!fresh) it->second = std::min(it->second, e.similarity);
  }
  std::vector<ClusterDecision> out;
  for (auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end(),
              [&](std::size_t x, std::size_t y) { return records[x].artifact_id < records[y].artifact_id; });
    ClusterDecision d;
    d.kept = records[members[0]].artifact_id;
    d.stage = stage;
    d.similarity = low.count(root) ? low[root] : 1.0;
    for (std::size_t k = 1; k < members.size(); ++k) {
      d.removed.push_back(records[members[k]].artifact_id);
      alive[members[k]] = false;
    }
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const ClusterDecision& x, const ClusterDecision& y) { return x.kept < y.kept; });
  return out;
}

std::vector<ClusterDecision> near_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive, double threshold,
                                       DedupStage stage) {
  const bool structural = stage == DedupStage::Structural;
  std::vector<std::size_t> positions;
  std::vector<const std::vector<std::uint64_t>*> sigs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!alive[i] || (structural && !records[i].parsed)) continue;
    positions.push_back(i);
    sigs.push_back(structural ? &records[i].ast_minhash : &records[i].minhash_sig);
  }
  std::vector<Edge> edges;
  for (auto [x, y] : lsh_candidates(sigs)) {
    const DedupRecord& a = records[positions[x]];
    const DedupRecord& b = records[positions[y]];
    const auto& sa = structural ? a.ast_fingerprints : a.token_shingles;
    const auto& sb = structural ? b.ast_fingerprints : b.token_shingles;
    if (jaccard_at_least(sa, sb, threshold)) edges.push_back(Edge{positions[x], positions[y], jaccard(sa, sb)});
  }
  return cluster(records, alive, positions, edges, stage);
}

void write_file(const fs::path& p, std::string_view body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f || !(f << body) || !f.flush()) throw Error(ErrorCode::IoError, "cannot write " + p.string());
}

}  // namespace

std::string_view to_string(DedupStage s) {
  switch (s) {
    case DedupStage::Exact: return "Exact";
    case DedupStage::Lexical: return "Lexical";
    case DedupStage::Structural: return "Structural";
  }
  return "?";
}

std::vector<ClusterDecision> exact_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive) {
  std::map<std::string, std::vector<std::size_t>> by_hash;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!alive[i]) continue;
    positions.push_back(i);
    by_hash[records[i].exact_sha256].push_back(i);
  }
  std::vector<Edge> edges;
  for (const auto& [h, group] : by_hash)
    for (std::size_t k = 1; k < group.size(); ++k) edges.push_back(Edge{group[0], group[k], 1.0});
  return cluster(records, alive, positions, edges, DedupStage::Exact);
}

std::vector<ClusterDecision> lexical_near_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                               double tau) {
  return near_dups(records, alive, tau, DedupStage::Lexical);
}

std::vector<ClusterDecision> structural_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                             double kappa) {
  return near_dups(records, alive, kappa, DedupStage::Structural);
}

std::vector<std::size_t> diversity_top_up(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                          std::size_t min_support, double tau) {
  std::map<std::string, std::vector<std::size_t>> kept, pool;
  for (std::size_t i = 0; i < records.size(); ++i) (alive[i] ? kept : pool)[records[i].family].push_back(i);
  std::vector<std::size_t> reinstated;
  auto by_id = [&](std::size_t x, std::size_t y) { return records[x].artifact_id < records[y].artifact_id; };
  for (auto& [family, candidates] : pool) {
    auto& members = kept[family];
    if (members.size() >= min_support) continue;
    std::sort(candidates.begin(), candidates.end(), by_id);
    for (std::size_t c : candidates) {
      if (members.size() >= min_support) break;
      bool near = std::any_of(members.begin(), members.end(), [&](std::size_t m) {
        return jaccard_at_least(records[c].token_shingles, records[m].token_shingles, tau);
      });
      if (near) continue;
      members.push_back(c);
      alive[c] = true;
      reinstated.push_back(c);
    }
  }
  return reinstated;
}

CurationResult curate(const std::vector<Artifact>& artifacts, const CurationParams& params) {
  if (!(params.tau > 0.0 && params.tau <= 1.0) || !(params.kappa > 0.0 && params.kappa <= 1.0))
    throw Error(ErrorCode::ConfigError, "tau and kappa must lie in (0, 1]");
  CurationResult out;
  out.records = params.workers > 1 ? fingerprint_parallel(artifacts, params.workers) : fingerprint_serial(artifacts);
  const auto& records = out.records;
  std::vector<bool> alive(records.size(), true);
  auto count = [](const std::vector<ClusterDecision>& ds) {
    std::size_t n = 0;
    for (const auto& d : ds) n += d.removed.size();
    return n;
  };
  auto exact = exact_dups(records, alive);
  auto lexical = lexical_near_dups(records, alive, params.tau);
  auto structural = structural_dups(records, alive, params.kappa);
  auto topped = diversity_top_up(records, alive, params.min_support, params.tau);

  CurationReport& r = out.report;
  r.input_count = records.size();
  r.removed_exact = count(exact);
  r.removed_lexical = count(lexical);
  r.removed_structural = count(structural);
  r.topped_up = topped.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].parsed) ++r.unparsed;
    if (!alive[i]) continue;
    out.kept.push_back(records[i].artifact_id);
    ++r.per_family_counts[records[i].family];
    ++r.per_source_counts[records[i].source.empty() ? "unknown" : records[i].source];
  }
  std::sort(out.kept.begin(), out.kept.end());
  r.output_count = out.kept.size();
  for (auto* stage : {&exact, &lexical, &structural})
    out.decisions.insert(out.decisions.end(), stage->begin(), stage->end());
  for (std::size_t i : topped) out.topped_up.push_back(records[i].artifact_id);
  return out;
}

std::vector<Artifact> load_artifacts(const fs::path& input) {
  std::vector<Artifact> out;
  if (fs::is_directory(input)) {
    for (auto it = fs::recursive_directory_iterator(input); it != fs::recursive_directory_iterator(); ++it) {
      if (!it->is_regular_file() || it->path().extension() != ".py") continue;
      std::ifstream f(it->path(), std::ios::binary);
      std::ostringstream ss;
      ss << f.rdbuf();
      out.push_back(Artifact{fs::relative(it->path(), input).generic_string(), ss.str(), ""});
    }
  } else {
    std::ifstream f(input, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot read " + input.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto j = nlohmann::json::parse(line);
        out.push_back(Artifact{j.at("id").get<std::string>(), j.at("code").get<std::string>(), j.value("source", "")});
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, input.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Artifact& a, const Artifact& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].id == out[i - 1].id) throw Error(ErrorCode::ConfigError, "duplicate artifact id '" + out[i].id + "'");
  return out;
}

nlohmann::ordered_json report_to_json(const CurationReport& r, const CurationParams& p) {
  using oj = nlohmann::ordered_json;
  auto pct = [](std::size_t part, std::size_t whole) {
    return whole == 0 ? 0.0 : static_cast<double>(part) * 100.0 / static_cast<double>(whole);
  };
  const std::size_t removed = r.removed_exact + r.removed_lexical + r.removed_structural;
  oj families = oj::object(), sources = oj::object();
  for (const auto& [k, v] : r.per_family_counts) families[k] = v;
  for (const auto& [k, v] : r.per_source_counts) sources[k] = {{"count", v}, {"percentage", pct(v, r.output_count)}};
  return oj{{"total_records_fetched", r.input_count},
            {"total_records", r.output_count},
            {"total_records_percentage", pct(r.output_count, r.input_count)},
            {"exact_duplicates_removed", r.removed_exact},
            {"exact_duplicates_percentage", pct(r.removed_exact, removed)},
            {"lexical_near_duplicates_removed", r.removed_lexical},
            {"lexical_near_duplicates_percentage", pct(r.removed_lexical, removed)},
            {"structural_duplicates_removed", r.removed_structural},
            {"structural_duplicates_percentage", pct(r.removed_structural, removed)},
            {"diversity_top_up_reinstated", r.topped_up},
            {"unparsed_passed_through", r.unparsed},
            {"per_family_counts", families},
            {"per_source_counts", sources},
            {"parameters",
             {{"tau", p.tau},
              {"kappa", p.kappa},
              {"min_support", p.min_support},
              {"shingle_k", kShingleK},
              {"minhash_permutations", kMinHashPerms},
              {"lsh_bands", kLshBands},
              {"lsh_rows", kLshRows},
              {"fingerprint_height", kFingerprintHeight}}}};
}

void write_curation_output(const CurationResult& result, const std::vector<Artifact>& artifacts,
                           const CurationParams& params, const fs::path& dir) {
  fs::path kept_dir = dir / "kept";
  std::error_code ec;
  fs::remove_all(kept_dir, ec);
  fs::create_directories(kept_dir);
  std::map<std::string, const Artifact*> by_id;
  for (const auto& a : artifacts) by_id[a.id] = &a;
  for (const auto& id : result.kept) {
    fs::path rel = fs::path(id).lexically_normal();
    if (rel.is_absolute() || rel.empty() || *rel.begin() == "..")
      throw Error(ErrorCode::ConfigError, "artifact id escapes the output directory: " + id);
    if (rel.extension() != ".py") rel += ".py";
    write_file(kept_dir / rel, by_id.at(id)->code);
  }
  std::string lines;
  for (const auto& d : result.decisions) {
    nlohmann::ordered_json j{{"stage", to_string(d.stage)},
                             {"kept", d.kept},
                             {"removed", d.removed},
                             {"similarity", d.similarity}};
    lines += j.dump() + "\n";
  }
  for (const auto& id : result.topped_up) lines += nlohmann::ordered_json{{"stage", "TopUp"}, {"reinstated", id}}.dump() + "\n";
  write_file(dir / "decisions.jsonl", lines);
  write_file(dir / "curation_report.json", report_to_json(result.report, params).dump(2) + "\n");
}

}  // namespace blockforge
