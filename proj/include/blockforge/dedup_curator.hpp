#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockforge/dedup_kernels.hpp"

namespace blockforge {

enum class DedupStage { Exact, Lexical, Structural };
std::string_view to_string(DedupStage s);

struct ClusterDecision {
  std::string kept;
  std::vector<std::string> removed;  // sorted
  DedupStage stage = DedupStage::Exact;
  double similarity = 1.0;  // smallest verified similarity inside the cluster

  bool operator==(const ClusterDecision&) const = default;
};

struct CurationParams {
  double tau = 0.90;
  double kappa = 0.95;
  std::size_t min_support = 3;
  int workers = 1;
};

struct CurationReport {
  std::size_t input_count = 0;
  std::size_t output_count = 0;
  std::size_t removed_exact = 0;
  std::size_t removed_lexical = 0;
  std::size_t removed_structural = 0;
  std::size_t topped_up = 0;
  std::size_t unparsed = 0;  // raw-bytes artifacts, skipped by the structural stage
  std::map<std::string, std::size_t> per_family_counts;  // output
  std::map<std::string, std::size_t> per_source_counts;  // output

  bool balanced() const {
    return input_count + topped_up == output_count + removed_exact + removed_lexical + removed_structural;
  }
};

struct CurationResult {
  CurationReport report;
  std::vector<std::string> kept;  // sorted ids
  std::vector<ClusterDecision> decisions;
  std::vector<std::string> topped_up;  // reinstated ids, in reinstatement order
  std::vector<DedupRecord> records;    // input order
};

// Stage kernels over `records`; `alive` marks artifacts still in play and
// is updated in place.
std::vector<ClusterDecision> exact_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive);
std::vector<ClusterDecision> lexical_near_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                               double tau = 0.90);
std::vector<ClusterDecision> structural_dups(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                             double kappa = 0.95);
// Reinstates removed members of families below min_support, in id order,
// skipping any candidate with shingle Jaccard >= tau against a kept member
// of its family. Returns reinstated positions; updates `alive`.
std::vector<std::size_t> diversity_top_up(const std::vector<DedupRecord>& records, std::vector<bool>& alive,
                                          std::size_t min_support, double tau = 0.90);

CurationResult curate(const std::vector<Artifact>& artifacts, const CurationParams& params = {});

// A directory of .py files (id = path relative to it) or a JSON lines file
// of {"id", "code", optional "source"}. Sorted by id; duplicate ids rejected.
std::vector<Artifact> load_artifacts(const std::filesystem::path& input);

nlohmann::ordered_json report_to_json(const CurationReport& report, const CurationParams& params);

// curation_output/: kept/<id>, decisions.jsonl, curation_report.json
void write_curation_output(const CurationResult& result, const std::vector<Artifact>& artifacts,
                           const CurationParams& params, const std::filesystem::path& dir);

}  // namespace blockforge
