#include <benchmark/benchmark.h>

#include <cstdlib>
#include <iostream>

#include "blockforge/dedup_kernels.hpp"
#include "blockforge/source_index.hpp"
#include "corpus_gen.hpp"

using namespace blockforge;

namespace {

const std::vector<Artifact>& artifacts() {
  static const std::vector<Artifact> a = [] {
    testing::CorpusGenerator gen(2024);
    return testing::artifacts_of(gen.corpus(2000));
  }();
  return a;
}

const std::vector<AnalysisInput>& inputs() {
  static const std::vector<AnalysisInput> in = [] {
    std::vector<AnalysisInput> v;
    for (const auto& a : artifacts()) v.push_back({"bench/corpus", "pkg/" + a.id, a.code});
    return v;
  }();
  return in;
}

void check_agreement() {
  auto s = analyze_sources_serial(inputs());
  auto p = analyze_sources_parallel(inputs(), 4);
  for (std::size_t i = 0; i < s.size(); ++i) s[i].file.indexed_at = p[i].file.indexed_at = 0;
  if (s != p || fingerprint_serial(artifacts()) != fingerprint_parallel(artifacts(), 4)) {
    std::cerr << "serial and parallel kernels disagree\n";
    std::exit(1);
  }
}

void set_counters(benchmark::State& state, std::size_t items, std::size_t bytes) {
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * items));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
}

std::size_t total_bytes() {
  std::size_t n = 0;
  for (const auto& a : artifacts()) n += a.code.size();
  return n;
}

void BM_AnalyzeSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(analyze_sources_serial(inputs()));
  set_counters(state, inputs().size(), total_bytes());
}

void BM_AnalyzeParallel(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(analyze_sources_parallel(inputs(), workers));
  set_counters(state, inputs().size(), total_bytes());
}

void BM_FingerprintSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fingerprint_serial(artifacts()));
  set_counters(state, artifacts().size(), total_bytes());
}

void BM_FingerprintParallel(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fingerprint_parallel(artifacts(), workers));
  set_counters(state, artifacts().size(), total_bytes());
}

}  // namespace

BENCHMARK(BM_AnalyzeSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AnalyzeParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FingerprintSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FingerprintParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

int main(int argc, char** argv) {
  check_agreement();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
