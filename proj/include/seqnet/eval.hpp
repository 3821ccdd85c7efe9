#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seqnet/corpus.hpp"
#include "seqnet/matcher.hpp"
#include "seqnet/model.hpp"

namespace seqnet {

struct StageTiming {
  std::string stage;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t samples = 0;
};

struct RecallReport {
  std::string method;
  std::size_t K = 0;
  std::size_t L_m = 0;
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // recall[i] is recall@ks[i]
  std::size_t n_queries = 0;   // queries in the denominator
  std::size_t n_excluded = 0;  // queries dropped for having no positives
  std::uint64_t comparison_count = 0;
  std::vector<StageTiming> timings;

  double at(std::size_t k) const;
};

/// Fraction of queries whose top-k candidates contain a reference center within
/// the ground-truth radius of the query center. Queries without positives are
/// excluded unless include_empty, in which case they count as misses.
RecallReport recall_at_k(const MatchTable& table, const GroundTruth& gt, const std::vector<std::size_t>& ks,
                         bool include_empty = false);

struct ProtocolConfig {
  std::size_t K = 20;
  std::size_t L_m = 5;
  std::size_t baseline_length = 5;  // window for the smoothing and delta baselines
  std::vector<std::size_t> ks{1, 5, 20};
  double radius = 2.0;
  bool include_empty = false;
  bool reverse_db = false;
  unsigned threads = 1;
  /// Restrict to these method tags; empty runs every applicable method.
  std::vector<std::string> methods;
};

struct ProtocolModels {
  const SeqNetModel* s1 = nullptr;
  const SeqNetModel* sequential = nullptr;
};

struct ProtocolResult {
  std::vector<RecallReport> reports;
  std::vector<MatchTable> tables;
  std::vector<std::size_t> centers;  // shared query/reference window centers
};

/// Evaluates every comparison method over one shared set of window centers so
/// that all rows have identical denominators. With reverse_db the reference
/// traverse is reversed first and reverse sequence-matching rows are added.
ProtocolResult run_protocol(const Traverse& ref, const Traverse& qry, const ProtocolModels& models,
                            const ProtocolConfig& cfg);

/// Method tags run_protocol would produce for this configuration.
std::vector<std::string> protocol_methods(const ProtocolModels& models, const ProtocolConfig& cfg);

/// Wall-clock statistics of `op` over `repetitions` timed runs after `warmup`
/// untimed runs. The standard deviation is the sample (n - 1) estimate.
StageTiming bench_timing(const std::function<void()>& op, std::size_t repetitions, std::size_t warmup = 1,
                         const std::string& stage = {});

void write_reports_csv(const std::filesystem::path& path, const std::vector<RecallReport>& reports);
std::string reports_json(const std::vector<RecallReport>& reports);
std::string format_reports_table(const std::vector<RecallReport>& reports);

}  // namespace seqnet
