#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqnet/model.hpp"

namespace seqnet {

using DescriptorList = std::vector<SeqDescriptor>;

struct Candidate {
  std::size_t ref = 0;  // index into MatchTable::ref_frames
  double score = 0.0;
  bool operator==(const Candidate&) const = default;
};

/// Per-query ranked candidates, ascending by score with ties broken by the
/// lower reference index.
struct MatchTable {
  std::string method;
  std::size_t K = 0;
  std::size_t L_m = 0;
  std::vector<std::size_t> query_frames;  // center frame of each query row
  std::vector<std::size_t> ref_frames;    // center frame of each reference candidate index
  std::vector<std::vector<Candidate>> ranked;
  std::uint64_t comparison_count = 0;
  std::uint64_t inadmissible = 0;  // candidates skipped because a window did not fit

  bool operator==(const MatchTable&) const = default;
};

double descriptor_distance(std::span<const float> a, std::span<const float> b);

/// Ranks every reference descriptor for each query and keeps the K best.
MatchTable retrieve_topk(const DescriptorList& ref, const DescriptorList& qry, std::size_t K, unsigned threads = 1);

/// Aligned trailing-window score: sum_{t < L_m} |S1[qry, i - t] - S1[ref, k - t]|.
/// Indices address the lists directly (per-frame descriptors).
double seqmatch_score(const DescriptorList& ref_s1, const DescriptorList& qry_s1, std::size_t i, std::size_t k,
                      std::size_t L_m);

/// Query trailing window against the reference window running forward from k:
/// sum_{t < L_m} |S1[qry, i - t] - S1[ref, k + t]|.
double reverse_seqmatch_score(const DescriptorList& ref_s1, const DescriptorList& qry_s1, std::size_t i,
                              std::size_t k, std::size_t L_m);

/// Sequence score between windows identified by their center frames, using the
/// same center convention as sequential descriptors. Returns nullopt when
/// either window does not fit inside its traverse.
std::optional<double> seqmatch_centered(const DescriptorList& ref_s1, const DescriptorList& qry_s1,
                                        std::size_t query_center, std::size_t ref_center, std::size_t L_m,
                                        bool reverse = false);

struct SeqMatchOptions {
  bool reverse = false;
  std::size_t keep = 0;  // candidates kept per query; 0 keeps all
  unsigned threads = 1;
  std::optional<std::vector<std::size_t>> query_frames;  // defaults to every admissible center
  std::optional<std::vector<std::size_t>> ref_frames;
};

/// Exhaustive sequence matching of every query center against every admissible
/// reference center. Per-frame lists must be indexed by frame.
MatchTable seqmatch_full(const DescriptorList& ref_s1, const DescriptorList& qry_s1, std::size_t L_m,
                         const SeqMatchOptions& options = {});

struct HvprOptions {
  bool reverse = false;
  unsigned threads = 1;
};

/// Shortlists K candidates with sequential descriptors, then re-ranks only the
/// shortlist by sequence score over the single-image descriptors.
MatchTable hvpr_match(const DescriptorList& ref_seq, const DescriptorList& qry_seq, const DescriptorList& ref_s1,
                      const DescriptorList& qry_s1, std::size_t K, std::size_t L_m, const HvprOptions& options = {});

/// Re-ranking stage of hvpr_match on an existing shortlist table.
MatchTable rerank_shortlist(const MatchTable& shortlist, const DescriptorList& ref_s1, const DescriptorList& qry_s1,
                            std::size_t L_m, const HvprOptions& options = {});

/// Admissible window centers for a sequence of length L over n frames.
std::vector<std::size_t> admissible_centers(std::size_t n, std::size_t L);

void write_match_table(const std::filesystem::path& path, const MatchTable& table);

}  // namespace seqnet
