#include "seqnet/matcher.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "seqnet/error.hpp"
#include "seqnet/io_util.hpp"
#include "seqnet/parallel.hpp"

namespace seqnet {

namespace {

bool ranks_before(const Candidate& a, const Candidate& b) {
  return a.score < b.score || (a.score == b.score && a.ref < b.ref);
}

void rank(std::vector<Candidate>& c, std::size_t keep) {
  if (keep == 0 || keep >= c.size()) {
    std::sort(c.begin(), c.end(), ranks_before);
    return;
  }
  std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(keep), c.end(), ranks_before);
  c.resize(keep);
}

void check_lists(const DescriptorList& ref, const DescriptorList& qry) {
  if (ref.empty()) throw Error(ErrorCode::EmptyReference, "reference descriptor list is empty");
  if (qry.empty()) throw Error(ErrorCode::InvalidSpec, "query descriptor list is empty");
  const std::size_t d = ref.front().values.size();
  auto bad = [d](const SeqDescriptor& s) { return s.values.size() != d; };
  if (std::ranges::any_of(ref, bad) || std::ranges::any_of(qry, bad)) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor dimensions differ");
  }
}

std::vector<std::size_t> centers_of(const DescriptorList& list) {
  std::vector<std::size_t> out;
  out.reserve(list.size());
  for (const auto& s : list) out.push_back(s.source_window.center());
  return out;
}

// Window [center - L/2, center - L/2 + L) inside [0, n).
bool forward_fits(std::size_t n, std::size_t center, std::size_t L) {
  return center >= L / 2 && center - L / 2 + L <= n;
}

// Mirrored window [center + L/2 - (L - 1), center + L/2] inside [0, n).
bool mirrored_fits(std::size_t n, std::size_t center, std::size_t L) {
  return center + L / 2 < n && center + L / 2 >= L - 1;
}

}  // namespace

double descriptor_distance(std::span<const float> a, std::span<const float> b) {
  double sq = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double diff = double{a[c]} - double{b[c]};
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

MatchTable retrieve_topk(const DescriptorList& ref, const DescriptorList& qry, std::size_t K, unsigned threads) {
  check_lists(ref, qry);
  if (K == 0) throw Error(ErrorCode::InvalidSpec, "K must be at least 1");
  MatchTable table;
  table.method = "retrieve";
  table.K = K;
  table.query_frames = centers_of(qry);
  table.ref_frames = centers_of(ref);
  table.ranked.resize(qry.size());
  std::atomic<std::uint64_t> comparisons{0};
  parallel_for(qry.size(), threads, [&](std::size_t i) {
    std::vector<Candidate> row(ref.size());
    for (std::size_t j = 0; j < ref.size(); ++j) row[j] = {j, descriptor_distance(qry[i].values, ref[j].values)};
    comparisons.fetch_add(ref.size(), std::memory_order_relaxed);
    rank(row, K);
    table.ranked[i] = std::move(row);
  });
  table.comparison_count = comparisons.load();
  return table;
}

double seqmatch_score(const DescriptorList& ref_s1, const DescriptorList& qry_s1, std::size_t i, std::size_t k,
                      std::size_t L_m) {
  if (L_m == 0) throw Error(ErrorCode::InvalidSpec, "L_m must be at least 1");
  if (i + 1 < L_m || k + 1 < L_m || i >= qry_s1.size() || k >= ref_s1.size()) {
    throw Error(ErrorCode::WindowOutOfRange, "trailing window of length " + std::to_string(L_m) + " at query " +
                                                 std::to_string(i) + ", reference " + std::to_string(k));
  }
  double score = 0.0;
  for (std::size_t t = 0; t < L_m; ++t) score += descriptor_distance(qry_s1[i - t].values, ref_s1[k - t].values);
  return score;
}

double reverse_seqmatch_score(const DescriptorList& ref_s1, const DescriptorList& qry_s1, std::size_t i,
                              std::size_t k, std::size_t L_m) {
  if (L_m == 0) throw Error(ErrorCode::InvalidSpec, "L_m must be at least 1");
  if (i + 1 < L_m || i >= qry_s1.size() || k + L_m > ref_s1.size()) {
    throw Error(ErrorCode::WindowOutOfRange, "reverse window of length " + std::to_string(L_m) + " at query " +
                                                 std::to_string(i) + ", reference " + std::to_string(k));
  }
  double score = 0.0;
  for (std::size_t t = 0; t < L_m; ++t) score += descriptor_distance(qry_s1[i - t].values, ref_s1[k + t].values);
  return score;
}

std::optional<double> seqmatch_centered(const DescriptorList& ref_s1, const DescriptorList& qry_s1,
                                        std::size_t query_center, std::size_t ref_center, std::size_t L_m,
                                        bool reverse) {
  if (L_m == 0) throw Error(ErrorCode::InvalidSpec, "L_m must be at least 1");
  if (!forward_fits(qry_s1.size(), query_center, L_m)) return std::nullopt;
  const std::size_t i = query_center - L_m / 2 + L_m - 1;
  if (!reverse) {
    if (!forward_fits(ref_s1.size(), ref_center, L_m)) return std::nullopt;
    return seqmatch_score(ref_s1, qry_s1, i, ref_center - L_m / 2 + L_m - 1, L_m);
  }
  if (!mirrored_fits(ref_s1.size(), ref_center, L_m)) return std::nullopt;
  return reverse_seqmatch_score(ref_s1, qry_s1, i, ref_center + L_m / 2 - (L_m - 1), L_m);
}

std::vector<std::size_t> admissible_centers(std::size_t n, std::size_t L) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n; ++c) {
    if (forward_fits(n, c, L)) out.push_back(c);
  }
  return out;
}

MatchTable seqmatch_full(const DescriptorList& ref_s1, const DescriptorList& qry_s1, std::size_t L_m,
                         const SeqMatchOptions& options) {
  check_lists(ref_s1, qry_s1);
  if (L_m == 0) throw Error(ErrorCode::InvalidSpec, "L_m must be at least 1");
  if (L_m > ref_s1.size() || L_m > qry_s1.size()) {
    throw Error(ErrorCode::SequenceTooLong, "L_m exceeds traverse length");
  }
  MatchTable table;
  table.method = options.reverse ? "seqmatch-reverse" : "seqmatch";
  table.L_m = L_m;
  table.query_frames = options.query_frames ? *options.query_frames : admissible_centers(qry_s1.size(), L_m);
  if (options.ref_frames) {
    table.ref_frames = *options.ref_frames;
  } else {
    for (std::size_t c = 0; c < ref_s1.size(); ++c) {
      const bool fits =
          options.reverse ? mirrored_fits(ref_s1.size(), c, L_m) : forward_fits(ref_s1.size(), c, L_m);
      if (fits) table.ref_frames.push_back(c);
    }
  }
  if (table.ref_frames.empty()) throw Error(ErrorCode::EmptyReference, "no admissible reference windows");
  table.ranked.resize(table.query_frames.size());
  std::atomic<std::uint64_t> comparisons{0};
  std::atomic<std::uint64_t> skipped{0};
  parallel_for(table.query_frames.size(), options.threads, [&](std::size_t q) {
    const std::size_t qc = table.query_frames[q];
    if (!forward_fits(qry_s1.size(), qc, L_m)) {
      throw Error(ErrorCode::WindowOutOfRange, "query center " + std::to_string(qc) + " has no full window");
    }
    std::vector<Candidate> row;
    row.reserve(table.ref_frames.size());
    std::uint64_t local_skipped = 0;
    for (std::size_t j = 0; j < table.ref_frames.size(); ++j) {
      const auto score = seqmatch_centered(ref_s1, qry_s1, qc, table.ref_frames[j], L_m, options.reverse);
      if (!score) {
        ++local_skipped;
        continue;
      }
      row.push_back({j, *score});
    }
    comparisons.fetch_add(row.size() * L_m, std::memory_order_relaxed);
    skipped.fetch_add(local_skipped, std::memory_order_relaxed);
    rank(row, options.keep);
    table.ranked[q] = std::move(row);
  });
  table.comparison_count = comparisons.load();
  table.inadmissible = skipped.load();
  return table;
}

MatchTable rerank_shortlist(const MatchTable& shortlist, const DescriptorList& ref_s1, const DescriptorList& qry_s1,
                            std::size_t L_m, const HvprOptions& options) {
  if (L_m == 0) throw Error(ErrorCode::InvalidSpec, "L_m must be at least 1");
  MatchTable table;
  table.method = options.reverse ? "hvpr-reverse" : "hvpr";
  table.K = shortlist.K;
  table.L_m = L_m;
  table.query_frames = shortlist.query_frames;
  table.ref_frames = shortlist.ref_frames;
  table.ranked.resize(shortlist.ranked.size());
  std::atomic<std::uint64_t> comparisons{0};
  std::atomic<std::uint64_t> skipped{0};
  parallel_for(shortlist.ranked.size(), options.threads, [&](std::size_t q) {
    std::vector<Candidate> row;
    row.reserve(shortlist.ranked[q].size());
    std::uint64_t local_skipped = 0;
    for (const auto& cand : shortlist.ranked[q]) {
      const auto score = seqmatch_centered(ref_s1, qry_s1, table.query_frames[q], table.ref_frames[cand.ref], L_m,
                                           options.reverse);
      if (!score) {
        ++local_skipped;
        continue;
      }
      row.push_back({cand.ref, *score});
    }
    comparisons.fetch_add(row.size() * L_m, std::memory_order_relaxed);
    skipped.fetch_add(local_skipped, std::memory_order_relaxed);
    rank(row, 0);
    table.ranked[q] = std::move(row);
  });
  table.comparison_count = comparisons.load();
  table.inadmissible = skipped.load();
  return table;
}

MatchTable hvpr_match(const DescriptorList& ref_seq, const DescriptorList& qry_seq, const DescriptorList& ref_s1,
                      const DescriptorList& qry_s1, std::size_t K, std::size_t L_m, const HvprOptions& options) {
  check_lists(ref_s1, qry_s1);
  const auto shortlist = retrieve_topk(ref_seq, qry_seq, K, options.threads);
  auto table = rerank_shortlist(shortlist, ref_s1, qry_s1, L_m, options);
  table.comparison_count += shortlist.comparison_count;
  return table;
}

void write_match_table(const std::filesystem::path& path, const MatchTable& table) {
  std::ostringstream out;
  out.precision(9);
  out << "query_center,rank,ref_center,score,method,K,L_m\n";
  for (std::size_t q = 0; q < table.ranked.size(); ++q) {
    for (std::size_t r = 0; r < table.ranked[q].size(); ++r) {
      const auto& c = table.ranked[q][r];
      out << table.query_frames[q] << ',' << r + 1 << ',' << table.ref_frames[c.ref] << ',' << c.score << ','
          << table.method << ',' << table.K << ',' << table.L_m << '\n';
    }
  }
  io::write_file(path, out.str());
}

}  // namespace seqnet
