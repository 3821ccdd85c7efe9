#include "seqnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "seqnet/error.hpp"
#include "seqnet/io_util.hpp"
#include "seqnet/trainer.hpp"

namespace seqnet {

double RecallReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw Error(ErrorCode::InvalidSpec, "recall@" + std::to_string(k) + " not in report");
}

RecallReport recall_at_k(const MatchTable& table, const GroundTruth& gt, const std::vector<std::size_t>& ks,
                         bool include_empty) {
  if (ks.empty()) throw Error(ErrorCode::InvalidSpec, "need at least one K");
  RecallReport report;
  report.method = table.method;
  report.K = table.K;
  report.L_m = table.L_m;
  report.ks = ks;
  std::ranges::sort(report.ks);
  report.comparison_count = table.comparison_count;

  std::vector<std::size_t> hits(report.ks.size(), 0);
  for (std::size_t q = 0; q < table.ranked.size(); ++q) {
    const std::size_t frame = table.query_frames[q];
    if (frame >= gt.pairs.size()) {
      throw Error(ErrorCode::MissingGroundTruth, "no ground truth for query frame " + std::to_string(frame));
    }
    const auto& positives = gt.pairs[frame];
    if (positives.empty()) {
      if (include_empty) {
        ++report.n_queries;
      } else {
        ++report.n_excluded;
      }
      continue;
    }
    ++report.n_queries;
    // Rank (1-based) of the first correct candidate, if any.
    std::optional<std::size_t> first;
    for (std::size_t r = 0; r < table.ranked[q].size(); ++r) {
      const std::size_t ref_frame = table.ref_frames[table.ranked[q][r].ref];
      if (std::binary_search(positives.begin(), positives.end(), ref_frame)) {
        first = r + 1;
        break;
      }
    }
    if (!first) continue;
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
      if (*first <= report.ks[i]) ++hits[i];
    }
  }
  for (std::size_t h : hits) {
    report.recall.push_back(report.n_queries == 0 ? 0.0
                                                  : static_cast<double>(h) / static_cast<double>(report.n_queries));
  }
  return report;
}

namespace {

DescriptorList raw_per_frame(const Traverse& t) {
  DescriptorList out(t.size());
  for (std::size_t f = 0; f < t.size(); ++f) {
    const auto row = t.descriptors.data.row(f);
    out[f].values.assign(row.begin(), row.end());
    out[f].source_window = {f, 1};
  }
  return out;
}

DescriptorList at_centers(const DescriptorList& list, const std::vector<std::size_t>& centers) {
  DescriptorList out;
  out.reserve(centers.size());
  std::size_t pos = 0;
  for (std::size_t c : centers) {
    while (pos < list.size() && list[pos].source_window.center() < c) ++pos;
    if (pos == list.size() || list[pos].source_window.center() != c) {
      throw Error(ErrorCode::WindowOutOfRange, "no descriptor centered at frame " + std::to_string(c));
    }
    out.push_back(list[pos]);
  }
  return out;
}

bool wanted(const ProtocolConfig& cfg, const std::string& tag) {
  return cfg.methods.empty() || std::ranges::find(cfg.methods, tag) != cfg.methods.end();
}

std::string seq_tag(const SeqNetModel& m) { return "S" + std::to_string(m.L_d); }

}  // namespace

std::vector<std::string> protocol_methods(const ProtocolModels& models, const ProtocolConfig& cfg) {
  std::vector<std::string> all{"single", "smoothing", "delta"};
  if (models.sequential) all.push_back(seq_tag(*models.sequential));
  if (models.s1) all.push_back("S1");
  all.push_back("single+seqmatch");
  if (models.s1) all.push_back("S1+seqmatch");
  if (models.s1 && models.sequential) all.push_back("hvpr");
  if (cfg.reverse_db) {
    all.push_back("single+revseqmatch");
    if (models.s1) all.push_back("S1+revseqmatch");
    if (models.s1 && models.sequential) all.push_back("hvpr+revseqmatch");
  }
  std::vector<std::string> out;
  for (auto& tag : all) {
    if (wanted(cfg, tag)) out.push_back(tag);
  }
  return out;
}

ProtocolResult run_protocol(const Traverse& ref_in, const Traverse& qry_in, const ProtocolModels& models,
                            const ProtocolConfig& cfg) {
  if (cfg.K == 0 || cfg.L_m == 0) throw Error(ErrorCode::InvalidSpec, "K and L_m must be positive");
  if (cfg.baseline_length % 2 == 0) throw Error(ErrorCode::InvalidSpec, "baseline_length must be odd");
  if (models.s1 && (models.s1->L_d != 1 || models.s1->w != 1)) {
    throw Error(ErrorCode::InvalidSpec, "S1 model must have L_d = w = 1");
  }
  const Traverse ref = prepared(cfg.reverse_db ? reverse_traverse(ref_in) : ref_in);
  const Traverse qry = prepared(qry_in);
  const GroundTruth gt = associate(ref, qry, cfg.radius);

  std::size_t margin = std::max(cfg.L_m / 2, cfg.baseline_length / 2);
  if (models.sequential) margin = std::max(margin, models.sequential->L_d / 2);
  if (ref.size() < 2 * margin + 1 || qry.size() < 2 * margin + 1) {
    throw Error(ErrorCode::SequenceTooLong, "traverses are too short for the configured windows");
  }
  auto centers_for = [margin](std::size_t n) {
    std::vector<std::size_t> c;
    for (std::size_t f = margin; f + margin < n; ++f) c.push_back(f);
    return c;
  };
  const auto ref_centers = centers_for(ref.size());
  const auto qry_centers = centers_for(qry.size());

  const std::size_t keep = std::max(cfg.K, *std::ranges::max_element(cfg.ks));
  ProtocolResult result;
  result.centers = qry_centers;

  auto record = [&](MatchTable table, const std::string& tag, std::vector<StageTiming> timings = {}) {
    table.method = tag;
    auto report = recall_at_k(table, gt, cfg.ks, cfg.include_empty);
    report.timings = std::move(timings);
    result.reports.push_back(std::move(report));
    result.tables.push_back(std::move(table));
  };
  auto timed = [](const std::string& stage, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto out = fn();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return std::pair{std::move(out), StageTiming{stage, ms, 0.0, 1}};
  };
  auto retrieve = [&](const DescriptorList& r, const DescriptorList& q, const std::string& tag) {
    auto [table, t] = timed("match", [&] { return retrieve_topk(at_centers(r, ref_centers), at_centers(q, qry_centers), keep, cfg.threads); });
    record(std::move(table), tag, {t});
  };
  auto seqmatch = [&](const DescriptorList& r, const DescriptorList& q, bool reverse, const std::string& tag) {
    SeqMatchOptions opt;
    opt.reverse = reverse;
    opt.keep = keep;
    opt.threads = cfg.threads;
    opt.query_frames = qry_centers;
    opt.ref_frames = ref_centers;
    auto [table, t] = timed("match", [&] { return seqmatch_full(r, q, cfg.L_m, opt); });
    record(std::move(table), tag, {t});
  };

  const auto raw_ref = raw_per_frame(ref);
  const auto raw_qry = raw_per_frame(qry);
  std::optional<DescriptorList> s1_ref, s1_qry, seq_ref, seq_qry;
  if (models.s1) {
    s1_ref = forward_batch(*models.s1, ref, 1);
    s1_qry = forward_batch(*models.s1, qry, 1);
  }
  if (models.sequential) {
    seq_ref = forward_batch(*models.sequential, ref, models.sequential->L_d);
    seq_qry = forward_batch(*models.sequential, qry, models.sequential->L_d);
  }

  for (const auto& tag : protocol_methods(models, cfg)) {
    if (tag == "single") {
      retrieve(raw_ref, raw_qry, tag);
    } else if (tag == "smoothing") {
      retrieve(smoothing_descriptor(ref, cfg.baseline_length), smoothing_descriptor(qry, cfg.baseline_length), tag);
    } else if (tag == "delta") {
      retrieve(delta_descriptor(ref, cfg.baseline_length), delta_descriptor(qry, cfg.baseline_length), tag);
    } else if (tag == "S1") {
      retrieve(*s1_ref, *s1_qry, tag);
    } else if (tag == "single+seqmatch" || tag == "single+revseqmatch") {
      seqmatch(raw_ref, raw_qry, tag == "single+revseqmatch", tag);
    } else if (tag == "S1+seqmatch" || tag == "S1+revseqmatch") {
      seqmatch(*s1_ref, *s1_qry, tag == "S1+revseqmatch", tag);
    } else if (tag == "hvpr" || tag == "hvpr+revseqmatch") {
      HvprOptions opt;
      opt.reverse = tag == "hvpr+revseqmatch";
      opt.threads = cfg.threads;
      auto [shortlist, t1] = timed("shortlist", [&] {
        return retrieve_topk(at_centers(*seq_ref, ref_centers), at_centers(*seq_qry, qry_centers), cfg.K, cfg.threads);
      });
      auto [table, t2] = timed("rerank", [&] { return rerank_shortlist(shortlist, *s1_ref, *s1_qry, cfg.L_m, opt); });
      table.comparison_count += shortlist.comparison_count;
      record(std::move(table), tag, {t1, t2});
    } else {
      // The sequential model row.
      retrieve(*seq_ref, *seq_qry, tag);
    }
  }
  return result;
}

StageTiming bench_timing(const std::function<void()>& op, std::size_t repetitions, std::size_t warmup,
                         const std::string& stage) {
  if (repetitions < 2) throw Error(ErrorCode::InvalidSpec, "bench_timing needs at least 2 repetitions");
  for (std::size_t i = 0; i < warmup; ++i) op();
  std::vector<double> samples;
  samples.reserve(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    op();
    samples.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(samples.size() - 1);
  return {stage, mean, std::sqrt(var), samples.size()};
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<RecallReport>& reports) {
  std::ostringstream out;
  out.precision(10);
  out << "method,K,L_m,n_queries,n_excluded,comparison_count";
  const auto& ks = reports.empty() ? std::vector<std::size_t>{} : reports.front().ks;
  for (auto k : ks) out << ",recall@" << k;
  out << '\n';
  for (const auto& r : reports) {
    out << r.method << ',' << r.K << ',' << r.L_m << ',' << r.n_queries << ',' << r.n_excluded << ','
        << r.comparison_count;
    for (double v : r.recall) out << ',' << v;
    out << '\n';
  }
  io::write_file(path, out.str());
}

std::string reports_json(const std::vector<RecallReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["K"] = r.K;
    j["L_m"] = r.L_m;
    j["n_queries"] = r.n_queries;
    j["n_excluded"] = r.n_excluded;
    j["comparison_count"] = r.comparison_count;
    nlohmann::ordered_json recall;
    for (std::size_t i = 0; i < r.ks.size(); ++i) recall[std::to_string(r.ks[i])] = r.recall[i];
    j["recall"] = recall;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string format_reports_table(const std::vector<RecallReport>& reports) {
  std::ostringstream out;
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  const auto& ks = reports.empty() ? std::vector<std::size_t>{} : reports.front().ks;
  out << std::left << std::setw(static_cast<int>(width) + 2) << "method";
  for (auto k : ks) out << std::right << std::setw(10) << ("R@" + std::to_string(k));
  out << std::right << std::setw(16) << "comparisons" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << r.method;
    for (double v : r.recall) out << std::right << std::setw(10) << v;
    out << std::right << std::setw(16) << r.comparison_count << '\n';
  }
  return out.str();
}

}  // namespace seqnet
