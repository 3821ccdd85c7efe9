// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Usage: acceptance [path-to-unit_tests]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "seqnet/eval.hpp"
#include "seqnet/io_util.hpp"
#include "seqnet/matcher.hpp"
#include "seqnet/model.hpp"
#include "seqnet/trainer.hpp"

using namespace seqnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool run_criterion(int id, const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double took = seconds_since(t0);
  o.require(took < budget_s, "runtime over " + std::to_string(int(budget_s)) + " s");
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " (" << std::fixed
            << std::setprecision(1) << took << " s)" << o.detail.str() << std::endl;
  return o.pass;
}

MatrixD random_input(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixD m(n, d);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

std::vector<float> unit_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(d);
  double sq = 0.0;
  for (auto& x : v) {
    x = g(rng);
    sq += double(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(sq));
  return v;
}

DescriptorList per_frame(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  DescriptorList out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({unit_vector(d, rng), {i, 1}});
  return out;
}

DescriptorList sequential(std::size_t n, std::size_t L, std::size_t d, std::mt19937_64& rng) {
  DescriptorList out;
  for (auto c : admissible_centers(n, L)) out.push_back({unit_vector(d, rng), {c - L / 2, L}});
  return out;
}

Traverse frame_traverse(const MatrixF& m) {
  PoseTable poses;
  poses.kind = GeometryKind::FrameIndexed;
  for (std::size_t i = 0; i < m.rows(); ++i) poses.positions.push_back({double(i), 0.0});
  return make_traverse(DescriptorSet(m), poses);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::max(std::abs(analytic), std::abs(numeric)));
}

double fd_max_error(SeqNetModel m, MatrixD x, const std::vector<double>& u) {
  const double h = 1e-4;
  const auto g = backward(m, x, u);
  auto f = [&] { return dot(forward(m, x), u); };
  double worst = 0.0;
  auto probe = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + h;
    const double up = f();
    slot = keep - h;
    const double down = f();
    slot = keep;
    worst = std::max(worst, rel_err(analytic, (up - down) / (2 * h)));
  };
  for (std::size_t i = 0; i < m.kernel.size(); ++i) probe(m.kernel[i], g.d_kernel[i]);
  for (std::size_t i = 0; i < m.bias.size(); ++i) probe(m.bias[i], g.d_bias[i]);
  for (std::size_t i = 0; i < x.data().size(); ++i) probe(x.data()[i], g.d_input.data()[i]);
  return worst;
}

double brute_distance(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double x = double(a[c]) - double(b[c]);
    s += x * x;
  }
  return std::sqrt(s);
}

std::map<std::string, double> recall1(const ProtocolResult& r) {
  std::map<std::string, double> out;
  for (const auto& rep : r.reports) out[rep.method] = rep.at(1);
  return out;
}

std::string fmt(const std::map<std::string, double>& r, std::initializer_list<const char*> keys) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3);
  for (const char* k : keys) s << ' ' << k << '=' << r.at(k);
  return s.str();
}

Traverse region(const Traverse& t, double lo, double hi) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.positions[i].x >= lo && t.positions[i].x < hi) keep.push_back(i);
  return select_frames(t, keep);
}

/// Synthetic benchmark shared by the qualitative criteria: models are trained on
/// the first half of the route and evaluated on the second half.
struct Benchmark {
  SynthSpec spec;
  double mid = 0.0;
  TrainResult s1, s5;
  double train_s = 0.0;

  Benchmark() {
    spec.n_places = 4000;
    spec.d = 64;
    spec.sigma = 2.0;
    spec.nuisance = 1.0;
    spec.smooth_coeff = 0.85;
    spec.radius = 10.0;
    spec.seed = 11;
    mid = spec.spacing * double(spec.n_places) / 2.0;
    const auto pair = synth_traverse_pair(spec);
    const auto t0 = Clock::now();
    TrainConfig c1;
    c1.L_d = c1.w = 1;
    c1.epochs = 60;
    c1.seed = 1;
    TrainConfig c5;
    c5.epochs = 60;
    c5.seed = 2;
    const auto ref = region(pair.reference, 0.0, mid);
    const auto qry = region(pair.query, 0.0, mid);
    s1 = train(ref, qry, c1);
    s5 = train(ref, qry, c5);
    train_s = seconds_since(t0);
  }

  ProtocolResult evaluate(double warp, bool reverse_db) const {
    SynthSpec s = spec;
    s.warp = warp;
    const auto pair = synth_traverse_pair(s);
    ProtocolConfig cfg;
    cfg.radius = spec.radius;
    cfg.reverse_db = reverse_db;
    return run_protocol(region(pair.reference, mid, 1e18), region(pair.query, mid, 1e18), {&s1.model, &s5.model},
                        cfg);
  }
};

Benchmark& benchmark() {
  static Benchmark b;
  return b;
}

std::vector<std::pair<std::string, std::vector<unsigned char>>> directory_bytes(const fs::path& dir) {
  std::vector<std::pair<std::string, std::vector<unsigned char>>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    out.emplace_back(fs::relative(e.path(), dir).string(), io::read_file(e.path()));
  }
  std::ranges::sort(out);
  return out;
}

/// synth, train and eval through the command layer into `root`.
bool pipeline(const fs::path& root, std::ostringstream& log) {
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string synth = "n_places=300\nd=16\nsigma=0.8\nseed=5\n";
  io::write_file(root / "synth.cfg", synth);
  io::write_file(root / "run.cfg",
                 "[data]\nreference=data/reference.sqds\nquery=data/query.sqds\n"
                 "reference_poses=data/reference_poses.csv\nquery_poses=data/query_poses.csv\n"
                 "[train]\nepochs=3\nn_neg=5\nseed=9\n"
                 "[models]\ns1=models/s1.sqnm\nsld=models/sld.sqnm\n"
                 "[eval]\nradius=6\nK=10\nLm=5\nreverse_db=true\n");
  std::ostringstream out, err;
  cli::CommonOptions common;
  common.threads = 1;
  common.config = root / "synth.cfg";
  common.out = root / "data";
  bool ok = cli::cmd_synth(common, out, err) == 0;
  common.config = root / "run.cfg";
  common.out = root / "models";
  ok = ok && cli::cmd_train(common, out, err) == 0;
  common.out = root / "eval";
  ok = ok && cli::cmd_eval(common, {}, out, err) == 0;
  if (!ok) log << " " << err.str();
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::cout << std::unitbuf;
  bool all = true;

  all &= run_criterion(1, "backward matches central finite differences", 30.0, [](Outcome& o) {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::pair<std::size_t, std::size_t> shapes[] = {{1, 1}, {1, 5}, {3, 5}};
    double worst = 0.0;
    std::size_t triples = 0;
    for (std::size_t trial = 0; trial < 102; ++trial) {
      const std::size_t d = trial % 2 ? 32 : 8;
      const auto [w, L] = shapes[(trial / 2) % 3];
      auto m = init_model(d, d, w, L, 1000 + trial);
      for (auto& b : m.bias) b = 0.3 * g(rng);
      const auto x = random_input(L, d, rng);
      std::vector<double> u(d);
      for (auto& v : u) v = g(rng);
      worst = std::max(worst, fd_max_error(m, x, u));
      ++triples;
    }
    o.detail << " triples=" << triples << " max_rel_err=" << std::scientific << std::setprecision(2) << worst;
    o.require(worst < 1e-4, "max relative error below 1e-4");
  });

  all &= run_criterion(2, "degenerate-case equivalences", 5.0, [](Outcome& o) {
    std::mt19937_64 rng(202);
    std::normal_distribution<float> gf(0.0f, 1.0f);
    double smooth_gap = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      MatrixF m(40, 16);
      for (auto& v : m.data()) v = gf(rng);
      const auto t = frame_traverse(m);
      const std::size_t L = 1 + 2 * (trial % 4);
      auto id = init_model(16, 16, 1, L, 1, true);
      const auto a = forward_batch(id, prepared(t), L);
      const auto b = smoothing_descriptor(prepared(t), L);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t c = 0; c < 16; ++c)
          smooth_gap = std::max(smooth_gap, double(std::abs(a[i].values[c] - b[i].values[c])));
    }
    o.require(smooth_gap < 1e-6, "identity w=1 SeqNet equals smoothing to 1e-6");

    std::normal_distribution<double> g(0.0, 1.0);
    double affine_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      auto m = init_model(12, 7, 1, 1, 300 + trial);
      for (auto& b : m.bias) b = g(rng);
      const auto x = random_input(1, 12, rng);
      std::vector<double> s(7);
      for (std::size_t r = 0; r < 7; ++r) {
        s[r] = m.bias[r];
        for (std::size_t c = 0; c < 12; ++c) s[r] += m.k(r, 0, c) * x(0, c);
      }
      const double n = std::sqrt(dot(s, s));
      const auto y = forward(m, x);
      for (std::size_t r = 0; r < 7; ++r) affine_gap = std::max(affine_gap, std::abs(y[r] - s[r] / n));
    }
    o.require(affine_gap < 1e-10, "L_d = w = 1 equals normalize(Wx + b) to 1e-10");
    o.detail << " smoothing_gap=" << std::scientific << std::setprecision(2) << smooth_gap
             << " affine_gap=" << affine_gap;
  });

  all &= run_criterion(3, "retrieval oracles are exact", 30.0, [](Outcome& o) {
    std::mt19937_64 rng(303);
    std::size_t instances = 0;
    for (const std::size_t n_db : {37, 150, 500}) {
      const std::size_t d = 8;
      auto ref = per_frame(n_db, d, rng);
      auto qry = per_frame(40, d, rng);
      // Duplicate some descriptors so ties occur and the tie-break matters.
      for (std::size_t i = 0; i + 1 < n_db; i += 7) ref[i + 1].values = ref[i].values;
      qry[3].values = ref[10].values;

      const auto top = retrieve_topk(ref, qry, n_db);
      bool sort_ok = true;
      for (std::size_t q = 0; q < qry.size(); ++q) {
        std::vector<std::pair<double, std::size_t>> brute;
        for (std::size_t r = 0; r < n_db; ++r) brute.emplace_back(brute_distance(qry[q].values, ref[r].values), r);
        std::ranges::sort(brute);
        for (std::size_t r = 0; r < n_db; ++r) sort_ok = sort_ok && top.ranked[q][r].ref == brute[r].second;
      }
      o.require(sort_ok, "top-K at K = N_db equals the brute-force sort (N_db=" + std::to_string(n_db) + ")");

      SeqMatchOptions every;
      every.query_frames = admissible_centers(qry.size(), 1);
      const auto sm1 = seqmatch_full(ref, qry, 1, every);
      bool same = sm1.ranked.size() == top.ranked.size();
      for (std::size_t q = 0; same && q < top.ranked.size(); ++q)
        for (std::size_t r = 0; r < n_db; ++r) same = same && sm1.ranked[q][r].ref == top.ranked[q][r].ref;
      o.require(same, "L_m = 1 sequence matching ranks like single retrieval");

      const std::size_t L = 5;
      const auto ref_seq = sequential(n_db, L, 6, rng);
      const auto qry_seq = sequential(qry.size(), L, 6, rng);
      SeqMatchOptions centers;
      centers.query_frames = admissible_centers(qry.size(), L);
      centers.ref_frames = admissible_centers(n_db, L);
      const auto full = seqmatch_full(ref, qry, L, centers);
      const auto hv = hvpr_match(ref_seq, qry_seq, ref, qry, ref_seq.size(), L);
      bool lossless = hv.ranked.size() == full.ranked.size();
      for (std::size_t q = 0; lossless && q < full.ranked.size(); ++q) lossless = hv.ranked[q] == full.ranked[q];
      o.require(lossless, "HVPR at K = N_db equals exhaustive sequence matching");
      instances += 3;
    }
    o.detail << " instances=" << instances;
  });

  all &= run_criterion(4, "comparison counts and stage-2 speed", 60.0, [](Outcome& o) {
    std::mt19937_64 rng(404);
    bool counts_ok = true;
    std::size_t shapes = 0;
    for (const std::size_t n : {30, 64, 201})
      for (const std::size_t L : {1, 3, 5, 9})
        for (const std::size_t K : {1, 7, 20}) {
          const auto ref = per_frame(n, 4, rng);
          const auto qry = per_frame(25, 4, rng);
          const auto ref_seq = sequential(n, L, 4, rng);
          const auto qry_seq = sequential(25, L, 4, rng);
          const std::uint64_t n_db = ref_seq.size();
          const std::uint64_t n_q = qry_seq.size();
          const auto top = retrieve_topk(ref_seq, qry_seq, K);
          SeqMatchOptions c;
          c.query_frames = admissible_centers(25, L);
          c.ref_frames = admissible_centers(n, L);
          const auto full = seqmatch_full(ref, qry, L, c);
          const auto hv = hvpr_match(ref_seq, qry_seq, ref, qry, K, L);
          const std::uint64_t k_eff = std::min<std::uint64_t>(K, n_db);
          counts_ok = counts_ok && top.comparison_count == n_q * n_db;
          counts_ok = counts_ok && full.comparison_count == n_q * n_db * L;
          counts_ok = counts_ok && hv.comparison_count == n_q * (n_db + k_eff * L);
          ++shapes;
        }
    o.require(counts_ok, "counts equal N_db, N_db*L_m and N_db + K*L_m");

    const std::size_t n = 3004, L = 5, K = 20, n_q = 40;
    const auto ref = per_frame(n, 64, rng);
    const auto qry = per_frame(n_q + L, 64, rng);
    const auto ref_seq = sequential(n, L, 64, rng);
    const auto qry_seq = sequential(n_q + L, L, 64, rng);
    const auto one = hvpr_match(ref_seq, {qry_seq[0]}, ref, qry, K, L);
    SeqMatchOptions single;
    single.query_frames = std::vector<std::size_t>{qry_seq[0].source_window.center()};
    single.ref_frames = admissible_centers(n, L);
    const auto one_full = seqmatch_full(ref, qry, L, single);
    o.require(one.comparison_count == 3100 && one_full.comparison_count == 15000, "3100 vs 15000 per query");

    const auto shortlist = retrieve_topk(ref_seq, qry_seq, K);
    SeqMatchOptions all_q;
    all_q.query_frames = admissible_centers(qry.size(), L);
    all_q.ref_frames = admissible_centers(n, L);
    const auto rerank = bench_timing([&] { rerank_shortlist(shortlist, ref, qry, L); }, 5, 1);
    const auto exhaustive = bench_timing([&] { seqmatch_full(ref, qry, L, all_q); }, 3, 1);
    const double speedup = exhaustive.mean_ms / std::max(rerank.mean_ms, 1e-6);
    o.require(speedup >= 10.0, "stage-2 re-ranking at least 10x faster than full sequence matching");
    o.detail << " shapes=" << shapes << " hvpr=" << one.comparison_count << " full=" << one_full.comparison_count
             << std::fixed << std::setprecision(3) << " rerank_ms=" << rerank.mean_ms
             << " full_ms=" << exhaustive.mean_ms << std::setprecision(0) << " speedup=" << speedup << "x";
  });

  all &= run_criterion(5, "synthetic ordering of methods", 600.0, [](Outcome& o) {
    auto& b = benchmark();
    const auto fwd = recall1(b.evaluate(0.0, false));
    const auto warped = recall1(b.evaluate(0.5, false));
    o.require(fwd.at("S5") > fwd.at("single"), "S5 beats raw single descriptors");
    o.require(fwd.at("hvpr") >= std::max(fwd.at("single+seqmatch"), fwd.at("S5")) - 0.02,
              "HVPR within 0.02 of the better of raw+SeqMatch and S5");
    o.require(warped.at("hvpr") > warped.at("single+seqmatch"), "HVPR beats raw+SeqMatch under velocity warp");
    o.detail << " train_s=" << std::fixed << std::setprecision(1) << b.train_s
             << fmt(fwd, {"single", "S5", "single+seqmatch", "hvpr"})
             << " | warp" << fmt(warped, {"single+seqmatch", "hvpr"});
  });

  all &= run_criterion(6, "reversed database", 300.0, [](Outcome& o) {
    auto& b = benchmark();
    const auto fwd = recall1(b.evaluate(0.0, false));
    const auto rev = recall1(b.evaluate(0.0, true));
    const double s5_drop = fwd.at("S5") - rev.at("S5");
    o.require(s5_drop < 0.10, "S5 loses less than 0.10");
    for (const char* m : {"single+seqmatch", "S1+seqmatch", "hvpr"})
      o.require(fwd.at(m) - rev.at(m) > s5_drop, std::string(m) + " degrades more than S5");
    o.require(std::abs(rev.at("hvpr+revseqmatch") - fwd.at("hvpr")) <= 0.05,
              "reverse sequence matching restores HVPR to within 0.05");
    o.detail << " forward" << fmt(fwd, {"S5", "single+seqmatch", "S1+seqmatch", "hvpr"}) << " | reversed"
             << fmt(rev, {"S5", "single+seqmatch", "S1+seqmatch", "hvpr", "hvpr+revseqmatch"});
  });

  all &= run_criterion(7, "synth, train, eval are byte-deterministic", 120.0, [](Outcome& o) {
    const auto base = fs::temp_directory_path() / "seqnet_acceptance_determinism";
    std::ostringstream log;
    const bool ok = pipeline(base / "a", log) && pipeline(base / "b", log);
    o.require(ok, "pipeline ran" + log.str());
    if (!ok) return;
    const auto a = directory_bytes(base / "a");
    const auto b = directory_bytes(base / "b");
    bool has_outputs = false;
    for (const auto& [name, bytes] : a)
      has_outputs = has_outputs || name.find("reports.csv") != std::string::npos;
    o.require(has_outputs, "reports written");
    o.require(a == b, "every output file identical");
    o.detail << " files=" << a.size();
    fs::remove_all(base);
  });

  all &= run_criterion(8, "invariant property suites", 120.0, [&](Outcome& o) {
    if (argc < 2) {
      o.require(false, "path to the unit test binary not given");
      return;
    }
    const std::string cmd = std::string("\"") + argv[1] + "\" --minimal --no-version";
    const int status = std::system(cmd.c_str());
    o.require(status == 0, "unit and property suites pass");

    // Spot checks on fresh seeds, independent of the unit suites.
    std::mt19937_64 rng(808);
    auto m = init_model(10, 6, 3, 5, 77);
    bool unit = true;
    for (int i = 0; i < 50; ++i) {
      const auto y = forward(m, random_input(5, 10, rng));
      unit = unit && std::abs(dot(y, y) - 1.0) < 1e-12;
    }
    o.require(unit, "unit-norm outputs");

    const auto ref = per_frame(60, 5, rng);
    const auto qry = per_frame(60, 5, rng);
    bool additive = true;
    for (std::size_t i = 10; i < 60; i += 7)
      for (std::size_t k = 10; k < 60; k += 5) {
        double sum = 0.0;
        for (std::size_t t = 0; t < 6; ++t) sum += seqmatch_score(ref, qry, i - t, k - t, 1);
        additive = additive && std::abs(sum - seqmatch_score(ref, qry, i, k, 6)) < 1e-9;
      }
    o.require(additive, "sequence score is additive over the window");

    TrainConfig cfg;
    bool schedule = true;
    for (std::size_t e = 0; e < 200; ++e) schedule = schedule && lr_at_epoch(e, cfg) == cfg.lr0 * std::ldexp(1.0, -int(e / 50));
    o.require(schedule, "learning-rate schedule exact");
  });

  std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << std::endl;
  return all ? 0 : 1;
}
